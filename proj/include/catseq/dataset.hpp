#pragma once

// Event datasets, per-event encodings and label assignments, plus their file
// formats: datasets as JSON-Lines, encodings and labels as CSV.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "catseq/numcore.hpp"

namespace catseq {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Sequence {
    std::string patient_id;
    std::vector<int> events;
    std::vector<int> categories;  ///< empty unless the data is multivariate
    std::vector<int> groups;      ///< empty unless ground truth is known

    std::size_t size() const { return events.size(); }
    bool has_categories() const { return !categories.empty(); }
    bool has_groups() const { return !groups.empty(); }

    /// Code of categorical field `field` (0 = event, 1 = category) at position i.
    int field(std::size_t f, std::size_t i) const { return f == 0 ? events[i] : categories[i]; }
};

struct EventDataset {
    std::vector<Sequence> sequences;
    std::vector<int> vocab_sizes;  ///< one entry per categorical field
    int group_count = 0;           ///< 0 when unknown

    std::size_t field_count() const { return vocab_sizes.size(); }

    std::size_t event_count() const {
        std::size_t n = 0;
        for (const auto& s : sequences) n += s.size();
        return n;
    }

    bool has_groups() const {
        return !sequences.empty() &&
               std::all_of(sequences.begin(), sequences.end(), [](const Sequence& s) { return s.has_groups(); });
    }

    /// Checks lengths, code ranges and field consistency.
    void validate() const {
        if (vocab_sizes.empty()) throw FormatError("dataset: no categorical fields declared");
        for (const auto& s : sequences) {
            if (vocab_sizes.size() > 1 && s.categories.size() != s.events.size())
                throw FormatError("dataset: patient " + s.patient_id + " lacks categories for every event");
            if (vocab_sizes.size() == 1 && s.has_categories())
                throw FormatError("dataset: patient " + s.patient_id + " has categories but only one field is declared");
            if (s.has_groups() && s.groups.size() != s.events.size())
                throw FormatError("dataset: patient " + s.patient_id + " has mismatched group length");
            for (std::size_t f = 0; f < vocab_sizes.size(); ++f)
                for (std::size_t i = 0; i < s.size(); ++i) {
                    const int c = s.field(f, i);
                    if (c < 0 || c >= vocab_sizes[f])
                        throw FormatError("dataset: code " + std::to_string(c) + " out of range in patient " +
                                          s.patient_id);
                }
            for (int g : s.groups)
                if (g < 0 || (group_count > 0 && g >= group_count))
                    throw FormatError("dataset: group id out of range in patient " + s.patient_id);
        }
    }

    /// Concatenated true groups over all events, in sequence order.
    std::vector<int> flat_groups() const {
        std::vector<int> out;
        out.reserve(event_count());
        for (const auto& s : sequences) out.insert(out.end(), s.groups.begin(), s.groups.end());
        return out;
    }
};

inline void write_jsonl(std::ostream& os, const EventDataset& ds) {
    for (const auto& s : ds.sequences) {
        nlohmann::json j;
        j["patient_id"] = s.patient_id;
        j["events"] = s.events;
        if (s.has_categories()) j["categories"] = s.categories;
        if (s.has_groups()) j["groups"] = s.groups;
        os << j.dump() << '\n';
    }
}

/// Reads one patient object per line. Vocabulary sizes are inferred as
/// max code + 1 unless `vocab_sizes` is supplied.
inline EventDataset read_jsonl(std::istream& is, std::vector<int> vocab_sizes = {}) {
    EventDataset ds;
    std::string line;
    std::size_t lineno = 0;
    int max_event = -1, max_cat = -1, max_group = -1;
    bool any_categories = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("jsonl line " + std::to_string(lineno) + ": " + e.what());
        }
        for (const auto& [key, _] : j.items())
            if (key != "patient_id" && key != "events" && key != "categories" && key != "groups")
                throw FormatError("jsonl line " + std::to_string(lineno) + ": unknown field '" + key + "'");
        if (!j.contains("patient_id") || !j.contains("events"))
            throw FormatError("jsonl line " + std::to_string(lineno) + ": missing patient_id or events");
        Sequence s;
        s.patient_id = j["patient_id"].is_string() ? j["patient_id"].get<std::string>() : j["patient_id"].dump();
        s.events = j["events"].get<std::vector<int>>();
        if (j.contains("categories")) {
            s.categories = j["categories"].get<std::vector<int>>();
            any_categories = true;
        }
        if (j.contains("groups")) s.groups = j["groups"].get<std::vector<int>>();
        for (int e : s.events) max_event = std::max(max_event, e);
        for (int c : s.categories) max_cat = std::max(max_cat, c);
        for (int g : s.groups) max_group = std::max(max_group, g);
        ds.sequences.push_back(std::move(s));
    }
    if (ds.sequences.empty()) throw FormatError("jsonl: no patients in input");
    if (vocab_sizes.empty()) {
        vocab_sizes.push_back(max_event + 1);
        if (any_categories) vocab_sizes.push_back(max_cat + 1);
    }
    ds.vocab_sizes = std::move(vocab_sizes);
    ds.group_count = max_group + 1;
    ds.validate();
    return ds;
}

inline void save_jsonl(const std::string& path, const EventDataset& ds) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    write_jsonl(os, ds);
}

inline EventDataset load_jsonl(const std::string& path, std::vector<int> vocab_sizes = {}) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path);
    return read_jsonl(is, std::move(vocab_sizes));
}

/// Identifies one event inside a dataset.
struct EventRef {
    std::string patient_id;
    int position = 0;

    friend bool operator==(const EventRef&, const EventRef&) = default;
};

/// One representation vector per covered event.
struct EncodedEvents {
    std::vector<EventRef> refs;
    Tensor vectors;  ///< refs.size() x dim

    std::size_t size() const { return refs.size(); }
    std::size_t dim() const { return vectors.cols(); }
};

/// Per-event integer labels; -1 marks noise.
struct LabelAssignment {
    static constexpr int noise = -1;

    std::vector<EventRef> refs;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        const auto b = f.find_first_not_of(' ');
        const auto e = f.find_last_not_of(' ');
        f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
    }
    return out;
}

inline double parse_double(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw FormatError("bad number '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        throw FormatError("bad number '" + s + "'");
    }
}

inline int parse_int(const std::string& s) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw FormatError("bad integer '" + s + "'");
    return v;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline void write_encoded_csv(std::ostream& os, const EncodedEvents& enc) {
    os << "patient_id,position";
    for (std::size_t k = 0; k < enc.dim(); ++k) os << ",v" << k;
    os << '\n';
    for (std::size_t i = 0; i < enc.size(); ++i) {
        os << enc.refs[i].patient_id << ',' << enc.refs[i].position;
        for (std::size_t k = 0; k < enc.dim(); ++k) os << ',' << detail::format_double(enc.vectors(i, k));
        os << '\n';
    }
}

inline EncodedEvents read_encoded_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("encoded csv: empty input");
    const auto header = detail::split_csv(line);
    if (header.size() < 3 || header[0] != "patient_id" || header[1] != "position")
        throw FormatError("encoded csv: expected header patient_id,position,v0,...");
    const std::size_t dim = header.size() - 2;
    for (std::size_t k = 0; k < dim; ++k)
        if (header[k + 2] != "v" + std::to_string(k)) throw FormatError("encoded csv: bad column " + header[k + 2]);
    EncodedEvents enc;
    std::vector<double> values;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = detail::split_csv(line);
        if (f.size() != dim + 2) throw FormatError("encoded csv: wrong field count in row " + std::to_string(enc.refs.size() + 1));
        enc.refs.push_back({f[0], detail::parse_int(f[1])});
        for (std::size_t k = 0; k < dim; ++k) values.push_back(detail::parse_double(f[k + 2]));
    }
    if (enc.refs.empty()) throw FormatError("encoded csv: no rows");
    enc.vectors = Tensor({enc.refs.size(), dim}, std::move(values));
    return enc;
}

inline void write_labels_csv(std::ostream& os, const LabelAssignment& la) {
    os << "patient_id,position,label\n";
    for (std::size_t i = 0; i < la.size(); ++i)
        os << la.refs[i].patient_id << ',' << la.refs[i].position << ',' << la.labels[i] << '\n';
}

inline LabelAssignment read_labels_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("label csv: empty input");
    const auto header = detail::split_csv(line);
    if (header != std::vector<std::string>{"patient_id", "position", "label"})
        throw FormatError("label csv: expected header patient_id,position,label");
    LabelAssignment la;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = detail::split_csv(line);
        if (f.size() != 3) throw FormatError("label csv: wrong field count in row " + std::to_string(la.size() + 1));
        la.refs.push_back({f[0], detail::parse_int(f[1])});
        la.labels.push_back(detail::parse_int(f[2]));
    }
    if (la.labels.empty()) throw FormatError("label csv: no rows");
    return la;
}

template <typename T, typename Writer>
void save_with(const std::string& path, const T& value, Writer writer) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    writer(os, value);
}

template <typename Reader>
auto load_with(const std::string& path, Reader reader) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path);
    return reader(is);
}

/// Ground-truth labels for every event of a dataset with known groups.
inline LabelAssignment truth_labels(const EventDataset& ds) {
    LabelAssignment la;
    for (const auto& s : ds.sequences) {
        if (!s.has_groups()) throw FormatError("truth_labels: patient " + s.patient_id + " has no groups");
        for (std::size_t i = 0; i < s.size(); ++i) {
            la.refs.push_back({s.patient_id, static_cast<int>(i)});
            la.labels.push_back(s.groups[i]);
        }
    }
    return la;
}

/// Pairs two label files by (patient, position); rows missing from either are dropped.
inline std::pair<std::vector<int>, std::vector<int>> align_labels(const LabelAssignment& a, const LabelAssignment& b) {
    std::map<std::pair<std::string, int>, int> index;
    for (std::size_t i = 0; i < b.size(); ++i) index[{b.refs[i].patient_id, b.refs[i].position}] = b.labels[i];
    std::pair<std::vector<int>, std::vector<int>> out;
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto it = index.find({a.refs[i].patient_id, a.refs[i].position});
        if (it == index.end()) continue;
        out.first.push_back(a.labels[i]);
        out.second.push_back(it->second);
    }
    return out;
}

}  // namespace catseq

#pragma once

// Ingestion of real event-sequence data. Raw codes are arbitrary strings and
// get mapped to dense ids in order of first appearance.
//
// CSV input is long format: one row per event, rows of a patient in event
// order (or sorted by `order_field` when given). JSON-Lines input is one
// patient per line with an array of codes per field.

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "catseq/dataset.hpp"

namespace catseq {

struct IngestSchema {
    std::string patient_field = "patient_id";
    std::string event_field = "event";
    std::string category_field;  ///< optional secondary categorical field
    std::string order_field;     ///< optional numeric sort key (CSV only)
    std::size_t min_length = 16; ///< sequences of this length or shorter are dropped
};

/// Dense code <-> id mapping, one table per categorical field.
struct Vocabulary {
    std::vector<std::string> field_names;
    std::vector<std::vector<std::string>> codes;

    int id(std::size_t field, const std::string& code) {
        auto& index = lookup_.at(field);
        auto it = index.find(code);
        if (it != index.end()) return it->second;
        const int next = static_cast<int>(codes[field].size());
        codes[field].push_back(code);
        index.emplace(code, next);
        return next;
    }

    void add_field(std::string name) {
        field_names.push_back(std::move(name));
        codes.emplace_back();
        lookup_.emplace_back();
    }

    std::vector<int> sizes() const {
        std::vector<int> out;
        for (const auto& c : codes) out.push_back(static_cast<int>(c.size()));
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json fields = nlohmann::json::array();
        for (std::size_t f = 0; f < codes.size(); ++f) fields.push_back({{"name", field_names[f]}, {"codes", codes[f]}});
        return {{"format", "catseq.vocabulary"}, {"version", 1}, {"fields", fields}};
    }

    static Vocabulary from_json(const nlohmann::json& j) {
        if (j.value("format", "") != "catseq.vocabulary") throw FormatError("vocabulary: wrong format tag");
        Vocabulary v;
        for (const auto& f : j.at("fields")) {
            v.add_field(f.at("name").get<std::string>());
            for (const auto& c : f.at("codes")) v.id(v.codes.size() - 1, c.get<std::string>());
        }
        return v;
    }

private:
    std::vector<std::unordered_map<std::string, int>> lookup_;
};

struct IngestResult {
    EventDataset dataset;
    Vocabulary vocabulary;
    std::size_t dropped = 0;
    std::vector<std::string> warnings;
};

namespace detail {

struct RawSequence {
    std::string patient_id;
    std::vector<std::string> events, categories;
};

inline IngestResult finish_ingest(std::vector<RawSequence> raw, const IngestSchema& schema) {
    IngestResult r;
    r.vocabulary.add_field(schema.event_field);
    const bool multi = !schema.category_field.empty();
    if (multi) r.vocabulary.add_field(schema.category_field);
    for (auto& s : raw) {
        if (s.events.size() <= schema.min_length) {
            ++r.dropped;
            continue;
        }
        Sequence seq;
        seq.patient_id = s.patient_id;
        for (const auto& e : s.events) seq.events.push_back(r.vocabulary.id(0, e));
        if (multi)
            for (const auto& c : s.categories) seq.categories.push_back(r.vocabulary.id(1, c));
        r.dataset.sequences.push_back(std::move(seq));
    }
    r.dataset.vocab_sizes = r.vocabulary.sizes();
    if (r.dropped > 0)
        r.warnings.push_back(std::to_string(r.dropped) + " sequence(s) with " + std::to_string(schema.min_length) +
                             " or fewer events dropped");
    if (r.dataset.sequences.empty()) r.warnings.push_back("no sequences left after length filtering");
    else r.dataset.validate();
    return r;
}

}  // namespace detail

inline IngestResult ingest_csv(std::istream& is, const IngestSchema& schema) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("ingest: empty file");
    const auto header = detail::split_csv(line);
    int pcol = -1, ecol = -1, ccol = -1, ocol = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto& h = header[i];
        const int c = static_cast<int>(i);
        if (h == schema.patient_field) pcol = c;
        else if (h == schema.event_field) ecol = c;
        else if (!schema.category_field.empty() && h == schema.category_field) ccol = c;
        else if (!schema.order_field.empty() && h == schema.order_field) ocol = c;
        else throw FormatError("ingest: unknown column '" + h + "'");
    }
    if (pcol < 0 || ecol < 0) throw FormatError("ingest: header lacks '" + schema.patient_field + "' or '" + schema.event_field + "'");
    if (!schema.category_field.empty() && ccol < 0) throw FormatError("ingest: header lacks '" + schema.category_field + "'");
    if (!schema.order_field.empty() && ocol < 0) throw FormatError("ingest: header lacks '" + schema.order_field + "'");

    std::vector<detail::RawSequence> raw;
    std::vector<std::vector<double>> keys;
    std::map<std::string, std::size_t> index;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != header.size()) throw FormatError("ingest: line " + std::to_string(lineno) + " has wrong field count");
        auto [it, fresh] = index.emplace(f[static_cast<std::size_t>(pcol)], raw.size());
        if (fresh) {
            raw.push_back({f[static_cast<std::size_t>(pcol)], {}, {}});
            keys.emplace_back();
        }
        auto& s = raw[it->second];
        s.events.push_back(f[static_cast<std::size_t>(ecol)]);
        if (ccol >= 0) s.categories.push_back(f[static_cast<std::size_t>(ccol)]);
        if (ocol >= 0) keys[it->second].push_back(detail::parse_double(f[static_cast<std::size_t>(ocol)]));
    }
    if (raw.empty()) throw FormatError("ingest: no events in input");
    if (ocol >= 0)
        for (std::size_t p = 0; p < raw.size(); ++p) {
            std::vector<std::size_t> perm(raw[p].events.size());
            std::iota(perm.begin(), perm.end(), 0);
            std::stable_sort(perm.begin(), perm.end(), [&](auto a, auto b) { return keys[p][a] < keys[p][b]; });
            auto reorder = [&](std::vector<std::string>& v) {
                if (v.empty()) return;
                std::vector<std::string> out;
                for (auto i : perm) out.push_back(std::move(v[i]));
                v = std::move(out);
            };
            reorder(raw[p].events);
            reorder(raw[p].categories);
        }
    return detail::finish_ingest(std::move(raw), schema);
}

inline IngestResult ingest_jsonl(std::istream& is, const IngestSchema& schema) {
    std::vector<detail::RawSequence> raw;
    std::string line;
    std::size_t lineno = 0;
    auto as_code = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("ingest: line " + std::to_string(lineno) + ": " + e.what());
        }
        for (const auto& [key, _] : j.items())
            if (key != schema.patient_field && key != schema.event_field &&
                (schema.category_field.empty() || key != schema.category_field))
                throw FormatError("ingest: line " + std::to_string(lineno) + ": unknown field '" + key + "'");
        if (!j.contains(schema.patient_field) || !j.contains(schema.event_field))
            throw FormatError("ingest: line " + std::to_string(lineno) + " lacks patient id or events");
        detail::RawSequence s;
        s.patient_id = as_code(j[schema.patient_field]);
        for (const auto& e : j[schema.event_field]) s.events.push_back(as_code(e));
        if (!schema.category_field.empty()) {
            if (!j.contains(schema.category_field))
                throw FormatError("ingest: line " + std::to_string(lineno) + " lacks '" + schema.category_field + "'");
            for (const auto& c : j[schema.category_field]) s.categories.push_back(as_code(c));
            if (s.categories.size() != s.events.size())
                throw FormatError("ingest: line " + std::to_string(lineno) + " has mismatched field lengths");
        }
        raw.push_back(std::move(s));
    }
    if (raw.empty()) throw FormatError("ingest: empty file");
    return detail::finish_ingest(std::move(raw), schema);
}

/// Dispatches on extension: .jsonl / .json are JSON-Lines, anything else CSV.
inline IngestResult ingest(const std::string& path, const IngestSchema& schema) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path);
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    return ext == ".jsonl" || ext == ".json" ? ingest_jsonl(is, schema) : ingest_csv(is, schema);
}

/// Writes a dataset back in the long CSV layout using the original codes.
inline void export_csv(std::ostream& os, const EventDataset& ds, const Vocabulary& vocab, const IngestSchema& schema) {
    const bool multi = !schema.category_field.empty() && vocab.codes.size() > 1;
    os << schema.patient_field << ',' << schema.event_field;
    if (multi) os << ',' << schema.category_field;
    os << '\n';
    for (const auto& s : ds.sequences)
        for (std::size_t i = 0; i < s.size(); ++i) {
            os << s.patient_id << ',' << vocab.codes[0].at(static_cast<std::size_t>(s.events[i]));
            if (multi) os << ',' << vocab.codes[1].at(static_cast<std::size_t>(s.categories[i]));
            os << '\n';
        }
}

}  // namespace catseq

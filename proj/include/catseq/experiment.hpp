#pragma once

// Experiment orchestration: one grid cell end to end (synthetic data, CaSE,
// HDBSCAN + PHC, LDA baseline), the grid itself, and the visual experiment.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "catseq/cat2vec.hpp"
#include "catseq/config.hpp"
#include "catseq/dataset.hpp"
#include "catseq/hdbscan.hpp"
#include "catseq/lda.hpp"
#include "catseq/metrics.hpp"
#include "catseq/pca.hpp"
#include "catseq/seq2seq.hpp"
#include "catseq/syngen.hpp"

namespace catseq {

/// A pipeline stage failed; `stage` names it.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage(std::move(stage)) {}
    std::string stage;
};

/// Seed streams for the stochastic stages of one run.
enum SeedStream : std::uint64_t { cat2vec_init = 101, cat2vec_train, seq2seq_init, seq2seq_train, lda_chain };

namespace detail {

template <class F>
auto stage(const char* name, double& seconds, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        } else {
            auto r = f();
            seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            return r;
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

inline double ami_aligned(const LabelAssignment& truth, const LabelAssignment& pred,
                          NoiseMode noise = NoiseMode::include) {
    const auto [t, p] = align_labels(truth, pred);
    return ami(t, p, noise);
}

}  // namespace detail

/// Trained CaSE models plus per-event representations.
struct CaseModels {
    Cat2Vec cat2vec;
    Seq2Seq seq2seq;
    TrainReport cat2vec_report, seq2seq_report;
    EncodedEvents encodings;        ///< Cat2Vec, every event
    EncodedEvents representations;  ///< Seq2Seq, events of sequences >= window_len
};

inline CaseModels train_case(const ExperimentConfig& cfg, const EventDataset& ds, std::uint64_t seed,
                             std::map<std::string, double>* timings = nullptr) {
    double t_c2v = 0, t_s2s = 0, t_rep = 0;
    Cat2Vec c2v(cfg.cat2vec_config(ds.vocab_sizes.at(0)), derive_seed(seed, cat2vec_init));
    if (ds.field_count() > 1) {
        auto c = cfg.cat2vec_config(ds.vocab_sizes[0]);
        c.input_dims = ds.vocab_sizes;
        c2v = Cat2Vec(c, derive_seed(seed, cat2vec_init));
    }
    TrainOptions o1 = cfg.cat2vec.train;
    o1.seed = derive_seed(seed, cat2vec_train);
    auto r1 = detail::stage("cat2vec", t_c2v, [&] { return c2v.train(ds, o1); });
    Seq2Seq s2s(cfg.transformer_config(), derive_seed(seed, seq2seq_init));
    TrainOptions o2 = cfg.seq2seq.train;
    o2.seed = derive_seed(seed, seq2seq_train);
    const auto L = static_cast<std::size_t>(cfg.seq2seq.model.window_len);
    auto r2 = detail::stage("seq2seq", t_s2s, [&] {
        auto windows = extract_windows(c2v, ds, L, static_cast<std::size_t>(cfg.seq2seq.train_stride));
        return s2s.train(windows, o2);
    });
    EncodedEvents enc, rep;
    detail::stage("represent", t_rep, [&] {
        enc = encode_dataset(c2v, ds);
        rep = event_representations(ds, c2v, s2s, static_cast<std::size_t>(cfg.seq2seq.represent_stride));
    });
    if (timings) {
        (*timings)["cat2vec"] = t_c2v;
        (*timings)["seq2seq"] = t_s2s;
        (*timings)["represent"] = t_rep;
    }
    return {std::move(c2v), std::move(s2s), std::move(r1), std::move(r2), std::move(enc), std::move(rep)};
}

struct CellRun {
    int groups = 0, vocab = 0;
    std::uint64_t seed = 0;
    double ami_lda_window = 0, ami_lda_event = 0, ami_case = 0, ami_case_phc = 0;
    std::optional<double> ami_case_excluding_noise;  ///< empty when every event is noise
    int clusters = 0;
    std::size_t noise = 0, relabeled = 0;
    std::map<std::string, double> seconds;
    std::string failed_stage, error;

    bool ok() const { return error.empty(); }

    nlohmann::json to_json() const {
        nlohmann::json j{{"groups", groups}, {"vocab", vocab}, {"seed", seed}};
        if (!ok()) {
            j["failed_stage"] = failed_stage;
            j["error"] = error;
            return j;
        }
        j["ami"] = {{"lda_window", ami_lda_window},
                    {"lda_event", ami_lda_event},
                    {"case_event", ami_case},
                    {"case_event_excluding_noise", ami_case_excluding_noise ? nlohmann::json(*ami_case_excluding_noise)
                                                                            : nlohmann::json(nullptr)},
                    {"case_phc_event", ami_case_phc}};
        j["clusters"] = clusters;
        j["noise"] = noise;
        j["phc_relabeled"] = relabeled;
        j["seconds"] = seconds;
        return j;
    }
};

/// Intermediate labels of a cell, kept on request for inspection.
struct CellArtifacts {
    EncodedEvents representations;
    std::vector<int> labels, phc_labels;
};

/// One (|G|, |E|, seed) cell: never throws, failures are recorded.
inline CellRun run_cell(const ExperimentConfig& cfg, int groups, int vocab, std::uint64_t seed,
                        CellArtifacts* keep = nullptr) {
    CellRun run;
    run.groups = groups;
    run.vocab = vocab;
    run.seed = seed;
    try {
        double t = 0;
        const auto ds = detail::stage("synth", t, [&] { return generate_dataset(cfg.synth(groups, vocab, seed)); });
        run.seconds["synth"] = t;
        const auto truth = truth_labels(ds);

        auto models = train_case(cfg, ds, seed, &run.seconds);
        const auto& rep = models.representations;
        const auto labels = detail::stage("hdbscan", run.seconds["hdbscan"],
                                          [&] { return hdbscan(rep.vectors, cfg.hdbscan_params()); });
        const auto fixed = detail::stage("phc", run.seconds["phc"], [&] { return phc(labels, rep.vectors, cfg.cluster.phc_k); });
        for (int l : labels) {
            if (l < 0) ++run.noise;
            run.clusters = std::max(run.clusters, l + 1);
        }
        run.relabeled = fixed.relabeled;
        if (keep) *keep = {rep, labels, fixed.labels};
        run.ami_case = detail::ami_aligned(truth, {rep.refs, labels});
        run.ami_case_phc = detail::ami_aligned(truth, {rep.refs, fixed.labels});
        if (run.noise < labels.size())
            run.ami_case_excluding_noise = detail::ami_aligned(truth, {rep.refs, labels}, NoiseMode::exclude);

        detail::stage("lda", run.seconds["lda"], [&] {
            const auto corpus = make_windows(ds, static_cast<std::size_t>(cfg.lda.window_len),
                                             static_cast<std::size_t>(cfg.lda.stride));
            const auto model = lda_fit(corpus, cfg.lda_config(groups, derive_seed(seed, lda_chain)));
            const auto topics = window_topics(model);
            run.ami_lda_event = detail::ami_aligned(truth, event_labels(ds, corpus, topics));
            run.ami_lda_window = ami(window_level_truth(ds, corpus), topics);
        });
    } catch (const StageError& e) {
        run.failed_stage = e.stage;
        run.error = e.what();
    } catch (const std::exception& e) {
        run.failed_stage = "unknown";
        run.error = e.what();
    }
    return run;
}

/// Results of the whole grid: every (cell, seed) run plus per-cell means.
struct ResultsRecord {
    static constexpr int schema_version = 1;
    nlohmann::json config;
    std::string config_text;
    std::vector<CellRun> runs;

    nlohmann::json to_json() const {
        nlohmann::json cells = nlohmann::json::array();
        std::map<std::pair<int, int>, std::vector<const CellRun*>> by_cell;
        std::vector<std::pair<int, int>> order;
        for (const auto& r : runs) {
            auto key = std::make_pair(r.groups, r.vocab);
            if (!by_cell.count(key)) order.push_back(key);
            by_cell[key].push_back(&r);
        }
        for (const auto& key : order) {
            nlohmann::json cell{{"groups", key.first}, {"vocab", key.second}};
            nlohmann::json seeds = nlohmann::json::array();
            double m[4] = {0, 0, 0, 0};
            int ok = 0;
            bool phc_not_worse = true;
            for (const auto* r : by_cell[key]) {
                seeds.push_back(r->to_json());
                if (!r->ok()) continue;
                ++ok;
                m[0] += r->ami_lda_window;
                m[1] += r->ami_lda_event;
                m[2] += r->ami_case;
                m[3] += r->ami_case_phc;
                phc_not_worse = phc_not_worse && r->ami_case_phc >= r->ami_case;
            }
            cell["runs"] = seeds;
            cell["completed"] = ok;
            if (ok > 0)
                cell["mean"] = {{"lda_window", m[0] / ok}, {"lda_event", m[1] / ok}, {"case_event", m[2] / ok},
                                {"case_phc_event", m[3] / ok}};
            cell["phc_not_worse"] = phc_not_worse;
            cells.push_back(cell);
        }
        return {{"schema", "catseq.results"}, {"version", schema_version}, {"config", config},
                {"config_text", config_text}, {"seeds", config.at("seeds")}, {"cells", cells}};
    }
};

/// Runs every (|G|, |E|) cell for every seed using up to `grid.workers` threads.
inline ResultsRecord run_grid(const ExperimentConfig& cfg, const std::string& config_text = {},
                              const std::function<void(const CellRun&)>& on_run = {}) {
    cfg.validate();
    struct Job {
        int groups, vocab;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (int g : cfg.grid.groups)
        for (int e : cfg.grid.vocab)
            for (auto s : cfg.seeds) jobs.push_back({g, e, s});
    ResultsRecord rec;
    rec.config = cfg.to_json();
    rec.config_text = config_text;
    rec.runs.resize(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex report;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            rec.runs[i] = run_cell(cfg, jobs[i].groups, jobs[i].vocab, jobs[i].seed);
            if (on_run) {
                std::lock_guard lock(report);
                on_run(rec.runs[i]);
            }
        }
    };
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(cfg.grid.workers), jobs.size());
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return rec;
}

struct VisualResult {
    double separation_cat2vec = 0, separation_seq2seq = 0;
    double separation_cat2vec_pca = 0, separation_seq2seq_pca = 0;
    std::vector<std::string> files;

    nlohmann::json to_json() const {
        return {{"separation",
                 {{"cat2vec", separation_cat2vec},
                  {"seq2seq", separation_seq2seq},
                  {"cat2vec_pca", separation_cat2vec_pca},
                  {"seq2seq_pca", separation_seq2seq_pca}}},
                {"files", files}};
    }
};

/// Encodes one synthetic dataset with both models and writes, under `dir`:
/// cat2vec.csv, seq2seq.csv, pca.csv (both projections) and truth.csv.
inline VisualResult run_visual(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& dir) {
    cfg.validate();
    double t = 0;
    const auto ds = detail::stage("synth", t, [&] { return generate_dataset(cfg.synth(seed)); });
    const auto truth = truth_labels(ds);
    auto models = train_case(cfg, ds, seed);
    const auto& enc = models.encodings;
    const auto& rep = models.representations;

    VisualResult r;
    auto [tc, _a] = align_labels(truth, {enc.refs, std::vector<int>(enc.size(), 0)});
    auto [ts, _b] = align_labels(truth, {rep.refs, std::vector<int>(rep.size(), 0)});
    PcaResult pc, ps;
    detail::stage("pca", t, [&] {
        pc = pca2d(enc.vectors);
        ps = pca2d(rep.vectors);
    });
    r.separation_cat2vec = separation_ratio(enc.vectors, tc);
    r.separation_seq2seq = separation_ratio(rep.vectors, ts);
    r.separation_cat2vec_pca = separation_ratio(pc.coords, tc);
    r.separation_seq2seq_pca = separation_ratio(ps.coords, ts);

    detail::stage("write", t, [&] {
        std::filesystem::create_directories(dir);
        auto open = [&](const std::string& name) {
            const auto path = (std::filesystem::path(dir) / name).string();
            std::ofstream os(path);
            if (!os) throw std::runtime_error("cannot open " + path);
            r.files.push_back(path);
            return os;
        };
        {
            auto os = open("cat2vec.csv");
            write_encoded_csv(os, enc);
        }
        {
            auto os = open("seq2seq.csv");
            write_encoded_csv(os, rep);
        }
        {
            // Seq2Seq skips sequences shorter than the window, so join on refs.
            std::map<std::pair<std::string, int>, std::size_t> srow;
            for (std::size_t i = 0; i < rep.size(); ++i) srow[{rep.refs[i].patient_id, rep.refs[i].position}] = i;
            auto os = open("pca.csv");
            os << "patient_id,position,cat2vec_x,cat2vec_y,seq2seq_x,seq2seq_y\n";
            for (std::size_t i = 0; i < enc.size(); ++i) {
                os << enc.refs[i].patient_id << ',' << enc.refs[i].position << ','
                   << detail::format_double(pc.coords(i, 0)) << ',' << detail::format_double(pc.coords(i, 1));
                auto it = srow.find({enc.refs[i].patient_id, enc.refs[i].position});
                if (it != srow.end())
                    os << ',' << detail::format_double(ps.coords(it->second, 0)) << ','
                       << detail::format_double(ps.coords(it->second, 1));
                else
                    os << ",,";
                os << '\n';
            }
        }
        {
            auto os = open("truth.csv");
            write_labels_csv(os, truth);
        }
    });
    return r;
}

}  // namespace catseq

// catseq command-line driver. Exit codes: 0 ok, 1 configuration or usage
// error, 2 a pipeline stage failed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "catseq/cat2vec.hpp"
#include "catseq/config.hpp"
#include "catseq/dataset.hpp"
#include "catseq/experiment.hpp"
#include "catseq/hdbscan.hpp"
#include "catseq/ingest.hpp"
#include "catseq/lda.hpp"
#include "catseq/metrics.hpp"
#include "catseq/pca.hpp"
#include "catseq/seq2seq.hpp"
#include "catseq/serialize.hpp"
#include "catseq/syngen.hpp"

using namespace catseq;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::ofstream open_out(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return is;
}

// Config file plus the --seed override shared by most subcommands.
struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string raw;

    ExperimentConfig load() {
        if (config_path.empty()) return parse_config("");
        return load_config(config_path, &raw);
    }

    std::uint64_t seed_or(const ExperimentConfig& c) const { return seed ? *seed : c.seeds.front(); }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("-c,--config", c.config_path, "YAML experiment config");
    app->add_option("--seed", c.seed, "seed (default: first seed of the config)");
}

void log_epoch(const char* model, int epoch, double loss) {
    std::fprintf(stderr, "%s epoch %d loss %.6g\n", model, epoch + 1, loss);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Treatment-group discovery in categorical event sequences"};
    app.require_subcommand(1);
    Common common;

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset as JSON-Lines");
    add_common(synth, common);
    std::string data_out;
    std::optional<int> groups, vocab, patients, seq_len;
    synth->add_option("-o,--out", data_out, "output .jsonl")->required();
    synth->add_option("--groups", groups, "treatment groups");
    synth->add_option("--vocab", vocab, "event vocabulary size");
    synth->add_option("--patients", patients);
    synth->add_option("--length", seq_len, "events per patient");

    // train-cat2vec
    auto* tc2v = app.add_subcommand("train-cat2vec", "train the event encoder");
    add_common(tc2v, common);
    std::string data_in, model_out;
    tc2v->add_option("-d,--data", data_in, "dataset .jsonl")->required();
    tc2v->add_option("-o,--out", model_out, "model .json")->required();

    // train-seq2seq
    auto* ts2s = app.add_subcommand("train-seq2seq", "train the window autoencoder");
    add_common(ts2s, common);
    std::string c2v_path, s2s_path;
    ts2s->add_option("-d,--data", data_in, "dataset .jsonl")->required();
    ts2s->add_option("--cat2vec", c2v_path, "trained cat2vec .json")->required();
    ts2s->add_option("-o,--out", model_out, "model .json")->required();

    // represent
    auto* rep = app.add_subcommand("represent", "write per-event encodings as CSV");
    add_common(rep, common);
    std::string csv_out;
    std::optional<int> stride;
    rep->add_option("-d,--data", data_in, "dataset .jsonl")->required();
    rep->add_option("--cat2vec", c2v_path, "trained cat2vec .json")->required();
    rep->add_option("--seq2seq", s2s_path, "trained seq2seq .json (omit for raw cat2vec encodings)");
    rep->add_option("--stride", stride, "window stride for representation averaging");
    rep->add_option("-o,--out", csv_out, "output CSV")->required();

    // cluster
    auto* clu = app.add_subcommand("cluster", "HDBSCAN (+ PHC) over an encoding CSV");
    add_common(clu, common);
    std::string csv_in;
    std::optional<int> mcs, ms, phc_k;
    bool no_phc = false;
    clu->add_option("-i,--input", csv_in, "encoding CSV")->required();
    clu->add_option("-o,--out", csv_out, "labels CSV")->required();
    clu->add_option("--min-cluster-size", mcs);
    clu->add_option("--min-samples", ms);
    clu->add_option("--phc-k", phc_k);
    clu->add_flag("--no-phc", no_phc, "keep noise labels");

    // lda
    auto* lda = app.add_subcommand("lda", "LDA baseline over sliding windows");
    add_common(lda, common);
    std::string summary_out;
    std::optional<int> topics;
    lda->add_option("-d,--data", data_in, "dataset .jsonl")->required();
    lda->add_option("-o,--out", csv_out, "event labels CSV")->required();
    lda->add_option("--summary", summary_out, "JSON with window topics and AMI (when groups are known)");
    lda->add_option("--topics", topics);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "AMI of predicted labels against the truth");
    std::string truth_in, pred_in;
    bool exclude_noise = false;
    ev->add_option("--truth", truth_in, "truth labels CSV or dataset .jsonl")->required();
    ev->add_option("--pred", pred_in, "predicted labels CSV")->required();
    ev->add_flag("--exclude-noise", exclude_noise, "drop events predicted as noise");

    // grid
    auto* grid = app.add_subcommand("grid", "run the |G| x |E| grid");
    add_common(grid, common);
    std::string results_out;
    grid->add_option("-o,--out", results_out, "results .json (default: <output>/results.json)");

    // visual
    auto* vis = app.add_subcommand("visual", "encodings, PCA projections and truth for plotting");
    add_common(vis, common);
    std::string dir_out;
    vis->add_option("-o,--out", dir_out, "output directory (default: <output>/visual)");

    // ingest
    auto* ing = app.add_subcommand("ingest", "convert real event data to a dataset");
    IngestSchema schema;
    std::string vocab_out;
    ing->add_option("-i,--input", csv_in, "CSV (one row per event) or .jsonl (one patient per line)")->required();
    ing->add_option("-o,--out", data_out, "dataset .jsonl")->required();
    ing->add_option("--vocab-out", vocab_out, "vocabulary .json (default: next to the dataset)");
    ing->add_option("--patient-field", schema.patient_field)->capture_default_str();
    ing->add_option("--event-field", schema.event_field)->capture_default_str();
    ing->add_option("--category-field", schema.category_field);
    ing->add_option("--order-field", schema.order_field, "numeric column to sort events by (CSV)");
    ing->add_option("--min-length", schema.min_length, "drop sequences with this many events or fewer")
        ->capture_default_str();

    // pca
    auto* pca = app.add_subcommand("pca", "2-D PCA projection of an encoding CSV");
    pca->add_option("-i,--input", csv_in, "encoding CSV")->required();
    pca->add_option("-o,--out", csv_out, "projection CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) {
            auto cfg = common.load();
            auto s = cfg.synth(groups.value_or(cfg.group_count), vocab.value_or(cfg.vocab_size), common.seed_or(cfg));
            if (patients) s.patients = *patients;
            if (seq_len) s.seq_len = *seq_len;
            try {
                s.validate();
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
            const auto ds = generate_dataset(s);
            save_jsonl(data_out, ds);
            std::fprintf(stderr, "%zu patients, %zu events\n", ds.sequences.size(), ds.event_count());
        } else if (tc2v->parsed()) {
            auto cfg = common.load();
            const auto ds = load_jsonl(data_in);
            const auto seed = common.seed_or(cfg);
            auto c = cfg.cat2vec_config(ds.vocab_sizes[0]);
            c.input_dims = ds.vocab_sizes;
            Cat2Vec model(c, derive_seed(seed, cat2vec_init));
            auto opt = cfg.cat2vec.train;
            opt.seed = derive_seed(seed, cat2vec_train);
            opt.on_epoch = [](int e, double l) { log_epoch("cat2vec", e, l); };
            const auto report = model.train(ds, opt);
            save_json(model_out, model.to_json());
            std::fprintf(stderr, "cat2vec: %zu epochs, converged=%d\n", report.epoch_losses.size(), report.converged);
        } else if (ts2s->parsed()) {
            auto cfg = common.load();
            const auto ds = load_jsonl(data_in);
            const auto seed = common.seed_or(cfg);
            auto c2v = Cat2Vec::from_json(load_json(c2v_path));
            auto tcfg = cfg.transformer_config();
            tcfg.d_model = c2v.config().encoding_dim;
            Seq2Seq model(tcfg, derive_seed(seed, seq2seq_init));
            auto opt = cfg.seq2seq.train;
            opt.seed = derive_seed(seed, seq2seq_train);
            opt.on_epoch = [](int e, double l) { log_epoch("seq2seq", e, l); };
            const auto windows = extract_windows(c2v, ds, static_cast<std::size_t>(tcfg.window_len),
                                                 static_cast<std::size_t>(cfg.seq2seq.train_stride));
            if (windows.empty()) throw std::runtime_error("seq2seq: no sequence is as long as the window");
            const auto report = model.train(windows, opt);
            save_json(model_out, model.to_json());
            std::fprintf(stderr, "seq2seq: %zu windows, %zu epochs, converged=%d\n", windows.size(),
                         report.epoch_losses.size(), report.converged);
        } else if (rep->parsed()) {
            auto cfg = common.load();
            const auto ds = load_jsonl(data_in);
            auto c2v = Cat2Vec::from_json(load_json(c2v_path));
            EncodedEvents out;
            if (s2s_path.empty()) {
                out = encode_dataset(c2v, ds);
            } else {
                auto s2s = Seq2Seq::from_json(load_json(s2s_path));
                out = event_representations(ds, c2v, s2s,
                                            static_cast<std::size_t>(stride.value_or(cfg.seq2seq.represent_stride)));
            }
            auto os = open_out(csv_out);
            write_encoded_csv(os, out);
        } else if (clu->parsed()) {
            auto cfg = common.load();
            auto is = open_in(csv_in);
            const auto enc = read_encoded_csv(is);
            const HdbscanParams p{mcs.value_or(cfg.cluster.min_cluster_size), ms.value_or(cfg.cluster.min_samples)};
            LabelAssignment la{enc.refs, hdbscan(enc.vectors, p)};
            std::size_t noise = 0;
            for (int l : la.labels) noise += l < 0;
            std::size_t relabeled = 0;
            if (!no_phc) {
                auto r = phc(la.labels, enc.vectors, phc_k.value_or(cfg.cluster.phc_k));
                la.labels = std::move(r.labels);
                relabeled = r.relabeled;
            }
            auto os = open_out(csv_out);
            write_labels_csv(os, la);
            std::fprintf(stderr, "noise %zu, relabeled %zu\n", noise, relabeled);
        } else if (lda->parsed()) {
            auto cfg = common.load();
            const auto ds = load_jsonl(data_in);
            const auto corpus = make_windows(ds, static_cast<std::size_t>(cfg.lda.window_len),
                                             static_cast<std::size_t>(cfg.lda.stride));
            const int k = topics.value_or(cfg.lda.topics > 0 ? cfg.lda.topics
                                                             : (ds.group_count > 0 ? ds.group_count : cfg.group_count));
            auto lc = cfg.lda_config(k, derive_seed(common.seed_or(cfg), lda_chain));
            lc.topics = k;
            const auto model = lda_fit(corpus, lc);
            const auto wt = window_topics(model);
            const auto labels = event_labels(ds, corpus, wt);
            auto os = open_out(csv_out);
            write_labels_csv(os, labels);
            if (!summary_out.empty()) {
                json j{{"topics", k}, {"windows", corpus.windows.size()}, {"window_topics", wt}};
                if (ds.has_groups()) {
                    const auto [t, p] = align_labels(truth_labels(ds), labels);
                    j["ami"] = {{"window", ami(window_level_truth(ds, corpus), wt)}, {"event", ami(t, p)}};
                }
                save_json(summary_out, j);
            }
        } else if (ev->parsed()) {
            LabelAssignment truth;
            if (truth_in.ends_with(".jsonl")) {
                truth = truth_labels(load_jsonl(truth_in));
            } else {
                auto is = open_in(truth_in);
                truth = read_labels_csv(is);
            }
            auto is = open_in(pred_in);
            const auto pred = read_labels_csv(is);
            const auto [t, p] = align_labels(truth, pred);
            if (t.empty()) throw std::runtime_error("evaluate: no events in common");
            const auto r = ami_detail(t, p, exclude_noise ? NoiseMode::exclude : NoiseMode::include);
            std::cout << r.to_json().dump(2) << '\n';
        } else if (grid->parsed()) {
            auto cfg = common.load();
            if (common.seed) cfg.seeds = {*common.seed};
            const auto path = results_out.empty() ? (std::filesystem::path(cfg.output) / "results.json").string() : results_out;
            const auto rec = run_grid(cfg, common.raw, [](const CellRun& r) {
                if (r.ok())
                    std::fprintf(stderr, "G=%d E=%d seed=%llu: lda window %.3f event %.3f | case %.3f phc %.3f\n",
                                 r.groups, r.vocab, static_cast<unsigned long long>(r.seed), r.ami_lda_window,
                                 r.ami_lda_event, r.ami_case, r.ami_case_phc);
                else
                    std::fprintf(stderr, "G=%d E=%d seed=%llu failed: %s\n", r.groups, r.vocab,
                                 static_cast<unsigned long long>(r.seed), r.error.c_str());
            });
            auto os = open_out(path);
            os << rec.to_json().dump(2) << '\n';
            if (!common.raw.empty()) {
                auto cs = open_out((std::filesystem::path(path).parent_path() / "config.yaml").string());
                cs << common.raw;
            }
            bool any_failed = false;
            for (const auto& r : rec.runs) any_failed = any_failed || !r.ok();
            if (any_failed) return 2;
        } else if (vis->parsed()) {
            auto cfg = common.load();
            const auto dir = dir_out.empty() ? (std::filesystem::path(cfg.output) / "visual").string() : dir_out;
            const auto r = run_visual(cfg, common.seed_or(cfg), dir);
            json j = r.to_json();
            j["seed"] = common.seed_or(cfg);
            j["config"] = cfg.to_json();
            j["config_text"] = common.raw;
            save_json((std::filesystem::path(dir) / "visual.json").string(), j);
            std::cout << j["separation"].dump(2) << '\n';
        } else if (ing->parsed()) {
            const auto r = ingest(csv_in, schema);
            for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
            save_jsonl(data_out, r.dataset);
            const auto vpath = vocab_out.empty() ? (std::filesystem::path(data_out).replace_extension(".vocab.json")).string()
                                                 : vocab_out;
            save_json(vpath, r.vocabulary.to_json());
            std::fprintf(stderr, "%zu sequences kept, %zu dropped, %zu codes\n", r.dataset.sequences.size(), r.dropped,
                         r.vocabulary.codes[0].size());
        } else if (pca->parsed()) {
            auto is = open_in(csv_in);
            const auto enc = read_encoded_csv(is);
            const auto r = pca2d(enc.vectors);
            auto os = open_out(csv_out);
            os << "patient_id,position,x,y\n";
            for (std::size_t i = 0; i < enc.size(); ++i)
                os << enc.refs[i].patient_id << ',' << enc.refs[i].position << ',' << detail::format_double(r.coords(i, 0))
                   << ',' << detail::format_double(r.coords(i, 1)) << '\n';
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}

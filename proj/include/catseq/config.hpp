#pragma once

// Experiment configuration, read from YAML. Every section is optional and
// falls back to the desk-scale defaults; unknown keys are rejected.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "catseq/cat2vec.hpp"
#include "catseq/hdbscan.hpp"
#include "catseq/lda.hpp"
#include "catseq/seq2seq.hpp"
#include "catseq/syngen.hpp"

namespace catseq {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Cat2VecSection {
    int hidden_dim = 8;
    int encoding_dim = 8;
    TrainOptions train{1e-3, 256, 10, 1e-4, 5, 0, 0.0, 1.0, {}};
};

struct Seq2SeqSection {
    TransformerConfig model{8, 8, 64, 64, 4, 1, true, DecoderInput::positional, true};
    TrainOptions train{1e-3, 16, 5, 1e-4, 5, 0, 0.0, 1.0, {}};
    int train_stride = 64;
    int represent_stride = 1;
};

struct LdaSection {
    int topics = 0;  ///< 0: use the true group count
    double doc_topic_prior = -1.0;
    double topic_word_prior = 0.1;
    int iterations = 1000;
    int burn_in = 200;
    int window_len = 32;
    int stride = 1;
};

struct ClusterSection {
    int min_cluster_size = 5;
    int min_samples = 5;
    int phc_k = 20;
};

struct GridSection {
    std::vector<int> groups{6, 12};
    std::vector<int> vocab{100, 1000};
    int workers = 1;
};

struct ExperimentConfig {
    int vocab_size = 100;
    int group_count = 6;
    double alpha = 0.03;
    double beta = 2.0;
    int patients = 20;
    int seq_len = 1000;
    Cat2VecSection cat2vec;
    Seq2SeqSection seq2seq;
    LdaSection lda;
    ClusterSection cluster;
    GridSection grid;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::string output = "out";

    SynthConfig synth(int groups, int vocab, std::uint64_t seed) const {
        SynthConfig s;
        s.vocab_size = vocab;
        s.group_count = groups;
        s.alpha = alpha;
        s.betas.assign(static_cast<std::size_t>(groups), beta);
        s.patients = patients;
        s.seq_len = seq_len;
        s.seed = seed;
        return s;
    }

    SynthConfig synth(std::uint64_t seed) const { return synth(group_count, vocab_size, seed); }

    void validate() const {
        auto need = [](bool ok, const std::string& msg) {
            if (!ok) throw ConfigError(msg);
        };
        try {
            synth(1).validate();
            for (int g : grid.groups) synth(g, vocab_size, 1).validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        need(!grid.groups.empty() && !grid.vocab.empty(), "grid: groups and vocab must be non-empty");
        for (int v : grid.vocab) need(v >= 1, "grid: vocab sizes must be >= 1");
        need(grid.workers >= 1, "grid: workers must be >= 1");
        need(cat2vec.hidden_dim >= 1 && cat2vec.encoding_dim >= 1, "cat2vec: dims must be >= 1");
        TransformerConfig t = seq2seq.model;
        t.d_model = cat2vec.encoding_dim;
        try {
            t.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        for (const auto* tr : {&cat2vec.train, &seq2seq.train}) {
            need(tr->lr > 0.0, "train: lr must be > 0");
            need(tr->batch_size >= 1 && tr->max_epochs >= 1 && tr->patience >= 1, "train: batch_size, max_epochs, patience must be >= 1");
            need(tr->tolerance >= 0.0, "train: tolerance must be >= 0");
        }
        need(seq2seq.train_stride >= 1, "seq2seq: train_stride must be >= 1");
        need(seq2seq.represent_stride >= 1 && seq2seq.represent_stride <= seq2seq.model.window_len,
             "seq2seq: represent_stride must lie in [1, window_len]");
        need(seq_len >= seq2seq.model.window_len, "seq2seq: window_len exceeds seq_len");
        need(lda.topics >= 0, "lda: topics must be >= 0");
        need(lda.iterations >= 1 && lda.burn_in >= 0 && lda.burn_in < lda.iterations, "lda: need 0 <= burn_in < iterations");
        need(lda.topic_word_prior > 0.0, "lda: topic_word_prior must be > 0");
        need(lda.window_len >= 1 && lda.stride >= 1, "lda: window_len and stride must be >= 1");
        need(cluster.min_cluster_size >= 2 && cluster.min_samples >= 1 && cluster.phc_k >= 1,
             "cluster: need min_cluster_size >= 2, min_samples >= 1, phc_k >= 1");
        need(!seeds.empty(), "seeds: at least one seed required");
    }

    Cat2VecConfig cat2vec_config(int vocab) const {
        Cat2VecConfig c;
        c.input_dims = {vocab};
        c.hidden_dim = cat2vec.hidden_dim;
        c.encoding_dim = cat2vec.encoding_dim;
        return c;
    }

    TransformerConfig transformer_config() const {
        TransformerConfig t = seq2seq.model;
        t.d_model = cat2vec.encoding_dim;
        return t;
    }

    LdaConfig lda_config(int groups, std::uint64_t seed) const {
        LdaConfig c;
        c.topics = lda.topics > 0 ? lda.topics : groups;
        c.doc_topic_prior = lda.doc_topic_prior;
        c.topic_word_prior = lda.topic_word_prior;
        c.iterations = lda.iterations;
        c.burn_in = lda.burn_in;
        c.seed = seed;
        return c;
    }

    HdbscanParams hdbscan_params() const { return {cluster.min_cluster_size, cluster.min_samples}; }

    nlohmann::json to_json() const {
        auto train = [](const TrainOptions& t) {
            return nlohmann::json{{"lr", t.lr},
                                  {"batch_size", t.batch_size},
                                  {"max_epochs", t.max_epochs},
                                  {"tolerance", t.tolerance},
                                  {"patience", t.patience},
                                  {"negative_weight", t.negative_weight},
                                  {"negative_margin", t.negative_margin}};
        };
        auto c2v = train(cat2vec.train);
        c2v["hidden_dim"] = cat2vec.hidden_dim;
        c2v["encoding_dim"] = cat2vec.encoding_dim;
        auto s2s = train(seq2seq.train);
        s2s.erase("negative_weight");
        s2s.erase("negative_margin");
        const auto t = transformer_config().to_json();
        for (const auto& key : {"heads", "window_len", "ff_dim", "encoder_layers", "decoder_layers", "positional",
                                "decoder_input", "standardize_inputs"})
            s2s[key] = t[key];
        s2s["train_stride"] = seq2seq.train_stride;
        s2s["represent_stride"] = seq2seq.represent_stride;
        return {{"synth",
                 {{"vocab_size", vocab_size},
                  {"group_count", group_count},
                  {"alpha", alpha},
                  {"beta", beta},
                  {"patients", patients},
                  {"seq_len", seq_len}}},
                {"cat2vec", c2v},
                {"seq2seq", s2s},
                {"lda",
                 {{"topics", lda.topics},
                  {"doc_topic_prior", lda.doc_topic_prior},
                  {"topic_word_prior", lda.topic_word_prior},
                  {"iterations", lda.iterations},
                  {"burn_in", lda.burn_in},
                  {"window_len", lda.window_len},
                  {"stride", lda.stride}}},
                {"cluster",
                 {{"min_cluster_size", cluster.min_cluster_size},
                  {"min_samples", cluster.min_samples},
                  {"phc_k", cluster.phc_k}}},
                {"grid", {{"groups", grid.groups}, {"vocab", grid.vocab}, {"workers", grid.workers}}},
                {"seeds", seeds},
                {"output", output}};
    }
};

namespace detail {

class Section {
public:
    Section(const YAML::Node& node, std::string name) : node_(node), name_(std::move(name)) {
        if (node_ && !node_.IsMap()) throw ConfigError(name_ + ": expected a mapping");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!node_ || !node_[key]) return;
        try {
            out = node_[key].as<T>();
        } catch (const YAML::Exception&) {
            throw ConfigError(name_ + "." + key + ": bad value");
        }
    }

    void done() const {
        if (!node_) return;
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!seen_.count(key)) throw ConfigError(name_ + ": unknown key '" + key + "'");
        }
    }

private:
    YAML::Node node_;
    std::string name_;
    std::set<std::string> seen_;
};

inline void read_train(Section& s, TrainOptions& t, bool negative) {
    s.get("lr", t.lr);
    s.get("batch_size", t.batch_size);
    s.get("max_epochs", t.max_epochs);
    s.get("tolerance", t.tolerance);
    s.get("patience", t.patience);
    if (negative) {
        s.get("negative_weight", t.negative_weight);
        s.get("negative_margin", t.negative_margin);
    }
}

}  // namespace detail

/// Parses YAML text into a validated config.
inline ExperimentConfig parse_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    ExperimentConfig c;
    if (!root || root.IsNull()) {
        c.validate();
        return c;
    }
    if (!root.IsMap()) throw ConfigError("config: top level must be a mapping");
    for (const auto& kv : root) {
        static const std::set<std::string> known{"synth", "cat2vec", "seq2seq", "lda", "cluster", "grid", "seeds", "output"};
        const auto key = kv.first.as<std::string>();
        if (!known.count(key)) throw ConfigError("config: unknown section '" + key + "'");
    }

    detail::Section synth(root["synth"], "synth");
    synth.get("vocab_size", c.vocab_size);
    synth.get("group_count", c.group_count);
    synth.get("alpha", c.alpha);
    synth.get("beta", c.beta);
    synth.get("patients", c.patients);
    synth.get("seq_len", c.seq_len);
    synth.done();

    detail::Section c2v(root["cat2vec"], "cat2vec");
    c2v.get("hidden_dim", c.cat2vec.hidden_dim);
    c2v.get("encoding_dim", c.cat2vec.encoding_dim);
    detail::read_train(c2v, c.cat2vec.train, true);
    c2v.done();

    detail::Section s2s(root["seq2seq"], "seq2seq");
    auto& m = c.seq2seq.model;
    s2s.get("heads", m.heads);
    s2s.get("window_len", m.window_len);
    s2s.get("ff_dim", m.ff_dim);
    s2s.get("encoder_layers", m.encoder_layers);
    s2s.get("decoder_layers", m.decoder_layers);
    s2s.get("positional", m.positional);
    std::string decoder_input = "positional";
    s2s.get("decoder_input", decoder_input);
    if (decoder_input != "positional" && decoder_input != "input")
        throw ConfigError("seq2seq.decoder_input: expected 'positional' or 'input'");
    m.decoder_input = decoder_input == "input" ? DecoderInput::input : DecoderInput::positional;
    s2s.get("standardize_inputs", m.standardize_inputs);
    s2s.get("train_stride", c.seq2seq.train_stride);
    s2s.get("represent_stride", c.seq2seq.represent_stride);
    detail::read_train(s2s, c.seq2seq.train, false);
    s2s.done();

    detail::Section lda(root["lda"], "lda");
    lda.get("topics", c.lda.topics);
    lda.get("doc_topic_prior", c.lda.doc_topic_prior);
    lda.get("topic_word_prior", c.lda.topic_word_prior);
    lda.get("iterations", c.lda.iterations);
    lda.get("burn_in", c.lda.burn_in);
    lda.get("window_len", c.lda.window_len);
    lda.get("stride", c.lda.stride);
    lda.done();

    detail::Section cl(root["cluster"], "cluster");
    cl.get("min_cluster_size", c.cluster.min_cluster_size);
    cl.get("min_samples", c.cluster.min_samples);
    cl.get("phc_k", c.cluster.phc_k);
    cl.done();

    detail::Section grid(root["grid"], "grid");
    grid.get("groups", c.grid.groups);
    grid.get("vocab", c.grid.vocab);
    grid.get("workers", c.grid.workers);
    grid.done();

    if (root["seeds"]) {
        try {
            c.seeds = root["seeds"].as<std::vector<std::uint64_t>>();
        } catch (const YAML::Exception&) {
            throw ConfigError("seeds: expected a list of non-negative integers");
        }
    }
    if (root["output"]) c.output = root["output"].as<std::string>();
    c.validate();
    return c;
}

/// Loads a config file; the raw text is kept for verbatim persistence.
inline ExperimentConfig load_config(const std::string& path, std::string* raw = nullptr) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    if (raw) *raw = ss.str();
    return parse_config(ss.str());
}

}  // namespace catseq

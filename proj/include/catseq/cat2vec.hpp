#pragma once

// Siamese MLP over one-hot categorical events. Each categorical field has its
// own hidden layer (ReLU); the concatenated hidden activations feed a shared
// sigmoid output layer. Training pulls the encodings of successive events of
// a patient together.

#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "catseq/dataset.hpp"
#include "catseq/numcore.hpp"
#include "catseq/rng.hpp"
#include "catseq/serialize.hpp"

namespace catseq {

struct Cat2VecConfig {
    std::vector<int> input_dims{100};  ///< one-hot width per categorical field
    int hidden_dim = 8;
    int encoding_dim = 8;

    void validate() const {
        if (input_dims.empty()) throw std::invalid_argument("cat2vec: at least one input field required");
        for (int d : input_dims)
            if (d < 1) throw std::invalid_argument("cat2vec: input dims must be >= 1");
        if (hidden_dim < 1 || encoding_dim < 1) throw std::invalid_argument("cat2vec: hidden/encoding dims must be >= 1");
    }

    nlohmann::json to_json() const {
        return {{"input_dims", input_dims}, {"hidden_dim", hidden_dim}, {"encoding_dim", encoding_dim}};
    }

    static Cat2VecConfig from_json(const nlohmann::json& j) {
        Cat2VecConfig c;
        c.input_dims = j.at("input_dims").get<std::vector<int>>();
        c.hidden_dim = j.at("hidden_dim").get<int>();
        c.encoding_dim = j.at("encoding_dim").get<int>();
        c.validate();
        return c;
    }
};

struct TrainOptions {
    double lr = 1e-3;
    int batch_size = 256;
    int max_epochs = 50;
    double tolerance = 1e-4;  ///< relative epoch-loss improvement counted as progress
    int patience = 5;
    std::uint64_t seed = 11;
    /// Weight of the optional hinge term pushing random event pairs apart
    /// (0 keeps the pure adjacent-pair objective).
    double negative_weight = 0.0;
    double negative_margin = 1.0;
    std::function<void(int epoch, double loss)> on_epoch;
};

struct TrainReport {
    std::vector<double> epoch_losses;
    bool converged = false;
    double initial_loss = 0.0;  ///< objective before the first update
};

class Cat2Vec {
public:
    static constexpr int format_version = 1;

    explicit Cat2Vec(Cat2VecConfig config, std::uint64_t seed = 11) : config_(std::move(config)) {
        config_.validate();
        Rng rng(seed);
        const auto H = static_cast<std::size_t>(config_.hidden_dim);
        for (std::size_t f = 0; f < config_.input_dims.size(); ++f) {
            const auto D = static_cast<std::size_t>(config_.input_dims[f]);
            w1_.push_back(params_.add("l1." + std::to_string(f) + ".weight", glorot_uniform(D, H, rng)));
            b1_.push_back(params_.add("l1." + std::to_string(f) + ".bias", Tensor(1, H)));
        }
        const auto concat = H * config_.input_dims.size();
        const auto N = static_cast<std::size_t>(config_.encoding_dim);
        w2_ = params_.add("l2.weight", glorot_uniform(concat, N, rng));
        b2_ = params_.add("l2.bias", Tensor(1, N));
    }

    const Cat2VecConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    std::size_t field_count() const { return config_.input_dims.size(); }

    /// Records the encoder on `g` for a batch: one one-hot matrix per field.
    NodeId forward(Graph& g, const std::vector<NodeId>& one_hot_fields) {
        if (one_hot_fields.size() != field_count()) throw ShapeError("cat2vec: wrong number of input fields");
        std::vector<NodeId> hidden;
        for (std::size_t f = 0; f < field_count(); ++f)
            hidden.push_back(g.relu(g.add_row(g.matmul(one_hot_fields[f], g.param(w1_[f])), g.param(b1_[f]))));
        const NodeId h = hidden.size() == 1 ? hidden[0] : g.concat(hidden);
        return g.sigmoid(g.add_row(g.matmul(h, g.param(w2_)), g.param(b2_)));
    }

    /// Builds a batch of one-hot rows for field f from integer codes.
    Tensor one_hot(std::size_t f, const std::vector<int>& codes) const {
        const auto D = static_cast<std::size_t>(config_.input_dims.at(f));
        Tensor t(codes.size(), D);
        for (std::size_t i = 0; i < codes.size(); ++i) {
            if (codes[i] < 0 || static_cast<std::size_t>(codes[i]) >= D)
                throw std::invalid_argument("cat2vec: code " + std::to_string(codes[i]) + " out of range");
            t(i, static_cast<std::size_t>(codes[i])) = 1.0;
        }
        return t;
    }

    /// Encodes a single event given as one one-hot vector per field.
    std::vector<double> encode(const std::vector<std::vector<double>>& one_hot_fields) {
        if (one_hot_fields.size() != field_count()) throw std::invalid_argument("cat2vec: wrong number of fields");
        std::vector<std::vector<int>> codes(field_count());
        for (std::size_t f = 0; f < field_count(); ++f) {
            const auto& v = one_hot_fields[f];
            if (v.size() != static_cast<std::size_t>(config_.input_dims[f]))
                throw std::invalid_argument("cat2vec: field " + std::to_string(f) + " has wrong width");
            int hot = -1;
            for (std::size_t k = 0; k < v.size(); ++k) {
                if (v[k] == 1.0) {
                    if (hot != -1) throw std::invalid_argument("cat2vec: more than one hot index");
                    hot = static_cast<int>(k);
                } else if (v[k] != 0.0) {
                    throw std::invalid_argument("cat2vec: one-hot entries must be 0 or 1");
                }
            }
            if (hot == -1) throw std::invalid_argument("cat2vec: no hot index");
            codes[f].push_back(hot);
        }
        return encode_codes(codes).row(0);
    }

    /// Encodes a batch of events given as integer codes (codes[field][event]).
    Tensor encode_codes(const std::vector<std::vector<int>>& codes) {
        if (codes.size() != field_count()) throw std::invalid_argument("cat2vec: wrong number of fields");
        Graph g(&params_);
        std::vector<NodeId> inputs;
        for (std::size_t f = 0; f < field_count(); ++f) inputs.push_back(g.constant(one_hot(f, codes[f])));
        return g.value(forward(g, inputs));
    }

    /// Encodes every event of a sequence (rows follow positions).
    Tensor encode_sequence(const Sequence& s) {
        std::vector<std::vector<int>> codes(field_count());
        codes[0] = s.events;
        if (field_count() > 1) codes[1] = s.categories;
        return encode_codes(codes);
    }

    /// Minimizes the mean squared distance between encodings of adjacent
    /// events with Adam; one epoch visits every adjacent pair once.
    TrainReport train(const EventDataset& ds, const TrainOptions& opt) {
        if (ds.sequences.empty()) throw std::invalid_argument("cat2vec: empty dataset");
        if (ds.field_count() != field_count())
            throw std::invalid_argument("cat2vec: dataset field count does not match the model");
        for (std::size_t f = 0; f < field_count(); ++f)
            if (ds.vocab_sizes[f] > config_.input_dims[f])
                throw std::invalid_argument("cat2vec: dataset vocabulary exceeds model input width");
        std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (sequence, position i) for pair (i, i+1)
        for (std::size_t s = 0; s < ds.sequences.size(); ++s) {
            if (ds.sequences[s].size() < 2)
                throw std::invalid_argument("cat2vec: patient " + ds.sequences[s].patient_id + " has fewer than 2 events");
            for (std::size_t i = 0; i + 1 < ds.sequences[s].size(); ++i) pairs.emplace_back(s, i);
        }
        std::vector<std::pair<std::size_t, std::size_t>> all_events;
        if (opt.negative_weight > 0.0)
            for (std::size_t s = 0; s < ds.sequences.size(); ++s)
                for (std::size_t i = 0; i < ds.sequences[s].size(); ++i) all_events.emplace_back(s, i);

        Rng rng(opt.seed);
        AdamState adam = make_adam_state(params_, AdamConfig{opt.lr});
        ConvergenceMonitor monitor(opt.tolerance, opt.patience);
        TrainReport report;
        report.initial_loss = pair_loss(ds, pairs);
        const auto batch = static_cast<std::size_t>(std::max(1, opt.batch_size));
        for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
            rng.shuffle(pairs);
            double total = 0.0;
            for (std::size_t b0 = 0; b0 < pairs.size(); b0 += batch) {
                const std::size_t b1 = std::min(pairs.size(), b0 + batch);
                std::vector<std::vector<int>> left(field_count()), right(field_count());
                for (std::size_t k = b0; k < b1; ++k) {
                    const auto& seq = ds.sequences[pairs[k].first];
                    for (std::size_t f = 0; f < field_count(); ++f) {
                        left[f].push_back(seq.field(f, pairs[k].second));
                        right[f].push_back(seq.field(f, pairs[k].second + 1));
                    }
                }
                params_.zero_grad();
                Graph g(&params_);
                const NodeId ya = forward(g, inputs_for(g, left));
                const NodeId yb = forward(g, inputs_for(g, right));
                const NodeId pull = g.mse(ya, yb);
                NodeId loss = pull;
                if (opt.negative_weight > 0.0) {
                    std::vector<std::vector<int>> rnd(field_count());
                    for (std::size_t k = b0; k < b1; ++k) {
                        const auto& [s, i] = all_events[rng.below(all_events.size())];
                        for (std::size_t f = 0; f < field_count(); ++f) rnd[f].push_back(ds.sequences[s].field(f, i));
                    }
                    loss = g.add(pull, g.scale(push_term(g, ya, forward(g, inputs_for(g, rnd)), opt.negative_margin),
                                               opt.negative_weight));
                }
                total += g.value(pull)[0] * static_cast<double>(b1 - b0);
                g.backward(loss);
                adam_step(params_, adam);
            }
            const double epoch_loss = total / static_cast<double>(pairs.size());
            report.epoch_losses.push_back(epoch_loss);
            if (opt.on_epoch) opt.on_epoch(epoch, epoch_loss);
            if (monitor.update(epoch_loss)) {
                report.converged = true;
                break;
            }
        }
        return report;
    }

    /// Adjacent-pair objective over a full dataset with the current parameters.
    double pair_loss(const EventDataset& ds) {
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t s = 0; s < ds.sequences.size(); ++s)
            for (std::size_t i = 0; i + 1 < ds.sequences[s].size(); ++i) pairs.emplace_back(s, i);
        return pair_loss(ds, pairs);
    }

    nlohmann::json to_json() const {
        return {{"format", "catseq.cat2vec"}, {"version", format_version}, {"config", config_.to_json()},
                {"params", params_to_json(params_)}};
    }

    static Cat2Vec from_json(const nlohmann::json& j) {
        if (j.value("format", "") != "catseq.cat2vec") throw std::runtime_error("cat2vec: not a cat2vec artifact");
        if (j.value("version", 0) != format_version) throw std::runtime_error("cat2vec: unsupported artifact version");
        Cat2Vec model(Cat2VecConfig::from_json(j.at("config")));
        params_from_json(model.params_, j.at("params"));
        return model;
    }

private:
    std::vector<NodeId> inputs_for(Graph& g, const std::vector<std::vector<int>>& codes) const {
        std::vector<NodeId> out;
        for (std::size_t f = 0; f < field_count(); ++f) out.push_back(g.constant(one_hot(f, codes[f])));
        return out;
    }

    /// mean(relu(margin - ||a - b||^2)) over rows.
    static NodeId push_term(Graph& g, NodeId a, NodeId b, double margin) {
        const NodeId d = g.sub(a, b);
        const auto rows = g.value(d).rows();
        const auto cols = g.value(d).cols();
        const NodeId sq = g.matmul(g.mul(d, d), g.constant(Tensor(cols, 1, 1.0)));
        const NodeId hinge = g.relu(g.add(g.scale(sq, -1.0), g.constant(Tensor(rows, 1, margin))));
        return g.scale(g.sum(hinge), 1.0 / static_cast<double>(rows));
    }

    double pair_loss(const EventDataset& ds, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
        if (pairs.empty()) return 0.0;
        double total = 0.0;
        constexpr std::size_t chunk = 4096;
        for (std::size_t b0 = 0; b0 < pairs.size(); b0 += chunk) {
            const std::size_t b1 = std::min(pairs.size(), b0 + chunk);
            std::vector<std::vector<int>> left(field_count()), right(field_count());
            for (std::size_t k = b0; k < b1; ++k) {
                const auto& seq = ds.sequences[pairs[k].first];
                for (std::size_t f = 0; f < field_count(); ++f) {
                    left[f].push_back(seq.field(f, pairs[k].second));
                    right[f].push_back(seq.field(f, pairs[k].second + 1));
                }
            }
            total += mse(encode_codes(left), encode_codes(right)) * static_cast<double>(b1 - b0);
        }
        return total / static_cast<double>(pairs.size());
    }

    Cat2VecConfig config_;
    ParamStore params_;
    std::vector<ParamId> w1_, b1_;
    ParamId w2_ = 0, b2_ = 0;
};

/// Cat2Vec encodings of every event in a dataset.
inline EncodedEvents encode_dataset(Cat2Vec& model, const EventDataset& ds) {
    EncodedEvents out;
    const auto N = static_cast<std::size_t>(model.config().encoding_dim);
    std::vector<double> values;
    values.reserve(ds.event_count() * N);
    for (const auto& s : ds.sequences) {
        const Tensor enc = model.encode_sequence(s);
        values.insert(values.end(), enc.values().begin(), enc.values().end());
        for (std::size_t i = 0; i < s.size(); ++i) out.refs.push_back({s.patient_id, static_cast<int>(i)});
    }
    out.vectors = Tensor({out.refs.size(), N}, std::move(values));
    return out;
}

}  // namespace catseq

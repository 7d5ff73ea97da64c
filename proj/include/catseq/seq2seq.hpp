#pragma once

// Transformer autoencoder over fixed-length windows of event encodings.
// Pre-norm residual blocks, sinusoidal positions, no masking. The encoder's
// per-position outputs are the event representations.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "catseq/cat2vec.hpp"
#include "catseq/dataset.hpp"
#include "catseq/numcore.hpp"
#include "catseq/rng.hpp"
#include "catseq/serialize.hpp"

namespace catseq {

/// What the decoder attends over besides the encoder output.
enum class DecoderInput {
    positional,  ///< positional table only, so every bit of content must pass through the encoder
    input,       ///< the (unmasked) input window plus positions
};

struct TransformerConfig {
    int d_model = 8;
    int heads = 2;
    int window_len = 64;
    int ff_dim = 64;
    int encoder_layers = 4;
    int decoder_layers = 1;
    bool positional = true;
    DecoderInput decoder_input = DecoderInput::positional;
    /// z-score inputs per dimension with statistics fitted at training time
    bool standardize_inputs = true;

    void validate() const {
        if (d_model < 1 || heads < 1 || window_len < 1 || ff_dim < 1)
            throw std::invalid_argument("seq2seq: dimensions must be >= 1");
        if (d_model % heads != 0) throw std::invalid_argument("seq2seq: d_model must be divisible by heads");
        if (encoder_layers < 1 || decoder_layers < 1) throw std::invalid_argument("seq2seq: layer counts must be >= 1");
        if (positional && d_model % 2 != 0) throw std::invalid_argument("seq2seq: positional encoding needs even d_model");
    }

    nlohmann::json to_json() const {
        return {{"d_model", d_model},
                {"heads", heads},
                {"window_len", window_len},
                {"ff_dim", ff_dim},
                {"encoder_layers", encoder_layers},
                {"decoder_layers", decoder_layers},
                {"positional", positional},
                {"decoder_input", decoder_input == DecoderInput::positional ? "positional" : "input"},
                {"standardize_inputs", standardize_inputs}};
    }

    static TransformerConfig from_json(const nlohmann::json& j) {
        TransformerConfig c;
        c.d_model = j.at("d_model").get<int>();
        c.heads = j.at("heads").get<int>();
        c.window_len = j.at("window_len").get<int>();
        c.ff_dim = j.at("ff_dim").get<int>();
        c.encoder_layers = j.at("encoder_layers").get<int>();
        c.decoder_layers = j.at("decoder_layers").get<int>();
        c.positional = j.value("positional", true);
        c.decoder_input = j.value("decoder_input", std::string("positional")) == "input" ? DecoderInput::input
                                                                                        : DecoderInput::positional;
        c.standardize_inputs = j.value("standardize_inputs", true);
        c.validate();
        return c;
    }
};

/// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same angle).
inline Tensor positional_encoding(std::size_t length, std::size_t d_model) {
    if (d_model % 2 != 0) throw std::invalid_argument("positional_encoding: d_model must be even");
    Tensor pe(length, d_model);
    for (std::size_t pos = 0; pos < length; ++pos)
        for (std::size_t i = 0; i < d_model; i += 2) {
            const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
            pe(pos, i) = std::sin(angle);
            pe(pos, i + 1) = std::cos(angle);
        }
    return pe;
}

class Seq2Seq {
public:
    static constexpr int format_version = 1;

    explicit Seq2Seq(TransformerConfig config, std::uint64_t seed = 13) : config_(config) {
        config_.validate();
        Rng rng(seed);
        const auto d = static_cast<std::size_t>(config_.d_model);
        for (int l = 0; l < config_.encoder_layers; ++l) {
            const std::string p = "encoder." + std::to_string(l) + ".";
            EncoderLayer layer;
            layer.norm1 = make_norm(p + "norm1");
            layer.attn = make_attention(p + "self_attn", rng);
            layer.norm2 = make_norm(p + "norm2");
            layer.ff = make_ff(p + "ff", rng);
            encoder_.push_back(layer);
        }
        encoder_norm_ = make_norm("encoder.norm");
        for (int l = 0; l < config_.decoder_layers; ++l) {
            const std::string p = "decoder." + std::to_string(l) + ".";
            DecoderLayer layer;
            layer.norm1 = make_norm(p + "norm1");
            layer.self_attn = make_attention(p + "self_attn", rng);
            layer.norm2 = make_norm(p + "norm2");
            layer.cross_attn = make_attention(p + "cross_attn", rng);
            layer.norm3 = make_norm(p + "norm3");
            layer.ff = make_ff(p + "ff", rng);
            decoder_.push_back(layer);
        }
        decoder_norm_ = make_norm("decoder.norm");
        out_ = {params_.add("out.weight", glorot_uniform(d, d, rng)), params_.add("out.bias", Tensor(1, d))};
        pe_ = config_.positional ? positional_encoding(static_cast<std::size_t>(config_.window_len), d)
                                 : Tensor(static_cast<std::size_t>(config_.window_len), d);
        shift_ = Tensor(1, d);
        scale_ = Tensor(1, d, 1.0);
    }

    const TransformerConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const Tensor& positional_table() const { return pe_; }

    /// Replaces the positional table (e.g. zeros for equivariance checks).
    void set_positional_table(Tensor table) {
        if (!table.same_shape(pe_)) throw ShapeError("seq2seq: positional table has wrong shape");
        pe_ = std::move(table);
    }

    /// Per-dimension input statistics; identity until fitted.
    const Tensor& input_shift() const { return shift_; }
    const Tensor& input_scale() const { return scale_; }

    /// Fits mean and standard deviation over all rows of the windows.
    /// Dimensions with (near) zero spread keep scale 1.
    void fit_input_scaler(const std::vector<Tensor>& windows) {
        const auto d = static_cast<std::size_t>(config_.d_model);
        Tensor mean(1, d), sq(1, d);
        std::size_t rows = 0;
        for (const auto& w : windows) {
            check_stack(w, w.rows() / static_cast<std::size_t>(config_.window_len));
            for (std::size_t r = 0; r < w.rows(); ++r)
                for (std::size_t c = 0; c < d; ++c) mean[c] += w(r, c);
            rows += w.rows();
        }
        if (rows == 0) throw std::invalid_argument("seq2seq: cannot fit scaler on empty windows");
        for (std::size_t c = 0; c < d; ++c) mean[c] /= static_cast<double>(rows);
        for (const auto& w : windows)
            for (std::size_t r = 0; r < w.rows(); ++r)
                for (std::size_t c = 0; c < d; ++c) sq[c] += (w(r, c) - mean[c]) * (w(r, c) - mean[c]);
        for (std::size_t c = 0; c < d; ++c) {
            const double sd = std::sqrt(sq[c] / static_cast<double>(rows));
            scale_[c] = sd > 1e-300 ? 1.0 / sd : 1.0;
        }
        shift_ = mean;
    }

    /// Applies the input scaler. Graph-level encode/decode expect prepared input.
    Tensor prepare(const Tensor& raw) const {
        if (raw.cols() != shift_.cols()) throw ShapeError("seq2seq: input width " + raw.shape_string());
        Tensor out = raw;
        for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = (raw(r, c) - shift_[c]) * scale_[c];
        return out;
    }

    /// Attention probabilities per (layer, window, head) when requested.
    struct Trace {
        std::vector<Tensor> attention;
    };

    /// Encoder over a stack of `windows` windows, rows grouped per window.
    NodeId encode(Graph& g, NodeId stacked, std::size_t windows, Trace* trace = nullptr) {
        check_stack(g.value(stacked), windows);
        NodeId h = g.add(stacked, g.constant(tile(pe_, windows)));
        for (const auto& layer : encoder_) {
            const NodeId a = norm(g, h, layer.norm1);
            h = g.add(h, attention(g, a, a, layer.attn, windows, trace));
            h = g.add(h, feed_forward(g, norm(g, h, layer.norm2), layer.ff));
        }
        return norm(g, h, encoder_norm_);
    }

    NodeId decode(Graph& g, NodeId memory, NodeId stacked_input, std::size_t windows, Trace* trace = nullptr) {
        NodeId t = config_.decoder_input == DecoderInput::positional
                       ? g.constant(tile(pe_, windows))
                       : g.add(stacked_input, g.constant(tile(pe_, windows)));
        for (const auto& layer : decoder_) {
            const NodeId a = norm(g, t, layer.norm1);
            t = g.add(t, attention(g, a, a, layer.self_attn, windows, trace));
            t = g.add(t, attention(g, norm(g, t, layer.norm2), memory, layer.cross_attn, windows, trace));
            t = g.add(t, feed_forward(g, norm(g, t, layer.norm3), layer.ff));
        }
        return linear(g, norm(g, t, decoder_norm_), out_);
    }

    /// Encoder output for one L x d_model window.
    Tensor encode_window(const Tensor& window, Trace* trace = nullptr) {
        Graph g(&params_);
        return g.value(encode(g, g.constant(prepare(window)), 1, trace));
    }

    /// Decoder output given an encoder representation (and the input window,
    /// which is only read in DecoderInput::input mode).
    Tensor reconstruct(const Tensor& omega, const Tensor& window) {
        check_stack(omega, 1);
        check_stack(window, 1);
        Graph g(&params_);
        return g.value(decode(g, g.constant(omega), g.constant(prepare(window)), 1));
    }

    /// Reconstruction in the standardized input space.
    Tensor autoencode(const Tensor& window) {
        Graph g(&params_);
        const NodeId x = g.constant(prepare(window));
        return g.value(decode(g, encode(g, x, 1), x, 1));
    }

    /// Mean reconstruction error over a set of windows.
    double loss(const std::vector<Tensor>& windows) {
        if (windows.empty()) throw std::invalid_argument("seq2seq: empty window set");
        double total = 0.0;
        for (const auto& w : windows) total += mse(prepare(w), autoencode(w));
        return total / static_cast<double>(windows.size());
    }

    TrainReport train(const std::vector<Tensor>& windows, const TrainOptions& opt) {
        if (windows.empty()) throw std::invalid_argument("seq2seq: empty corpus");
        for (const auto& w : windows) check_stack(w, 1);
        if (config_.standardize_inputs) fit_input_scaler(windows);
        std::vector<Tensor> prepared;
        prepared.reserve(windows.size());
        for (const auto& w : windows) prepared.push_back(prepare(w));
        std::vector<std::size_t> order(windows.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(opt.seed);
        AdamState adam = make_adam_state(params_, AdamConfig{opt.lr});
        ConvergenceMonitor monitor(opt.tolerance, opt.patience);
        TrainReport report;
        report.initial_loss = loss(windows);
        const auto batch = static_cast<std::size_t>(std::max(1, opt.batch_size));
        for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
            rng.shuffle(order);
            double total = 0.0;
            for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
                const std::size_t b1 = std::min(order.size(), b0 + batch);
                params_.zero_grad();
                Graph g(&params_);
                const NodeId x = g.constant(stack(prepared, order, b0, b1));
                const NodeId y = decode(g, encode(g, x, b1 - b0), x, b1 - b0);
                const NodeId l = g.mse(y, x);
                total += g.value(l)[0] * static_cast<double>(b1 - b0);
                g.backward(l);
                adam_step(params_, adam);
            }
            const double epoch_loss = total / static_cast<double>(order.size());
            report.epoch_losses.push_back(epoch_loss);
            if (opt.on_epoch) opt.on_epoch(epoch, epoch_loss);
            if (monitor.update(epoch_loss)) {
                report.converged = true;
                break;
            }
        }
        return report;
    }

    nlohmann::json to_json() const {
        return {{"format", "catseq.seq2seq"}, {"version", format_version}, {"config", config_.to_json()},
                {"input_shift", shift_.values()}, {"input_scale", scale_.values()},
                {"params", params_to_json(params_)}};
    }

    static Seq2Seq from_json(const nlohmann::json& j) {
        if (j.value("format", "") != "catseq.seq2seq") throw std::runtime_error("seq2seq: not a seq2seq artifact");
        if (j.value("version", 0) != format_version) throw std::runtime_error("seq2seq: unsupported artifact version");
        Seq2Seq model(TransformerConfig::from_json(j.at("config")));
        params_from_json(model.params_, j.at("params"));
        const auto d = static_cast<std::size_t>(model.config_.d_model);
        if (j.contains("input_shift")) {
            Tensor shift({1, d}, j.at("input_shift").get<std::vector<double>>());
            Tensor scale({1, d}, j.at("input_scale").get<std::vector<double>>());
            if (!shift.all_finite() || !scale.all_finite()) throw std::runtime_error("seq2seq: non-finite input scaler");
            model.shift_ = shift;
            model.scale_ = scale;
        }
        return model;
    }

private:
    struct Linear {
        ParamId w = 0, b = 0;
    };
    struct Norm {
        ParamId gain = 0, bias = 0;
    };
    struct Attention {
        Linear q, k, v, o;
    };
    struct FeedForward {
        Linear in, out;
    };
    struct EncoderLayer {
        Norm norm1, norm2;
        Attention attn;
        FeedForward ff;
    };
    struct DecoderLayer {
        Norm norm1, norm2, norm3;
        Attention self_attn, cross_attn;
        FeedForward ff;
    };

    Linear make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
        return {params_.add(name + ".weight", glorot_uniform(in, out, rng)), params_.add(name + ".bias", Tensor(1, out))};
    }

    Norm make_norm(const std::string& name) {
        const auto d = static_cast<std::size_t>(config_.d_model);
        return {params_.add(name + ".gain", Tensor(1, d, 1.0)), params_.add(name + ".bias", Tensor(1, d))};
    }

    Attention make_attention(const std::string& name, Rng& rng) {
        const auto d = static_cast<std::size_t>(config_.d_model);
        return {make_linear(name + ".q", d, d, rng), make_linear(name + ".k", d, d, rng),
                make_linear(name + ".v", d, d, rng), make_linear(name + ".o", d, d, rng)};
    }

    FeedForward make_ff(const std::string& name, Rng& rng) {
        const auto d = static_cast<std::size_t>(config_.d_model);
        const auto f = static_cast<std::size_t>(config_.ff_dim);
        return {make_linear(name + ".in", d, f, rng), make_linear(name + ".out", f, d, rng)};
    }

    NodeId linear(Graph& g, NodeId x, const Linear& l) { return g.add_row(g.matmul(x, g.param(l.w)), g.param(l.b)); }

    NodeId norm(Graph& g, NodeId x, const Norm& n) { return g.layer_norm(x, g.param(n.gain), g.param(n.bias)); }

    NodeId feed_forward(Graph& g, NodeId x, const FeedForward& ff) {
        return linear(g, g.relu(linear(g, x, ff.in)), ff.out);
    }

    /// Multi-head scaled dot-product attention, computed independently per window.
    NodeId attention(Graph& g, NodeId query_src, NodeId kv_src, const Attention& a, std::size_t windows, Trace* trace) {
        const NodeId q = linear(g, query_src, a.q);
        const NodeId k = linear(g, kv_src, a.k);
        const NodeId v = linear(g, kv_src, a.v);
        const auto L = static_cast<std::size_t>(config_.window_len);
        const auto H = static_cast<std::size_t>(config_.heads);
        const auto dh = static_cast<std::size_t>(config_.d_model) / H;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        std::vector<NodeId> rows;
        rows.reserve(windows);
        for (std::size_t w = 0; w < windows; ++w) {
            std::vector<NodeId> heads;
            heads.reserve(H);
            for (std::size_t h = 0; h < H; ++h) {
                const NodeId qh = g.slice(q, w * L, L, h * dh, dh);
                const NodeId kh = g.slice(k, w * L, L, h * dh, dh);
                const NodeId vh = g.slice(v, w * L, L, h * dh, dh);
                const NodeId p = g.softmax_rows(g.scale(g.matmul(qh, g.transpose(kh)), scale));
                if (trace) trace->attention.push_back(g.value(p));
                heads.push_back(g.matmul(p, vh));
            }
            rows.push_back(H == 1 ? heads[0] : g.concat(heads));
        }
        const NodeId merged = windows == 1 ? rows[0] : g.concat_rows(rows);
        return linear(g, merged, a.o);
    }

    void check_stack(const Tensor& t, std::size_t windows) const {
        if (t.cols() != static_cast<std::size_t>(config_.d_model) ||
            t.rows() != windows * static_cast<std::size_t>(config_.window_len))
            throw ShapeError("seq2seq: expected " + std::to_string(windows * static_cast<std::size_t>(config_.window_len)) +
                             " x " + std::to_string(config_.d_model) + " input, got " + t.shape_string());
    }

    static Tensor tile(const Tensor& t, std::size_t times) {
        Tensor out(t.rows() * times, t.cols());
        for (std::size_t k = 0; k < times; ++k)
            std::copy(t.values().begin(), t.values().end(),
                      out.values().begin() + static_cast<std::ptrdiff_t>(k * t.size()));
        return out;
    }

    static Tensor stack(const std::vector<Tensor>& windows, const std::vector<std::size_t>& order, std::size_t b0,
                        std::size_t b1) {
        const auto& first = windows[order[b0]];
        Tensor out(first.rows() * (b1 - b0), first.cols());
        for (std::size_t k = b0; k < b1; ++k) {
            const auto& w = windows[order[k]];
            std::copy(w.values().begin(), w.values().end(),
                      out.values().begin() + static_cast<std::ptrdiff_t>((k - b0) * w.size()));
        }
        return out;
    }

    TransformerConfig config_;
    ParamStore params_;
    std::vector<EncoderLayer> encoder_;
    std::vector<DecoderLayer> decoder_;
    Norm encoder_norm_, decoder_norm_;
    Linear out_;
    Tensor pe_;
    Tensor shift_, scale_;
};

/// Window start offsets over a sequence of length n: every `stride` steps,
/// plus one final window aligned to the end when the stride leaves a tail.
/// Sequences shorter than the window yield no windows.
inline std::vector<std::size_t> window_starts(std::size_t n, std::size_t window_len, std::size_t stride) {
    std::vector<std::size_t> starts;
    if (n < window_len || window_len == 0) return starts;
    if (stride < 1) throw std::invalid_argument("window_starts: stride must be >= 1");
    for (std::size_t s = 0; s + window_len <= n; s += stride) starts.push_back(s);
    if (starts.back() + window_len < n) starts.push_back(n - window_len);
    return starts;
}

inline Tensor slice_rows(const Tensor& t, std::size_t row0, std::size_t count) {
    Tensor out(count, t.cols());
    std::copy(t.values().begin() + static_cast<std::ptrdiff_t>(row0 * t.cols()),
              t.values().begin() + static_cast<std::ptrdiff_t>((row0 + count) * t.cols()), out.values().begin());
    return out;
}

/// Cat2Vec-encoded training windows cut from every sequence at `stride`.
inline std::vector<Tensor> extract_windows(Cat2Vec& c2v, const EventDataset& ds, std::size_t window_len,
                                           std::size_t stride) {
    std::vector<Tensor> windows;
    for (const auto& s : ds.sequences) {
        if (s.size() < window_len) continue;
        const Tensor enc = c2v.encode_sequence(s);
        for (auto start : window_starts(s.size(), window_len, stride)) windows.push_back(slice_rows(enc, start, window_len));
    }
    return windows;
}

/// Per-event encoder outputs, averaged over every window covering the event.
/// Sequences shorter than the window are skipped.
inline EncodedEvents event_representations(const EventDataset& ds, Cat2Vec& c2v, Seq2Seq& s2s, std::size_t stride,
                                           std::size_t batch_windows = 32) {
    const auto L = static_cast<std::size_t>(s2s.config().window_len);
    const auto d = static_cast<std::size_t>(s2s.config().d_model);
    if (static_cast<std::size_t>(c2v.config().encoding_dim) != d)
        throw std::invalid_argument("event_representations: cat2vec encoding dim differs from d_model");
    if (stride < 1 || stride > L) throw std::invalid_argument("event_representations: stride must lie in [1, L]");
    EncodedEvents out;
    std::vector<double> values;
    for (const auto& s : ds.sequences) {
        if (s.size() < L) continue;
        const Tensor enc = c2v.encode_sequence(s);
        const auto starts = window_starts(s.size(), L, stride);
        Tensor sum(s.size(), d);
        std::vector<int> cover(s.size(), 0);
        for (std::size_t b0 = 0; b0 < starts.size(); b0 += batch_windows) {
            const std::size_t b1 = std::min(starts.size(), b0 + batch_windows);
            Tensor stacked((b1 - b0) * L, d);
            for (std::size_t k = b0; k < b1; ++k)
                std::copy(enc.values().begin() + static_cast<std::ptrdiff_t>(starts[k] * d),
                          enc.values().begin() + static_cast<std::ptrdiff_t>((starts[k] + L) * d),
                          stacked.values().begin() + static_cast<std::ptrdiff_t>((k - b0) * L * d));
            Graph g(&s2s.params());
            const Tensor& omega = g.value(s2s.encode(g, g.constant(s2s.prepare(stacked)), b1 - b0));
            for (std::size_t k = b0; k < b1; ++k)
                for (std::size_t r = 0; r < L; ++r) {
                    const std::size_t pos = starts[k] + r;
                    ++cover[pos];
                    for (std::size_t c = 0; c < d; ++c) sum(pos, c) += omega((k - b0) * L + r, c);
                }
        }
        for (std::size_t i = 0; i < s.size(); ++i) {
            out.refs.push_back({s.patient_id, static_cast<int>(i)});
            for (std::size_t c = 0; c < d; ++c) values.push_back(sum(i, c) / cover[i]);
        }
    }
    out.vectors = Tensor({out.refs.size(), d}, std::move(values));
    return out;
}

}  // namespace catseq

#pragma once

// Sliding-window LDA baseline. Each window of consecutive events is a
// bag-of-events document; a collapsed Gibbs sampler fits the topics, windows
// take their most probable topic, and events take the modal topic of the
// windows that cover them.

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "catseq/dataset.hpp"
#include "catseq/rng.hpp"

namespace catseq {

struct WindowCorpus {
    struct Window {
        std::size_t sequence = 0;  ///< index into the source dataset
        std::size_t start = 0;     ///< first covered position
        std::vector<int> tokens;   ///< event codes in order
    };

    std::vector<Window> windows;
    int vocab_size = 0;
    std::size_t window_len = 0;
    std::size_t skipped_sequences = 0;  ///< shorter than window_len

    /// Event frequencies of window w (length vocab_size).
    std::vector<int> counts(std::size_t w) const {
        std::vector<int> c(static_cast<std::size_t>(vocab_size), 0);
        for (int t : windows[w].tokens) ++c[static_cast<std::size_t>(t)];
        return c;
    }
};

inline WindowCorpus make_windows(const EventDataset& ds, std::size_t window_len = 32, std::size_t stride = 1) {
    if (window_len < 1 || stride < 1) throw std::invalid_argument("make_windows: window_len and stride must be >= 1");
    if (ds.vocab_sizes.empty()) throw std::invalid_argument("make_windows: dataset declares no vocabulary");
    WindowCorpus corpus;
    corpus.vocab_size = ds.vocab_sizes[0];
    corpus.window_len = window_len;
    for (std::size_t s = 0; s < ds.sequences.size(); ++s) {
        const auto& ev = ds.sequences[s].events;
        if (ev.size() < window_len) {
            ++corpus.skipped_sequences;
            continue;
        }
        for (std::size_t start = 0; start + window_len <= ev.size(); start += stride)
            corpus.windows.push_back({s, start, std::vector<int>(ev.begin() + static_cast<std::ptrdiff_t>(start),
                                                                 ev.begin() + static_cast<std::ptrdiff_t>(start + window_len))});
    }
    return corpus;
}

struct LdaConfig {
    int topics = 6;
    double doc_topic_prior = -1.0;  ///< <= 0 means 1 / topics
    double topic_word_prior = 0.1;
    int iterations = 1000;
    int burn_in = 200;
    std::uint64_t seed = 7;
};

struct LdaModel {
    int topics = 0;
    int vocab_size = 0;
    double doc_topic_prior = 0.0;
    double topic_word_prior = 0.0;
    std::vector<std::vector<double>> topic_word;  ///< K x V, rows sum to 1
    std::vector<std::vector<double>> doc_topic;   ///< W x K, rows sum to 1

    nlohmann::json to_json() const {
        return {{"topics", topics},
                {"vocab_size", vocab_size},
                {"doc_topic_prior", doc_topic_prior},
                {"topic_word_prior", topic_word_prior},
                {"topic_word", topic_word},
                {"doc_topic", doc_topic}};
    }
};

/// Collapsed Gibbs sampling; the returned distributions average the smoothed
/// count estimates over all post-burn-in sweeps.
inline LdaModel lda_fit(const WindowCorpus& corpus, const LdaConfig& config) {
    if (config.topics < 1) throw std::invalid_argument("lda: topics must be >= 1");
    if (corpus.windows.empty()) throw std::invalid_argument("lda: empty corpus");
    if (config.iterations < 1 || config.burn_in < 0 || config.burn_in >= config.iterations)
        throw std::invalid_argument("lda: need 0 <= burn_in < iterations");
    const auto K = static_cast<std::size_t>(config.topics);
    const auto V = static_cast<std::size_t>(corpus.vocab_size);
    const std::size_t W = corpus.windows.size();
    const double alpha = config.doc_topic_prior > 0.0 ? config.doc_topic_prior : 1.0 / static_cast<double>(K);
    const double beta = config.topic_word_prior;
    if (!(beta > 0.0)) throw std::invalid_argument("lda: topic_word_prior must be positive");

    Rng rng(config.seed);
    std::vector<std::vector<std::uint16_t>> z(W);
    std::vector<int> ndk(W * K, 0), nkw(K * V, 0), nk(K, 0);
    for (std::size_t d = 0; d < W; ++d) {
        const auto& toks = corpus.windows[d].tokens;
        z[d].resize(toks.size());
        for (std::size_t i = 0; i < toks.size(); ++i) {
            const auto k = static_cast<std::size_t>(rng.below(K));
            z[d][i] = static_cast<std::uint16_t>(k);
            ++ndk[d * K + k];
            ++nkw[k * V + static_cast<std::size_t>(toks[i])];
            ++nk[k];
        }
    }

    LdaModel model;
    model.topics = config.topics;
    model.vocab_size = corpus.vocab_size;
    model.doc_topic_prior = alpha;
    model.topic_word_prior = beta;
    std::vector<double> acc_dk(W * K, 0.0), acc_kw(K * V, 0.0);
    std::vector<double> p(K);
    const double vbeta = static_cast<double>(V) * beta;
    for (int it = 0; it < config.iterations; ++it) {
        for (std::size_t d = 0; d < W; ++d) {
            const auto& toks = corpus.windows[d].tokens;
            int* nd = &ndk[d * K];
            for (std::size_t i = 0; i < toks.size(); ++i) {
                const auto w = static_cast<std::size_t>(toks[i]);
                std::size_t k = z[d][i];
                --nd[k];
                --nkw[k * V + w];
                --nk[k];
                double total = 0.0;
                for (std::size_t t = 0; t < K; ++t) {
                    total += (nd[t] + alpha) * (nkw[t * V + w] + beta) / (nk[t] + vbeta);
                    p[t] = total;
                }
                const double u = rng.uniform() * total;
                k = static_cast<std::size_t>(std::upper_bound(p.begin(), p.end(), u) - p.begin());
                if (k >= K) k = K - 1;
                z[d][i] = static_cast<std::uint16_t>(k);
                ++nd[k];
                ++nkw[k * V + w];
                ++nk[k];
            }
        }
        if (it >= config.burn_in) {
            for (std::size_t d = 0; d < W; ++d) {
                const double len = static_cast<double>(corpus.windows[d].tokens.size());
                for (std::size_t k = 0; k < K; ++k)
                    acc_dk[d * K + k] += (ndk[d * K + k] + alpha) / (len + static_cast<double>(K) * alpha);
            }
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t w = 0; w < V; ++w) acc_kw[k * V + w] += (nkw[k * V + w] + beta) / (nk[k] + vbeta);
        }
    }
    model.doc_topic.assign(W, std::vector<double>(K));
    model.topic_word.assign(K, std::vector<double>(V));
    for (std::size_t d = 0; d < W; ++d) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += acc_dk[d * K + k];
        for (std::size_t k = 0; k < K; ++k) model.doc_topic[d][k] = acc_dk[d * K + k] / s;
    }
    for (std::size_t k = 0; k < K; ++k) {
        double s = 0.0;
        for (std::size_t w = 0; w < V; ++w) s += acc_kw[k * V + w];
        for (std::size_t w = 0; w < V; ++w) model.topic_word[k][w] = acc_kw[k * V + w] / s;
    }
    return model;
}

/// Index of the largest entry; ties resolve to the lowest index.
inline int argmax_lowest(const std::vector<double>& v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

inline std::vector<int> window_topics(const LdaModel& model) {
    std::vector<int> out;
    out.reserve(model.doc_topic.size());
    for (const auto& row : model.doc_topic) out.push_back(argmax_lowest(row));
    return out;
}

namespace detail {

/// Most frequent value; ties resolve to the smallest value.
inline int mode_lowest(const std::map<int, int>& counts) {
    int best = -1, best_count = 0;
    for (auto& [label, c] : counts)
        if (c > best_count) {
            best = label;
            best_count = c;
        }
    return best;
}

}  // namespace detail

/// Per-event label = modal label of the covering windows. Events in sequences
/// that produced no window are labeled noise.
inline LabelAssignment event_labels(const EventDataset& ds, const WindowCorpus& corpus,
                                    const std::vector<int>& window_labels) {
    if (window_labels.size() != corpus.windows.size())
        throw std::invalid_argument("event_labels: one label per window required");
    std::vector<std::vector<std::map<int, int>>> votes(ds.sequences.size());
    for (std::size_t s = 0; s < ds.sequences.size(); ++s) votes[s].resize(ds.sequences[s].size());
    for (std::size_t w = 0; w < corpus.windows.size(); ++w) {
        const auto& win = corpus.windows[w];
        for (std::size_t i = 0; i < win.tokens.size(); ++i) ++votes[win.sequence][win.start + i][window_labels[w]];
    }
    LabelAssignment la;
    for (std::size_t s = 0; s < ds.sequences.size(); ++s)
        for (std::size_t i = 0; i < ds.sequences[s].size(); ++i) {
            la.refs.push_back({ds.sequences[s].patient_id, static_cast<int>(i)});
            la.labels.push_back(votes[s][i].empty() ? LabelAssignment::noise : detail::mode_lowest(votes[s][i]));
        }
    return la;
}

/// Majority true group of the events inside each window (ties to the lower id).
inline std::vector<int> window_level_truth(const EventDataset& ds, const WindowCorpus& corpus) {
    std::vector<int> out;
    out.reserve(corpus.windows.size());
    for (const auto& win : corpus.windows) {
        const auto& groups = ds.sequences[win.sequence].groups;
        if (groups.empty()) throw std::invalid_argument("window_level_truth: dataset has no true groups");
        std::map<int, int> counts;
        for (std::size_t i = 0; i < win.tokens.size(); ++i) ++counts[groups[win.start + i]];
        out.push_back(detail::mode_lowest(counts));
    }
    return out;
}

}  // namespace catseq

#pragma once

// Synthetic event sequences with latent treatment groups. Each group owns a
// random permutation of the event vocabulary and a Zipf law over ranks; the
// active group persists along a sequence and is redrawn uniformly at each step
// with probability alpha (the redraw may return the incumbent group).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "catseq/dataset.hpp"
#include "catseq/rng.hpp"

namespace catseq {

struct SynthConfig {
    int vocab_size = 100;
    int group_count = 6;
    double alpha = 0.03;
    std::vector<double> betas = std::vector<double>(6, 2.0);
    int patients = 100;
    int seq_len = 1000;
    std::uint64_t seed = 1;

    void validate() const {
        if (vocab_size < 1) throw std::invalid_argument("synth: vocab_size must be >= 1");
        if (group_count < 1) throw std::invalid_argument("synth: group_count must be >= 1");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("synth: alpha must lie in [0, 1]");
        if (betas.size() != static_cast<std::size_t>(group_count))
            throw std::invalid_argument("synth: expected " + std::to_string(group_count) + " betas, got " +
                                        std::to_string(betas.size()));
        for (double b : betas)
            if (!(b > 0.0) || !std::isfinite(b)) throw std::invalid_argument("synth: betas must be positive");
        if (patients < 1) throw std::invalid_argument("synth: patients must be >= 1");
        if (seq_len < 1) throw std::invalid_argument("synth: seq_len must be >= 1");
    }
};

/// pmf[k] proportional to (k + 1)^-beta over k = 0..size-1.
inline std::vector<double> zipf_pmf(double beta, int size) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("zipf_pmf: beta must be positive");
    if (size < 1) throw std::invalid_argument("zipf_pmf: size must be positive");
    std::vector<double> pmf(static_cast<std::size_t>(size));
    double total = 0.0;
    for (int k = 0; k < size; ++k) {
        pmf[static_cast<std::size_t>(k)] = std::pow(static_cast<double>(k + 1), -beta);
        total += pmf[static_cast<std::size_t>(k)];
    }
    for (auto& p : pmf) p /= total;
    return pmf;
}

struct GroupModel {
    std::vector<int> permutation;  ///< rank -> event code
    std::vector<double> cdf;       ///< cumulative Zipf mass over ranks

    /// Probability of each event code under this group.
    std::vector<double> event_pmf() const {
        std::vector<double> out(permutation.size());
        for (std::size_t r = 0; r < permutation.size(); ++r)
            out[static_cast<std::size_t>(permutation[r])] = cdf[r] - (r ? cdf[r - 1] : 0.0);
        return out;
    }

    /// Inverse-CDF draw: the first rank whose cumulative mass exceeds u.
    int sample(Rng& rng) const {
        const double u = rng.uniform();
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) --it;
        return permutation[static_cast<std::size_t>(it - cdf.begin())];
    }
};

inline std::vector<GroupModel> build_group_models(const SynthConfig& config, Rng& rng) {
    config.validate();
    std::vector<GroupModel> models;
    models.reserve(static_cast<std::size_t>(config.group_count));
    for (int g = 0; g < config.group_count; ++g) {
        GroupModel m;
        m.permutation.resize(static_cast<std::size_t>(config.vocab_size));
        for (int e = 0; e < config.vocab_size; ++e) m.permutation[static_cast<std::size_t>(e)] = e;
        rng.shuffle(m.permutation);
        const auto pmf = zipf_pmf(config.betas[static_cast<std::size_t>(g)], config.vocab_size);
        m.cdf.resize(pmf.size());
        double acc = 0.0;
        for (std::size_t k = 0; k < pmf.size(); ++k) m.cdf[k] = (acc += pmf[k]);
        m.cdf.back() = 1.0;
        models.push_back(std::move(m));
    }
    return models;
}

/// One step of the group process: with probability alpha redraw uniformly.
inline int next_group(int prev, const SynthConfig& config, Rng& rng) {
    if (rng.uniform() < config.alpha) return static_cast<int>(rng.below(static_cast<std::uint64_t>(config.group_count)));
    return prev;
}

/// Group models come from the stream derived from (seed, 0); patient p draws
/// from (seed, p + 1), so patients can be generated independently.
inline std::vector<GroupModel> group_models_for(const SynthConfig& config) {
    Rng rng(derive_seed(config.seed, 0));
    return build_group_models(config, rng);
}

inline Sequence generate_patient(const SynthConfig& config, const std::vector<GroupModel>& models, int patient) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(patient) + 1));
    Sequence s;
    s.patient_id = std::to_string(patient);
    s.events.resize(static_cast<std::size_t>(config.seq_len));
    s.groups.resize(static_cast<std::size_t>(config.seq_len));
    int g = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.group_count)));
    for (int i = 0; i < config.seq_len; ++i) {
        if (i > 0) g = next_group(g, config, rng);
        s.groups[static_cast<std::size_t>(i)] = g;
        s.events[static_cast<std::size_t>(i)] = models[static_cast<std::size_t>(g)].sample(rng);
    }
    return s;
}

inline EventDataset generate_dataset(const SynthConfig& config) {
    config.validate();
    const auto models = group_models_for(config);
    EventDataset ds;
    ds.vocab_sizes = {config.vocab_size};
    ds.group_count = config.group_count;
    ds.sequences.reserve(static_cast<std::size_t>(config.patients));
    for (int p = 0; p < config.patients; ++p) ds.sequences.push_back(generate_patient(config, models, p));
    return ds;
}

/// Expected mean run length of a group under the literal redraw rule.
inline double expected_run_length(double alpha, int group_count) {
    return static_cast<double>(group_count) / (alpha * static_cast<double>(group_count - 1));
}

}  // namespace catseq

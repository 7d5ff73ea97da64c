#pragma once

// Clustering agreement: entropy, mutual information, expected mutual
// information under the hypergeometric permutation model, and adjusted mutual
// information with an arithmetic-mean normalizer. All logs are natural.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "catseq/numcore.hpp"

namespace catseq {

struct ContingencyTable {
    std::vector<std::vector<std::int64_t>> counts;  ///< rows: true classes, cols: predicted
    std::vector<std::int64_t> row_sums;
    std::vector<std::int64_t> col_sums;
    std::int64_t n = 0;

    static ContingencyTable from_counts(std::vector<std::vector<std::int64_t>> counts) {
        ContingencyTable t;
        t.counts = std::move(counts);
        const std::size_t cols = t.counts.empty() ? 0 : t.counts[0].size();
        t.row_sums.assign(t.counts.size(), 0);
        t.col_sums.assign(cols, 0);
        for (std::size_t i = 0; i < t.counts.size(); ++i) {
            if (t.counts[i].size() != cols) throw std::invalid_argument("contingency: ragged table");
            for (std::size_t j = 0; j < cols; ++j) {
                if (t.counts[i][j] < 0) throw std::invalid_argument("contingency: negative count");
                t.row_sums[i] += t.counts[i][j];
                t.col_sums[j] += t.counts[i][j];
            }
            t.n += t.row_sums[i];
        }
        return t;
    }

    /// Classes are relabeled densely in increasing label order.
    static ContingencyTable from_labels(const std::vector<int>& truth, const std::vector<int>& pred) {
        if (truth.size() != pred.size()) throw std::invalid_argument("contingency: label vectors differ in length");
        std::map<int, std::size_t> ri, ci;
        for (int v : truth) ri.emplace(v, 0);
        for (int v : pred) ci.emplace(v, 0);
        std::size_t k = 0;
        for (auto& [_, idx] : ri) idx = k++;
        k = 0;
        for (auto& [_, idx] : ci) idx = k++;
        std::vector<std::vector<std::int64_t>> counts(ri.size(), std::vector<std::int64_t>(ci.size(), 0));
        for (std::size_t i = 0; i < truth.size(); ++i) ++counts[ri[truth[i]]][ci[pred[i]]];
        return from_counts(std::move(counts));
    }
};

inline double entropy_of(const std::vector<std::int64_t>& marginal, std::int64_t n) {
    double h = 0.0;
    for (auto a : marginal) {
        if (a == 0) continue;
        const double p = static_cast<double>(a) / static_cast<double>(n);
        h -= p * std::log(p);
    }
    return h;
}

inline double entropy(const std::vector<int>& labels) {
    std::map<int, std::int64_t> counts;
    for (int v : labels) ++counts[v];
    std::vector<std::int64_t> m;
    for (auto& [_, c] : counts) m.push_back(c);
    return entropy_of(m, static_cast<std::int64_t>(labels.size()));
}

inline double mutual_info(const ContingencyTable& t) {
    if (t.n <= 0) throw std::invalid_argument("mutual_info: empty table");
    const double n = static_cast<double>(t.n);
    double mi = 0.0;
    for (std::size_t i = 0; i < t.counts.size(); ++i)
        for (std::size_t j = 0; j < t.counts[i].size(); ++j) {
            const auto nij = t.counts[i][j];
            if (nij == 0) continue;
            const double v = static_cast<double>(nij);
            mi += (v / n) * std::log(n * v / (static_cast<double>(t.row_sums[i]) * static_cast<double>(t.col_sums[j])));
        }
    return std::max(mi, 0.0);
}

/// E[MI] over all tables with the given marginals (hypergeometric model).
inline double expected_mi(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b, std::int64_t n) {
    std::int64_t sa = 0, sb = 0;
    for (auto v : a) sa += v;
    for (auto v : b) sb += v;
    if (sa != n || sb != n) throw std::invalid_argument("expected_mi: marginals must sum to n");
    if (n <= 0) throw std::invalid_argument("expected_mi: n must be positive");
    const double N = static_cast<double>(n);
    auto lfact = [](std::int64_t k) { return std::lgamma(static_cast<double>(k) + 1.0); };
    const double lfn = lfact(n);
    double emi = 0.0;
    for (auto ai : a) {
        if (ai == 0) continue;
        for (auto bj : b) {
            if (bj == 0) continue;
            const std::int64_t lo = std::max<std::int64_t>(1, ai + bj - n);
            const std::int64_t hi = std::min(ai, bj);
            const double fixed = lfact(ai) + lfact(bj) + lfact(n - ai) + lfact(n - bj) - lfn;
            for (std::int64_t nij = lo; nij <= hi; ++nij) {
                const double v = static_cast<double>(nij);
                const double term = v / N * std::log(N * v / (static_cast<double>(ai) * static_cast<double>(bj)));
                const double log_p = fixed - lfact(nij) - lfact(ai - nij) - lfact(bj - nij) - lfact(n - ai - bj + nij);
                emi += term * std::exp(log_p);
            }
        }
    }
    return emi;
}

inline double expected_mi(const ContingencyTable& t) { return expected_mi(t.row_sums, t.col_sums, t.n); }

struct AmiResult {
    double ami = 0.0;
    double mi = 0.0;
    double emi = 0.0;
    double h_true = 0.0;
    double h_pred = 0.0;
    std::size_t n = 0;

    nlohmann::json to_json() const {
        return {{"ami", ami}, {"mi", mi}, {"emi", emi}, {"h_true", h_true}, {"h_pred", h_pred}, {"n", n}};
    }
};

/// How predicted noise (-1) enters the score: as its own class, or dropped.
enum class NoiseMode { include, exclude };

inline AmiResult ami_detail(std::vector<int> truth, std::vector<int> pred, NoiseMode noise = NoiseMode::include) {
    if (truth.size() != pred.size()) throw std::invalid_argument("ami: label vectors differ in length");
    if (noise == NoiseMode::exclude) {
        std::vector<int> t2, p2;
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (pred[i] != -1) {
                t2.push_back(truth[i]);
                p2.push_back(pred[i]);
            }
        truth.swap(t2);
        pred.swap(p2);
    }
    if (truth.empty()) throw std::invalid_argument("ami: empty input");
    const auto t = ContingencyTable::from_labels(truth, pred);
    AmiResult r;
    r.n = truth.size();
    r.h_true = entropy_of(t.row_sums, t.n);
    r.h_pred = entropy_of(t.col_sums, t.n);
    const auto classes = t.row_sums.size();
    const auto clusters = t.col_sums.size();
    if (classes == clusters && (classes == 1 || classes == 0)) {
        r.ami = 1.0;
        return r;
    }
    r.mi = mutual_info(t);
    r.emi = expected_mi(t);
    const double normalizer = 0.5 * (r.h_true + r.h_pred);
    double denom = normalizer - r.emi;
    const double eps = std::numeric_limits<double>::epsilon();
    denom = denom < 0.0 ? std::min(denom, -eps) : std::max(denom, eps);
    r.ami = (r.mi - r.emi) / denom;
    return r;
}

inline double ami(const std::vector<int>& truth, const std::vector<int>& pred, NoiseMode noise = NoiseMode::include) {
    return ami_detail(truth, pred, noise).ami;
}

/// Mean distance between group centroids over all group pairs, divided by the
/// mean distance of a point to its own group's centroid. Points labelled < 0
/// are ignored.
inline double separation_ratio(const Tensor& points, const std::vector<int>& labels) {
    if (labels.size() != points.rows()) throw std::invalid_argument("separation_ratio: label count mismatch");
    const std::size_t d = points.cols();
    std::map<int, std::pair<std::vector<double>, std::size_t>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) continue;
        auto& [sum, count] = groups[labels[i]];
        sum.resize(d);
        for (std::size_t k = 0; k < d; ++k) sum[k] += points(i, k);
        ++count;
    }
    if (groups.size() < 2) throw std::invalid_argument("separation_ratio: need at least two groups");
    for (auto& [_, g] : groups)
        for (auto& v : g.first) v /= static_cast<double>(g.second);
    auto dist = [d](auto&& a, auto&& b) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += (a(k) - b(k)) * (a(k) - b(k));
        return std::sqrt(s);
    };
    double inter = 0.0;
    std::size_t pairs = 0;
    for (auto a = groups.begin(); a != groups.end(); ++a)
        for (auto b = std::next(a); b != groups.end(); ++b, ++pairs)
            inter += dist([&](std::size_t k) { return a->second.first[k]; }, [&](std::size_t k) { return b->second.first[k]; });
    double intra = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) continue;
        const auto& c = groups[labels[i]].first;
        intra += dist([&](std::size_t k) { return points(i, k); }, [&](std::size_t k) { return c[k]; });
        ++n;
    }
    intra /= static_cast<double>(n);
    if (intra == 0.0) return std::numeric_limits<double>::infinity();
    return (inter / static_cast<double>(pairs)) / intra;
}

}  // namespace catseq

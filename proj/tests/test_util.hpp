#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "catseq/numcore.hpp"
#include "catseq/rng.hpp"

namespace catseq::testing {

inline Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(r, c);
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

inline double rel_error(double a, double b, double floor = 1e-3) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

using InputLoss = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

/// Max relative error between backward() and central differences with
/// respect to every element of every input.
inline double input_grad_error(std::vector<Tensor> inputs, const InputLoss& loss, double h = 1e-5) {
    Graph g;
    std::vector<NodeId> ids;
    for (const auto& t : inputs) ids.push_back(g.variable(t));
    g.backward(loss(g, ids));
    std::vector<Tensor> analytic;
    for (auto id : ids) analytic.push_back(g.grad(id));

    auto eval = [&] {
        Graph f;
        std::vector<NodeId> v;
        for (const auto& t : inputs) v.push_back(f.constant(t));
        return f.value(loss(f, v))[0];
    };
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k)
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double x = inputs[k][i];
            inputs[k][i] = x + h;
            const double up = eval();
            inputs[k][i] = x - h;
            const double down = eval();
            inputs[k][i] = x;
            worst = std::max(worst, rel_error(analytic[k][i], (up - down) / (2 * h)));
        }
    return worst;
}

/// Same check for every scalar of a parameter store.
inline double param_grad_error(ParamStore& params, const std::function<NodeId(Graph&)>& loss, double h = 1e-5) {
    params.zero_grad();
    {
        Graph g(&params);
        g.backward(loss(g));
    }
    std::vector<Tensor> analytic;
    for (const auto& p : params) analytic.push_back(p.grad);
    auto eval = [&] {
        Graph g(&params);
        return g.value(loss(g))[0];
    };
    double worst = 0.0;
    for (ParamId id = 0; id < params.size(); ++id) {
        auto& value = params[id].value;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double x = value[i];
            value[i] = x + h;
            const double up = eval();
            value[i] = x - h;
            const double down = eval();
            value[i] = x;
            worst = std::max(worst, rel_error(analytic[id][i], (up - down) / (2 * h)));
        }
    }
    return worst;
}

}  // namespace catseq::testing

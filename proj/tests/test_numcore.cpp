#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "catseq/numcore.hpp"
#include "test_util.hpp"

using namespace catseq;
using catseq::testing::input_grad_error;
using catseq::testing::random_tensor;

namespace {

// Weighted sum so every output element gets a distinct upstream gradient.
NodeId weighted(Graph& g, NodeId y, std::uint64_t seed = 99) {
    Rng rng(seed);
    const auto& v = g.value(y);
    return g.sum(g.mul(y, g.constant(random_tensor(v.rows(), v.cols(), rng))));
}

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
    EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
    EXPECT_THROW(Tensor({2, 2, 2}, std::vector<double>(8)), ShapeError);
    const auto t = Tensor::matrix(2, 2, {1, 2, 3, 4});
    EXPECT_EQ(t(1, 0), 3.0);
    EXPECT_EQ(t.shape_string(), "[2, 2]");
}

TEST(Graph, MatmulShapeMismatchThrows) {
    Graph g;
    const auto a = g.constant(Tensor(2, 3));
    const auto b = g.constant(Tensor(2, 3));
    EXPECT_THROW(g.matmul(a, b), ShapeError);
}

TEST(Graph, MatmulValues) {
    Graph g;
    const auto c = g.matmul(g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4})), g.constant(Tensor::matrix(2, 1, {5, 6})));
    EXPECT_EQ(g.value(c)[0], 17.0);
    EXPECT_EQ(g.value(c)[1], 39.0);
}

TEST(Graph, NonFiniteForwardThrows) {
    Graph g;
    const double inf = std::numeric_limits<double>::infinity();
    EXPECT_THROW(g.add(g.constant(Tensor::matrix(1, 1, {inf})), g.constant(Tensor::matrix(1, 1, {-inf}))),
                 NumericError);
}

TEST(Graph, SigmoidIsStableAtExtremes) {
    Graph g;
    const auto y = g.sigmoid(g.constant(Tensor::matrix(1, 2, {-1000, 1000})));
    EXPECT_EQ(g.value(y)[0], 0.0);
    EXPECT_EQ(g.value(y)[1], 1.0);
}

TEST(Graph, SoftmaxRowsSumToOne) {
    Rng rng(1);
    Graph g;
    const auto p = g.softmax_rows(g.constant(random_tensor(4, 7, rng, -50, 50)));
    for (std::size_t r = 0; r < 4; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 7; ++c) s += g.value(p)(r, c);
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Graph, BackwardMisuse) {
    Graph g;
    const auto x = g.variable(Tensor(2, 2, 1.0));
    EXPECT_THROW(g.backward(x), ShapeError);
    const auto l = g.sum(x);
    g.backward(l);
    EXPECT_THROW(g.backward(l), std::logic_error);
    EXPECT_THROW(g.sum(x), std::logic_error);
}

TEST(Graph, StaleParameterIsDetected) {
    ParamStore ps;
    const auto w = ps.add("w", Tensor(1, 1, 2.0));
    Graph g(&ps);
    const auto l = g.sum(g.param(w));
    ps.assign(w, Tensor(1, 1, 3.0));
    EXPECT_THROW(g.backward(l), std::logic_error);
}

TEST(Graph, ParamGradAccumulates) {
    ParamStore ps;
    const auto w = ps.add("w", Tensor(1, 2, 1.0));
    for (int i = 0; i < 2; ++i) {
        Graph g(&ps);
        g.backward(g.sum(g.scale(g.param(w), 3.0)));
    }
    EXPECT_EQ(ps[w].grad[0], 6.0);
    ps.zero_grad();
    EXPECT_EQ(ps[w].grad[1], 0.0);
}

// Finite-difference checks, one per op.
struct OpCase {
    const char* name;
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    std::function<NodeId(Graph&, const std::vector<NodeId>&)> op;
};

void PrintTo(const OpCase& c, std::ostream* os) { *os << c.name; }

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
    const auto& c = GetParam();
    Rng rng(7);
    std::vector<Tensor> in;
    for (auto [r, k] : c.shapes) in.push_back(random_tensor(r, k, rng));
    const double err = input_grad_error(in, [&](Graph& g, const std::vector<NodeId>& x) { return weighted(g, c.op(g, x)); });
    EXPECT_LT(err, 1e-6) << c.name;
}

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradient,
    ::testing::Values(
        OpCase{"matmul", {{3, 4}, {4, 2}}, [](Graph& g, auto& x) { return g.matmul(x[0], x[1]); }},
        OpCase{"add", {{3, 4}, {3, 4}}, [](Graph& g, auto& x) { return g.add(x[0], x[1]); }},
        OpCase{"add_row", {{3, 4}, {1, 4}}, [](Graph& g, auto& x) { return g.add_row(x[0], x[1]); }},
        OpCase{"sub", {{2, 5}, {2, 5}}, [](Graph& g, auto& x) { return g.sub(x[0], x[1]); }},
        OpCase{"mul", {{2, 5}, {2, 5}}, [](Graph& g, auto& x) { return g.mul(x[0], x[1]); }},
        OpCase{"concat", {{3, 2}, {3, 3}}, [](Graph& g, auto& x) { return g.concat({x[0], x[1]}); }},
        OpCase{"concat_rows", {{2, 3}, {4, 3}}, [](Graph& g, auto& x) { return g.concat_rows({x[0], x[1]}); }},
        OpCase{"slice", {{5, 6}}, [](Graph& g, auto& x) { return g.slice(x[0], 1, 3, 2, 3); }},
        OpCase{"transpose", {{3, 5}}, [](Graph& g, auto& x) { return g.transpose(x[0]); }},
        OpCase{"relu", {{4, 4}}, [](Graph& g, auto& x) { return g.relu(x[0]); }},
        OpCase{"sigmoid", {{4, 4}}, [](Graph& g, auto& x) { return g.sigmoid(x[0]); }},
        OpCase{"softmax_rows", {{3, 6}}, [](Graph& g, auto& x) { return g.softmax_rows(x[0]); }},
        OpCase{"layer_norm", {{3, 6}, {1, 6}, {1, 6}}, [](Graph& g, auto& x) { return g.layer_norm(x[0], x[1], x[2]); }},
        OpCase{"scale", {{2, 3}}, [](Graph& g, auto& x) { return g.scale(x[0], -2.5); }},
        OpCase{"mse", {{3, 3}, {3, 3}}, [](Graph& g, auto& x) { return g.mse(x[0], x[1]); }}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(Adam, FirstStepMatchesHandComputation) {
    ParamStore ps;
    const auto w = ps.add("w", Tensor(1, 1, 1.0));
    ps[w].grad[0] = 0.5;
    auto st = make_adam_state(ps, AdamConfig{0.1});
    adam_step(ps, st);
    // m = 0.05, v = 2.5e-4; bias-corrected: 0.5 and 0.25
    EXPECT_DOUBLE_EQ(ps[w].value[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8));
    EXPECT_EQ(ps[w].version, 1u);
}

TEST(Adam, MinimizesQuadratic) {
    ParamStore ps;
    const auto w = ps.add("w", Tensor::matrix(1, 3, {4, -3, 2}));
    auto st = make_adam_state(ps, AdamConfig{0.05});
    const auto target = Tensor::matrix(1, 3, {1, 2, 3});
    for (int i = 0; i < 2000; ++i) {
        ps.zero_grad();
        Graph g(&ps);
        g.backward(g.mse(g.param(w), g.constant(target)));
        adam_step(ps, st);
    }
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(ps[w].value[i], target[i], 1e-3);
}

TEST(Adam, RejectsBadState) {
    ParamStore ps;
    ps.add("w", Tensor(1, 1));
    EXPECT_THROW(make_adam_state(ps, AdamConfig{0.0}), std::invalid_argument);
    AdamState empty;
    empty.config.lr = 0.1;
    EXPECT_THROW(adam_step(ps, empty), ShapeError);
}

TEST(Convergence, StopsAfterPatienceStaleEpochs) {
    ConvergenceMonitor m(1e-4, 3);
    EXPECT_FALSE(m.update(1.0));
    EXPECT_FALSE(m.update(0.5));
    EXPECT_FALSE(m.update(0.49999));
    EXPECT_FALSE(m.update(0.49999));
    EXPECT_TRUE(m.update(0.49999));
}

TEST(Convergence, ImprovementResetsCounter) {
    ConvergenceMonitor m(1e-4, 2);
    m.update(1.0);
    EXPECT_FALSE(m.update(1.0));
    EXPECT_FALSE(m.update(0.5));
    EXPECT_FALSE(m.update(0.5));
    EXPECT_TRUE(m.update(0.6));
}

TEST(Glorot, WithinBound) {
    Rng rng(3);
    const auto t = glorot_uniform(10, 30, rng);
    const double b = std::sqrt(6.0 / 40.0);
    for (double v : t.values()) EXPECT_LE(std::abs(v), b);
}

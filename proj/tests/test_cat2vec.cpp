#include <gtest/gtest.h>

#include "catseq/cat2vec.hpp"
#include "catseq/syngen.hpp"
#include "test_util.hpp"

using namespace catseq;
using catseq::testing::param_grad_error;

namespace {

Cat2VecConfig tiny(std::vector<int> dims = {6}) {
    Cat2VecConfig c;
    c.input_dims = std::move(dims);
    c.hidden_dim = 4;
    c.encoding_dim = 3;
    return c;
}

EventDataset small_synth() {
    SynthConfig s;
    s.vocab_size = 20;
    s.patients = 4;
    s.seq_len = 200;
    return generate_dataset(s);
}

}  // namespace

TEST(Cat2Vec, OutputShapeAndRange) {
    Cat2Vec m(tiny());
    const auto out = m.encode_codes({{0, 3, 5}});
    ASSERT_EQ(out.rows(), 3u);
    ASSERT_EQ(out.cols(), 3u);
    for (double v : out.values()) EXPECT_TRUE(v > 0.0 && v < 1.0);
}

TEST(Cat2Vec, GradientsMatchFiniteDifferences) {
    Cat2Vec m(tiny({6, 3}), 5);
    const auto a0 = m.one_hot(0, {0, 2, 5, 1}), a1 = m.one_hot(1, {0, 1, 2, 2});
    const auto b0 = m.one_hot(0, {1, 2, 4, 3}), b1 = m.one_hot(1, {2, 1, 0, 1});
    const double err = param_grad_error(m.params(), [&](Graph& g) {
        const auto ya = m.forward(g, {g.constant(a0), g.constant(a1)});
        const auto yb = m.forward(g, {g.constant(b0), g.constant(b1)});
        return g.mse(ya, yb);
    });
    EXPECT_LT(err, 1e-6);
}

TEST(Cat2Vec, EncodeValidatesOneHot) {
    Cat2Vec m(tiny());
    EXPECT_NO_THROW(m.encode({{0, 0, 1, 0, 0, 0}}));
    EXPECT_THROW(m.encode({{0, 1, 1, 0, 0, 0}}), std::invalid_argument);
    EXPECT_THROW(m.encode({{0, 0, 0, 0, 0, 0}}), std::invalid_argument);
    EXPECT_THROW(m.encode({{0, 0.5, 0, 0, 0, 0}}), std::invalid_argument);
    EXPECT_THROW(m.encode({{0, 0, 1}}), std::invalid_argument);
    EXPECT_THROW(m.encode_codes({{6}}), std::invalid_argument);
}

TEST(Cat2Vec, EncodeAgreesWithCodes) {
    Cat2Vec m(tiny());
    const auto v = m.encode({{0, 0, 0, 1, 0, 0}});
    const auto t = m.encode_codes({{3}});
    for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(v[k], t(0, k));
}

TEST(Cat2Vec, TrainingLowersPairLoss) {
    const auto ds = small_synth();
    Cat2VecConfig c;
    c.input_dims = {20};
    Cat2Vec m(c, 3);
    TrainOptions opt;
    opt.lr = 1e-2;
    opt.batch_size = 64;
    opt.max_epochs = 5;
    const auto r = m.train(ds, opt);
    ASSERT_FALSE(r.epoch_losses.empty());
    EXPECT_LT(m.pair_loss(ds), r.initial_loss);
}

TEST(Cat2Vec, TrainingIsDeterministic) {
    const auto ds = small_synth();
    Cat2VecConfig c;
    c.input_dims = {20};
    TrainOptions opt;
    opt.max_epochs = 2;
    Cat2Vec a(c, 3), b(c, 3);
    EXPECT_EQ(a.train(ds, opt).epoch_losses, b.train(ds, opt).epoch_losses);
}

TEST(Cat2Vec, RejectsMismatchedData) {
    auto ds = small_synth();
    Cat2Vec narrow(tiny({10}));
    EXPECT_THROW(narrow.train(ds, {}), std::invalid_argument);
    Cat2Vec two(tiny({20, 4}));
    EXPECT_THROW(two.train(ds, {}), std::invalid_argument);
    EXPECT_THROW(Cat2Vec(tiny({0})), std::invalid_argument);
}

TEST(Cat2Vec, MultivariateDatasetTrains) {
    auto ds = small_synth();
    ds.vocab_sizes = {20, 3};
    for (auto& s : ds.sequences)
        for (int e : s.events) s.categories.push_back(e % 3);
    Cat2VecConfig c;
    c.input_dims = {20, 3};
    Cat2Vec m(c);
    TrainOptions opt;
    opt.max_epochs = 1;
    EXPECT_NO_THROW(m.train(ds, opt));
    EXPECT_EQ(encode_dataset(m, ds).vectors.rows(), ds.event_count());
}

TEST(Cat2Vec, SerializationRoundTrip) {
    Cat2Vec m(tiny({6, 3}), 9);
    const auto restored = Cat2Vec::from_json(nlohmann::json::parse(m.to_json().dump()));
    auto copy = restored;
    const std::vector<std::vector<int>> codes{{0, 4, 5}, {2, 0, 1}};
    EXPECT_EQ(m.encode_codes(codes).values(), copy.encode_codes(codes).values());
    auto bad = m.to_json();
    bad["version"] = 7;
    EXPECT_THROW(Cat2Vec::from_json(bad), std::runtime_error);
}

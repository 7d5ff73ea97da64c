#include <gtest/gtest.h>

#include <cmath>

#include "catseq/seq2seq.hpp"
#include "catseq/syngen.hpp"
#include "test_util.hpp"

using namespace catseq;
using catseq::testing::param_grad_error;
using catseq::testing::random_tensor;

namespace {

TransformerConfig tiny() {
    TransformerConfig c;
    c.d_model = 8;
    c.heads = 2;
    c.window_len = 4;
    c.ff_dim = 16;
    c.encoder_layers = 2;
    c.decoder_layers = 1;
    return c;
}

}  // namespace

TEST(Positional, KnownValues) {
    const auto pe = positional_encoding(5, 8);
    for (std::size_t i = 0; i < 8; i += 2) {
        EXPECT_EQ(pe(0, i), 0.0);
        EXPECT_EQ(pe(0, i + 1), 1.0);
    }
    EXPECT_NEAR(pe(1, 0), std::sin(1.0), 1e-15);
    EXPECT_NEAR(pe(1, 1), std::cos(1.0), 1e-15);
    EXPECT_NEAR(pe(3, 2), std::sin(3.0 / std::pow(10000.0, 0.25)), 1e-15);
    EXPECT_NEAR(pe(4, 7), std::cos(4.0 / std::pow(10000.0, 0.75)), 1e-15);
    EXPECT_THROW(positional_encoding(3, 5), std::invalid_argument);
}

TEST(Windows, StartsCoverTheTail) {
    EXPECT_EQ(window_starts(10, 4, 3), (std::vector<std::size_t>{0, 3, 6}));
    EXPECT_EQ(window_starts(10, 4, 4), (std::vector<std::size_t>{0, 4, 6}));
    EXPECT_EQ(window_starts(4, 4, 1), (std::vector<std::size_t>{0}));
    EXPECT_TRUE(window_starts(3, 4, 1).empty());
    EXPECT_THROW(window_starts(10, 4, 0), std::invalid_argument);
}

TEST(Seq2Seq, ConfigValidation) {
    auto c = tiny();
    c.heads = 3;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = tiny();
    c.encoder_layers = 0;
    EXPECT_THROW(Seq2Seq{c}, std::invalid_argument);
}

TEST(Seq2Seq, GradientsMatchFiniteDifferences) {
    for (auto mode : {DecoderInput::positional, DecoderInput::input}) {
        auto c = tiny();
        c.encoder_layers = 1;
        c.decoder_input = mode;
        Seq2Seq m(c, 3);
        Rng rng(1);
        const auto x = random_tensor(8, 8, rng);
        const double err = param_grad_error(m.params(), [&](Graph& g) {
            const NodeId in = g.constant(x);
            return g.mse(m.decode(g, m.encode(g, in, 2), in, 2), in);
        });
        EXPECT_LT(err, 1e-6);
    }
}

TEST(Seq2Seq, AttentionRowsAreDistributions) {
    Seq2Seq m(tiny());
    Rng rng(2);
    Seq2Seq::Trace trace;
    m.encode_window(random_tensor(4, 8, rng), &trace);
    ASSERT_EQ(trace.attention.size(), 4u);  // 2 layers x 2 heads
    for (const auto& p : trace.attention) {
        ASSERT_EQ(p.rows(), 4u);
        for (std::size_t r = 0; r < 4; ++r) {
            double s = 0;
            for (std::size_t c = 0; c < 4; ++c) {
                EXPECT_GE(p(r, c), 0.0);
                s += p(r, c);
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(Seq2Seq, PermutationEquivariantWithoutPositions) {
    auto c = tiny();
    c.positional = false;
    Seq2Seq m(c, 4);
    Rng rng(5);
    const auto x = random_tensor(4, 8, rng);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    Tensor px(4, 8);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t k = 0; k < 8; ++k) px(r, k) = x(perm[r], k);
    const auto a = m.encode_window(x);
    const auto b = m.encode_window(px);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(b(r, k), a(perm[r], k), 1e-12);

    // and the same model with positions switched on is not
    Seq2Seq p(tiny(), 4);
    const auto pa = p.encode_window(x);
    const auto pb = p.encode_window(px);
    EXPECT_GT(std::abs(pb(0, 0) - pa(2, 0)), 1e-9);
}

TEST(Seq2Seq, ZeroedTableMatchesNoPositions) {
    auto c = tiny();
    c.positional = false;
    Seq2Seq a(c, 6), b(tiny(), 6);
    b.set_positional_table(Tensor(4, 8));
    Rng rng(3);
    const auto x = random_tensor(4, 8, rng);
    const auto ea = a.encode_window(x), eb = b.encode_window(x);
    for (std::size_t i = 0; i < ea.size(); ++i) EXPECT_NEAR(ea[i], eb[i], 1e-12);
    EXPECT_THROW(b.set_positional_table(Tensor(5, 8)), ShapeError);
}

TEST(Seq2Seq, ScalerStandardizes) {
    Seq2Seq m(tiny());
    Rng rng(7);
    std::vector<Tensor> ws;
    for (int i = 0; i < 20; ++i) ws.push_back(random_tensor(4, 8, rng, 3.0, 3.2));
    m.fit_input_scaler(ws);
    double mean = 0, sq = 0;
    for (const auto& w : ws) {
        const auto p = m.prepare(w);
        for (std::size_t r = 0; r < 4; ++r) {
            mean += p(r, 5);
            sq += p(r, 5) * p(r, 5);
        }
    }
    EXPECT_NEAR(mean / 80, 0.0, 1e-12);
    EXPECT_NEAR(sq / 80, 1.0, 1e-12);
}

TEST(Seq2Seq, TrainingLowersLoss) {
    Seq2Seq m(tiny(), 8);
    Rng rng(8);
    std::vector<Tensor> ws;
    for (int i = 0; i < 16; ++i) ws.push_back(random_tensor(4, 8, rng));
    TrainOptions opt;
    opt.lr = 1e-2;
    opt.batch_size = 4;
    opt.max_epochs = 20;
    const auto r = m.train(ws, opt);
    EXPECT_LT(m.loss(ws), r.initial_loss);
    EXPECT_THROW(m.train({}, opt), std::invalid_argument);
    EXPECT_THROW(m.train({Tensor(5, 8)}, opt), ShapeError);
}

TEST(Seq2Seq, SerializationRoundTrip) {
    Seq2Seq m(tiny(), 9);
    Rng rng(9);
    std::vector<Tensor> ws;
    for (int i = 0; i < 3; ++i) ws.push_back(random_tensor(4, 8, rng, 0.0, 5.0));
    m.fit_input_scaler(ws);
    auto back = Seq2Seq::from_json(nlohmann::json::parse(m.to_json().dump()));
    EXPECT_EQ(back.input_shift().values(), m.input_shift().values());
    // Eigen may pick a different reduction order for differently aligned buffers
    const auto e0 = back.encode_window(ws[0]), e1 = m.encode_window(ws[0]);
    const auto r0 = back.autoencode(ws[1]), r1 = m.autoencode(ws[1]);
    for (std::size_t i = 0; i < e0.size(); ++i) {
        EXPECT_NEAR(e0[i], e1[i], 1e-12);
        EXPECT_NEAR(r0[i], r1[i], 1e-12);
    }
    auto bad = m.to_json();
    bad["format"] = "catseq.cat2vec";
    EXPECT_THROW(Seq2Seq::from_json(bad), std::runtime_error);
}

TEST(Representations, CoverEveryEventOfLongSequences) {
    SynthConfig s;
    s.vocab_size = 10;
    s.patients = 3;
    s.seq_len = 11;
    auto ds = generate_dataset(s);
    ds.sequences[1].events.resize(3);
    ds.sequences[1].groups.resize(3);
    Cat2VecConfig cc;
    cc.input_dims = {10};
    Cat2Vec c2v(cc);
    Seq2Seq m(tiny());
    const auto rep = event_representations(ds, c2v, m, 3);
    ASSERT_EQ(rep.size(), 22u);
    EXPECT_EQ(rep.refs[11].patient_id, ds.sequences[2].patient_id);
    EXPECT_EQ(rep.refs[11].position, 0);

    // batching does not change the averages
    const auto again = event_representations(ds, c2v, m, 3, 1);
    for (std::size_t i = 0; i < rep.vectors.size(); ++i) EXPECT_NEAR(again.vectors[i], rep.vectors[i], 1e-12);

    // the first event is covered by exactly one window
    const auto first = m.encode_window(slice_rows(c2v.encode_sequence(ds.sequences[0]), 0, 4));
    for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(rep.vectors(0, k), first(0, k), 1e-12);
    EXPECT_THROW(event_representations(ds, c2v, m, 5), std::invalid_argument);
}

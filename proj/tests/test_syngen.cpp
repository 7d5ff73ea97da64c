#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>

#include "catseq/rng.hpp"
#include "catseq/syngen.hpp"

using namespace catseq;

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const auto x = a();
        EXPECT_EQ(x, b());
        (void)c();
    }
    EXPECT_NE(Rng(42)(), Rng(43)());
}

TEST(Rng, DerivedStreamsDiffer) {
    EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
    EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
    EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
}

TEST(Rng, BelowStaysInRangeAndIsUniform) {
    Rng rng(9);
    std::vector<int> counts(7);
    const int n = 70000;
    for (int i = 0; i < n; ++i) {
        const auto v = rng.below(7);
        ASSERT_LT(v, 7u);
        ++counts[v];
    }
    // chi-square, 6 dof, 99.9% quantile 22.46
    double chi = 0;
    for (int c : counts) chi += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
    EXPECT_LT(chi, 22.46);
    EXPECT_THROW(rng.below(0), std::invalid_argument);
}

TEST(Rng, UniformInUnitInterval) {
    Rng rng(1);
    double sum = 0;
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(Zipf, SingleOutcome) {
    EXPECT_EQ(zipf_pmf(3.7, 1), std::vector<double>{1.0});
}

TEST(Zipf, BetaTwoSizeFive) {
    const auto p = zipf_pmf(2.0, 5);
    const double expected[] = {0.6832, 0.1708, 0.0759, 0.0427, 0.0273};
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(p[k], expected[k], 1e-4);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
}

TEST(Zipf, NonIncreasing) {
    for (double beta : {0.1, 1.0, 2.0, 5.0}) {
        const auto p = zipf_pmf(beta, 50);
        EXPECT_TRUE(std::is_sorted(p.rbegin(), p.rend()));
    }
}

TEST(Zipf, RejectsBadArguments) {
    EXPECT_THROW(zipf_pmf(0.0, 5), std::invalid_argument);
    EXPECT_THROW(zipf_pmf(-1.0, 5), std::invalid_argument);
    EXPECT_THROW(zipf_pmf(2.0, 0), std::invalid_argument);
}

TEST(GroupModels, SingleEventIsIdentity) {
    SynthConfig c;
    c.vocab_size = 1;
    Rng rng(1);
    for (const auto& m : build_group_models(c, rng)) {
        EXPECT_EQ(m.permutation, std::vector<int>{0});
        EXPECT_DOUBLE_EQ(m.cdf.back(), 1.0);
    }
}

TEST(GroupModels, Deterministic) {
    SynthConfig c;
    const auto a = group_models_for(c);
    const auto b = group_models_for(c);
    for (std::size_t g = 0; g < a.size(); ++g) EXPECT_EQ(a[g].permutation, b[g].permutation);
}

TEST(GroupModels, PermutationsAreBijectionsAndCdfMonotone) {
    SynthConfig c;
    for (const auto& m : group_models_for(c)) {
        auto sorted = m.permutation;
        std::sort(sorted.begin(), sorted.end());
        for (int e = 0; e < c.vocab_size; ++e) EXPECT_EQ(sorted[static_cast<std::size_t>(e)], e);
        EXPECT_TRUE(std::is_sorted(m.cdf.begin(), m.cdf.end()));
        EXPECT_NEAR(m.cdf.back(), 1.0, 1e-12);
    }
}

TEST(GroupModels, PermutationsAreUniform) {
    SynthConfig c;
    c.vocab_size = 3;
    c.group_count = 1;
    c.betas = {2.0};
    Rng rng(123);
    std::map<std::vector<int>, int> seen;
    const int n = 10000;
    for (int i = 0; i < n; ++i) ++seen[build_group_models(c, rng)[0].permutation];
    ASSERT_EQ(seen.size(), 6u);
    for (const auto& [perm, count] : seen) EXPECT_NEAR(count / double(n), 1.0 / 6.0, 0.02);
}

TEST(NextGroup, AlphaZeroKeeps) {
    SynthConfig c;
    c.alpha = 0.0;
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(next_group(3, c, rng), 3);
}

TEST(NextGroup, AlphaOneIsUniform) {
    SynthConfig c;
    c.alpha = 1.0;
    Rng rng(2);
    std::vector<int> counts(6);
    const int n = 60000;
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(next_group(0, c, rng))];
    for (int k : counts) EXPECT_NEAR(k / double(n), 1.0 / 6.0, 0.01);
}

TEST(NextGroup, MeanRunLength) {
    SynthConfig c;
    Rng rng(5);
    int g = 0, run = 1;
    long runs = 0, total = 0;
    for (int i = 0; i < 1000000; ++i) {
        const int next = next_group(g, c, rng);
        if (next == g) {
            ++run;
        } else {
            total += run;
            ++runs;
            run = 1;
        }
        g = next;
    }
    EXPECT_NEAR(double(total) / runs, expected_run_length(0.03, 6), 0.05 * 40);
    EXPECT_DOUBLE_EQ(expected_run_length(0.03, 6), 40.0);
}

TEST(Dataset, SingleGroupAllZero) {
    SynthConfig c;
    c.group_count = 1;
    c.betas = {2.0};
    c.patients = 3;
    c.seq_len = 50;
    for (const auto& s : generate_dataset(c).sequences)
        for (int g : s.groups) EXPECT_EQ(g, 0);
}

TEST(Dataset, ShapesAndRanges) {
    SynthConfig c;
    c.patients = 4;
    c.seq_len = 200;
    const auto ds = generate_dataset(c);
    ASSERT_EQ(ds.sequences.size(), 4u);
    for (const auto& s : ds.sequences) {
        ASSERT_EQ(s.events.size(), 200u);
        ASSERT_EQ(s.groups.size(), 200u);
        for (int e : s.events) EXPECT_TRUE(e >= 0 && e < 100);
        for (int g : s.groups) EXPECT_TRUE(g >= 0 && g < 6);
    }
    EXPECT_NO_THROW(ds.validate());
}

TEST(Dataset, SameSeedBitIdentical) {
    SynthConfig c;
    c.patients = 3;
    c.seq_len = 300;
    const auto a = generate_dataset(c);
    const auto b = generate_dataset(c);
    for (std::size_t p = 0; p < a.sequences.size(); ++p) {
        EXPECT_EQ(a.sequences[p].events, b.sequences[p].events);
        EXPECT_EQ(a.sequences[p].groups, b.sequences[p].groups);
    }
    c.seed = 2;
    EXPECT_NE(generate_dataset(c).sequences[0].events, a.sequences[0].events);
}

TEST(Dataset, EventDistributionMatchesPermutedZipf) {
    SynthConfig c;
    const auto models = group_models_for(c);
    Rng rng(77);
    for (const auto& m : models) {
        std::vector<double> counts(100);
        const int n = 1000000;
        for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(m.sample(rng))] += 1.0;
        const auto pmf = m.event_pmf();
        double tv = 0;
        for (std::size_t e = 0; e < 100; ++e) tv += std::abs(counts[e] / n - pmf[e]);
        EXPECT_LT(tv / 2, 0.005);
    }
}

TEST(Config, ValidationErrors) {
    SynthConfig c;
    c.betas = {2.0};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = SynthConfig{};
    c.alpha = 1.5;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = SynthConfig{};
    c.vocab_size = 0;
    EXPECT_THROW(generate_dataset(c), std::invalid_argument);
}

#include <gtest/gtest.h>

#include <cmath>

#include "catseq/metrics.hpp"
#include "catseq/rng.hpp"
#include "metrics_oracle.hpp"

using namespace catseq;
using namespace catseq::testing;

TEST(MutualInfo, IdenticalTwoClasses) {
    const auto t = ContingencyTable::from_labels({0, 0, 1, 1}, {0, 0, 1, 1});
    EXPECT_NEAR(mutual_info(t), std::log(2.0), 1e-15);
}

TEST(MutualInfo, IndependentTable) {
    EXPECT_NEAR(mutual_info(ContingencyTable::from_counts({{1, 1}, {1, 1}})), 0.0, 1e-15);
}

TEST(MutualInfo, MatchesDirectSummation) {
    Rng rng(4);
    std::vector<int> a(300), b(300);
    for (auto& v : a) v = static_cast<int>(rng.below(3));
    for (auto& v : b) v = static_cast<int>(rng.below(4));
    EXPECT_NEAR(mutual_info(ContingencyTable::from_labels(a, b)), mi_direct(a, b), 1e-12);
}

TEST(MutualInfo, TableValidation) {
    EXPECT_THROW(ContingencyTable::from_counts({{1, 2}, {3}}), std::invalid_argument);
    EXPECT_THROW(ContingencyTable::from_counts({{1, -2}}), std::invalid_argument);
}

TEST(ExpectedMi, SingleClusterIsZero) {
    EXPECT_EQ(expected_mi({5}, {2, 3}, 5), 0.0);
    EXPECT_EQ(expected_mi({1, 4}, {5}, 5), 0.0);
}

TEST(ExpectedMi, TwoByTwoMatchesPermutations) {
    EXPECT_NEAR(expected_mi({2, 2}, {2, 2}, 4), emi_by_permutation({0, 0, 1, 1}, {0, 0, 1, 1}), 1e-12);
}

TEST(ExpectedMi, MatchesPermutationEnumerationUpToSix) {
    for (long n = 1; n <= 6; ++n)
        for (const auto& pa : partitions(n))
            for (const auto& pb : partitions(n)) {
                const double exact = emi_by_permutation(from_sizes(pa), from_sizes(pb));
                const double got = expected_mi(pa, pb, n);
                EXPECT_NEAR(got, exact, 1e-10) << "n=" << n;
                EXPECT_GE(got, -1e-15);
            }
}

TEST(ExpectedMi, RejectsBadMarginals) {
    EXPECT_THROW(expected_mi({2, 2}, {3}, 4), std::invalid_argument);
}

TEST(ExpectedMi, LargeCountsStayFinite) {
    const double v = expected_mi({50000, 30000, 20000}, {60000, 40000}, 100000);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
}

TEST(Ami, PerfectAgreement) {
    EXPECT_DOUBLE_EQ(ami({0, 0, 1, 1, 2}, {0, 0, 1, 1, 2}), 1.0);
    EXPECT_DOUBLE_EQ(ami({3, 3, 3}, {7, 7, 7}), 1.0);
}

TEST(Ami, CheckerboardIsExactlyNegative) {
    const double emi = expected_mi({2, 2}, {2, 2}, 4);
    const double expected = (0.0 - emi) / (std::log(2.0) - emi);
    EXPECT_LT(expected, 0.0);
    EXPECT_NEAR(ami({0, 0, 1, 1}, {0, 1, 0, 1}), expected, 1e-14);
}

TEST(Ami, InvariantUnderRelabeling) {
    const std::vector<int> y{0, 0, 1, 1, 1, 2, 2, 0, 1};
    const std::vector<int> p{1, 1, 0, 0, 2, 2, 2, 1, 0};
    std::vector<int> q;
    for (int v : p) q.push_back(10 - 3 * v);
    EXPECT_NEAR(ami(y, p), ami(y, q), 1e-14);
    EXPECT_NEAR(ami(y, p), ami(p, y), 1e-14);
}

TEST(Ami, RandomLabelingsCenterOnZero) {
    Rng rng(2024);
    double total = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<int> a(1000), b(1000);
        for (auto& v : a) v = static_cast<int>(rng.below(5));
        for (auto& v : b) v = static_cast<int>(rng.below(5));
        total += ami(a, b);
    }
    EXPECT_NEAR(total / 100, 0.0, 0.02);
}

TEST(Ami, NoiseModes) {
    const std::vector<int> y{0, 0, 0, 1, 1, 1};
    const std::vector<int> p{0, 0, -1, 1, 1, -1};
    EXPECT_DOUBLE_EQ(ami(y, p, NoiseMode::exclude), 1.0);
    EXPECT_LT(ami(y, p, NoiseMode::include), 1.0);
    EXPECT_THROW(ami({0, 1}, {-1, -1}, NoiseMode::exclude), std::invalid_argument);
}

TEST(Ami, Errors) {
    EXPECT_THROW(ami({0, 1}, {0}), std::invalid_argument);
    EXPECT_THROW(ami({}, {}), std::invalid_argument);
}

TEST(Ami, DetailRecord) {
    const auto r = ami_detail({0, 0, 1, 1}, {0, 0, 1, 1});
    EXPECT_EQ(r.n, 4u);
    EXPECT_NEAR(r.h_true, std::log(2.0), 1e-15);
    const auto j = r.to_json();
    for (const char* key : {"ami", "mi", "emi", "h_true", "h_pred", "n"}) EXPECT_TRUE(j.contains(key));
}

TEST(Separation, SeparatedBlobsScoreHigh) {
    Rng rng(3);
    Tensor pts(200, 2);
    std::vector<int> y(200);
    for (std::size_t i = 0; i < 200; ++i) {
        y[i] = static_cast<int>(i % 2);
        pts(i, 0) = rng.uniform(-1, 1) + 20.0 * y[i];
        pts(i, 1) = rng.uniform(-1, 1);
    }
    EXPECT_GT(separation_ratio(pts, y), 10.0);
    std::vector<int> shuffled = y;
    rng.shuffle(shuffled);
    EXPECT_LT(separation_ratio(pts, shuffled), 1.0);
    EXPECT_THROW(separation_ratio(pts, std::vector<int>(200, 0)), std::invalid_argument);
}

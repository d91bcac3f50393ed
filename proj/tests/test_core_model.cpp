#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "crossmom/grand_mean.hpp"
#include "crossmom/model.hpp"
#include "crossmom/streaming_pass.hpp"
#include "oracles.hpp"

using namespace crossmom;

namespace {

ModelParams reference_params(EffectLaw law = EffectLaw::normal) {
    ModelParams p;
    p.mu = 1.0;
    p.theta = {2.0, 0.5, 1.0};
    p.law_a = p.law_b = p.law_e = law;
    return p;
}

}  // namespace

TEST(Simulate, BalancedFullGrid) {
    auto data = simulate(reference_params(), {40, 30, 1.0, 5});
    ASSERT_EQ(data.size(), 1200u);
    EXPECT_EQ(data.front().row, 0u);
    EXPECT_EQ(data.back().row, 39u);
    EXPECT_EQ(data.back().col, 29u);
}

TEST(Simulate, ZeroVarianceGivesMu) {
    ModelParams p;
    p.mu = 2.5;
    for (const auto& t : simulate(p, {7, 9, 0.6, 1})) {
        EXPECT_EQ(t.value, 2.5);
    }
}

TEST(Simulate, Deterministic) {
    auto a = simulate(reference_params(EffectLaw::centered_exponential), {25, 25, 0.4, 99});
    auto b = simulate(reference_params(EffectLaw::centered_exponential), {25, 25, 0.4, 99});
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].row, b[k].row);
        EXPECT_EQ(a[k].col, b[k].col);
        EXPECT_EQ(std::memcmp(&a[k].value, &b[k].value, sizeof(double)), 0);
    }
    auto c = simulate(reference_params(), {25, 25, 0.4, 100});
    EXPECT_TRUE(a.size() != c.size() || a[0].value != c[0].value);
}

TEST(Simulate, RowBlocksReproduceFullStream) {
    const SimulationShape shape{30, 20, 0.5, 42};
    auto full = simulate(reference_params(), shape);
    std::vector<IndexTriple> pieces;
    for (std::uint64_t r0 = 0; r0 < 30; r0 += 7) {
        simulate_rows(reference_params(), shape, r0, r0 + 7, [&](const IndexTriple& t) { pieces.push_back(t); });
    }
    ASSERT_EQ(full.size(), pieces.size());
    for (std::size_t k = 0; k < full.size(); ++k) EXPECT_EQ(full[k].value, pieces[k].value);
}

TEST(Simulate, RejectsBadShape) {
    EXPECT_THROW(simulate(reference_params(), {0, 5, 0.5, 1}), InvalidArgument);
    EXPECT_THROW(simulate(reference_params(), {5, 0, 0.5, 1}), InvalidArgument);
    EXPECT_THROW(simulate(reference_params(), {5, 5, 0.0, 1}), InvalidArgument);
    EXPECT_THROW(simulate(reference_params(), {5, 5, 1.5, 1}), InvalidArgument);
    ModelParams bad = reference_params();
    bad.theta.sigma2_b = -1;
    EXPECT_THROW(simulate(bad, {5, 5, 0.5, 1}), InvalidArgument);
}

TEST(Simulate, ObserveProbabilityHonoured) {
    auto data = simulate(reference_params(), {200, 200, 0.25, 8});
    const double frac = static_cast<double>(data.size()) / 40000.0;
    EXPECT_NEAR(frac, 0.25, 4 * std::sqrt(0.25 * 0.75 / 40000.0));
}

TEST(EffectLaw, KurtosisTable) {
    EXPECT_EQ(law_kurtosis(EffectLaw::normal), 0.0);
    EXPECT_EQ(law_kurtosis(EffectLaw::uniform), -1.2);
    EXPECT_EQ(law_kurtosis(EffectLaw::centered_exponential), 6.0);
    EXPECT_EQ(parse_effect_law("uniform"), EffectLaw::uniform);
    EXPECT_THROW(parse_effect_law("cauchy"), InvalidArgument);
}

class LawDraws : public ::testing::TestWithParam<EffectLaw> {};

TEST_P(LawDraws, SampleKurtosisConverges) {
    const EffectLaw law = GetParam();
    std::mt19937_64 rng(2024);
    const int batches = 100, per = 10000;
    std::vector<double> batch_k;
    double s2 = 0, s4 = 0, s1 = 0;
    for (int b = 0; b < batches; ++b) {
        double b1 = 0, b2 = 0, b4 = 0;
        std::vector<double> xs(per);
        for (auto& x : xs) {
            x = draw_effect(law, 2.0, rng);
            b1 += x;
        }
        const double m = b1 / per;
        for (double x : xs) {
            b2 += (x - m) * (x - m);
            b4 += std::pow(x - m, 4);
            s1 += x;
            s2 += x * x;
            s4 += x * x * x * x;
        }
        batch_k.push_back(per * b4 / (b2 * b2) - 3.0);
    }
    double mk = 0;
    for (double k : batch_k) mk += k;
    mk /= batches;
    double vk = 0;
    for (double k : batch_k) vk += (k - mk) * (k - mk);
    const double se = std::sqrt(vk / (batches - 1) / batches);
    const double n = static_cast<double>(batches) * per;
    const double var = s2 / n;
    const double kurt = (s4 / n) / (var * var) - 3.0;
    EXPECT_NEAR(var, 2.0, 0.02);
    EXPECT_NEAR(kurt, law_kurtosis(law), 3 * se);
}

INSTANTIATE_TEST_SUITE_P(AllLaws, LawDraws,
                         ::testing::Values(EffectLaw::normal, EffectLaw::uniform, EffectLaw::centered_exponential));

TEST(GrandMean, TwoByTwo) {
    std::vector<IndexTriple> d{{0, 0, 0.0}, {0, 1, 2.0}, {1, 0, 1.0}, {1, 1, 3.0}};
    auto fp = first_pass(d);
    auto gm = grand_mean(fp, {2.0, 0.5, 1.0});
    EXPECT_DOUBLE_EQ(gm.mu_hat, 1.5);
    EXPECT_DOUBLE_EQ(gm.var_bound, 1.5);
    EXPECT_DOUBLE_EQ(gm.eps_bound, 1.5);
}

TEST(GrandMean, SingleObservation) {
    std::vector<IndexTriple> d{{4, 9, -2.0}};
    auto gm = grand_mean(first_pass(d), {2.0, 0.5, 1.0});
    EXPECT_DOUBLE_EQ(gm.mu_hat, -2.0);
    EXPECT_DOUBLE_EQ(gm.var_bound, 3.5);
}

TEST(GrandMean, EmptyData) {
    FirstPassSummary<std::uint64_t> fp;
    EXPECT_THROW(grand_mean(fp, {1, 1, 1}), EmptyData);
}

TEST(GrandMean, VarianceMatchesDenseQuadraticForm) {
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 20; ++rep) {
        auto d = oracle::compact(oracle::random_pattern(9, 7, 0.4, rng));
        if (d.cells.empty()) continue;
        const VarianceComponents th{1.3, 0.7, 0.4};
        // 1' Cov 1 / N^2 summed pair by pair.
        double q = 0;
        for (const auto& x : d.cells) {
            for (const auto& y : d.cells) {
                q += th.sigma2_a * (x.row == y.row) + th.sigma2_b * (x.col == y.col) +
                     th.sigma2_e * (x.row == y.row && x.col == y.col);
            }
        }
        const double n = static_cast<double>(d.cells.size());
        auto gm = grand_mean(first_pass(d.cells), th);
        EXPECT_NEAR(gm.var_bound, q / (n * n), 1e-12 * gm.var_bound);
        EXPECT_LE(gm.var_bound, gm.eps_bound * (1 + 1e-12));
    }
}

TEST(GrandMean, BalancedBoundIsTight) {
    auto d = simulate(reference_params(), {12, 17, 1.0, 3});
    auto gm = grand_mean(first_pass(d), {2.0, 0.5, 1.0});
    EXPECT_NEAR(gm.var_bound, gm.eps_bound, 1e-15);
}

TEST(GrandMean, UnbiasedOverReplicates) {
    const auto p = reference_params();
    const int reps = 10000;
    double s = 0, s2 = 0;
    for (int k = 0; k < reps; ++k) {
        auto fp = first_pass(simulate(p, {30, 30, 0.25, static_cast<std::uint64_t>(1000 + k)}));
        s += fp.global.mean;
        s2 += fp.global.mean * fp.global.mean;
    }
    const double mean = s / reps;
    const double se = std::sqrt((s2 / reps - mean * mean) / reps);
    EXPECT_NEAR(mean, p.mu, 4 * se);
}

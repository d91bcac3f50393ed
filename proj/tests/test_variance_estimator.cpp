#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "crossmom/moment_estimator.hpp"
#include "crossmom/streaming_pass.hpp"
#include "crossmom/variance_estimator.hpp"
#include "oracles.hpp"

using namespace crossmom;

namespace {

std::vector<IndexTriple> grid2x2() { return {{0, 0, 0.0}, {0, 1, 2.0}, {1, 0, 1.0}, {1, 1, 3.0}}; }

oracle::Dataset pattern(std::uint64_t seed, std::uint64_t r = 9, std::uint64_t c = 8, double p = 0.45) {
    std::mt19937_64 rng(seed);
    return oracle::compact(oracle::random_pattern(r, c, p, rng));
}

struct Setting {
    VarianceComponents th;
    Kurtoses k;
};

const Setting kSettings[] = {
    {{2.0, 0.5, 1.0}, {0.0, 0.0, 0.0}},
    {{1.0, 1.0, 1.0}, {-1.2, 6.0, 0.0}},
    {{0.3, 1.7, 0.8}, {6.0, -1.2, -1.2}},
    {{1.0, 0.0, 2.0}, {0.0, 0.0, 6.0}},
};

Eigen::Matrix3d oracle_cov(const oracle::Dataset& d, const Setting& s) {
    const double v[3] = {s.th.sigma2_a, s.th.sigma2_b, s.th.sigma2_e};
    const double k[3] = {s.k.kappa_a, s.k.kappa_b, s.k.kappa_e};
    return oracle::quadratic_form_cov(d, v, k);
}

}  // namespace

TEST(CovU, ExactEntriesMatchQuadraticForm) {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        auto d = pattern(seed);
        auto fp = first_pass(d.cells);
        auto sp = second_pass(d.cells, fp);
        for (const auto& s : kSettings) {
            const auto ex = oracle_cov(d, s);
            const auto c = cov_uu(s.th, s.k, fp, sp).m;
            const double scale = ex.cwiseAbs().maxCoeff();
            EXPECT_NEAR(c(2, 2), ex(2, 2), 1e-10 * scale) << seed;
            EXPECT_NEAR(c(0, 1), ex(0, 1), 1e-10 * scale) << seed;
            EXPECT_NEAR(c(0, 2), ex(0, 2), 1e-10 * scale) << seed;
            EXPECT_NEAR(c(1, 2), ex(1, 2), 1e-10 * scale) << seed;
        }
    }
}

TEST(CovU, DiagonalBoundsDominateExact) {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        auto d = pattern(seed, 10, 12, 0.3);
        auto fp = first_pass(d.cells);
        auto sp = second_pass(d.cells, fp);
        for (const auto& s : kSettings) {
            const auto ex = oracle_cov(d, s);
            const auto c = cov_uu(s.th, s.k, fp, sp).m;
            EXPECT_GE(c(0, 0), ex(0, 0) * (1 - 1e-12) - 1e-12) << seed;
            EXPECT_GE(c(1, 1), ex(1, 1) * (1 - 1e-12) - 1e-12) << seed;
        }
    }
}

TEST(CovU, DenseOracleMatchesQuadraticForm) {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        auto d = pattern(seed);
        auto fp = first_pass(d.cells);
        auto op = observation_pattern(d.cells, fp);
        for (const auto& s : kSettings) {
            const auto ex = oracle_cov(d, s);
            EXPECT_NEAR(var_ua_exact_dense(s.th, s.k, op), ex(0, 0), 1e-10 * std::fabs(ex(0, 0)) + 1e-12);
            EXPECT_NEAR(var_ub_exact_dense(s.th, s.k, op), ex(1, 1), 1e-10 * std::fabs(ex(1, 1)) + 1e-12);
        }
    }
}

TEST(CovU, BoundIsExactOnFullGrid) {
    // Every row pair shares all C columns, so (ZZ')_ir <= N_r. holds with equality.
    std::vector<IndexTriple> d;
    for (std::uint64_t i = 0; i < 6; ++i)
        for (std::uint64_t j = 0; j < 5; ++j) d.push_back({i, j, 0.0});
    auto fp = first_pass(d);
    auto sp = second_pass(d, fp);
    auto op = observation_pattern(d, fp);
    for (const auto& s : kSettings) {
        const auto c = cov_uu(s.th, s.k, fp, sp).m;
        EXPECT_NEAR(c(0, 0), var_ua_exact_dense(s.th, s.k, op), 1e-10 * c(0, 0) + 1e-12);
        EXPECT_NEAR(c(1, 1), var_ub_exact_dense(s.th, s.k, op), 1e-10 * c(1, 1) + 1e-12);
    }
}

TEST(CovU, BoundSlackIsThePairTermOnly) {
    // Gap = 2 sigma_b^4 sum_ir (ZZ')_ir (N_r. - (ZZ')_ir) / (N_i. N_r.).
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto d = pattern(seed);
        auto fp = first_pass(d.cells);
        auto sp = second_pass(d.cells, fp);
        auto op = observation_pattern(d.cells, fp);
        std::vector<std::vector<double>> z(d.r, std::vector<double>(d.c, 0.0));
        for (const auto& t : d.cells) z[t.row][t.col] = 1;
        std::vector<double> ni(d.r, 0.0);
        for (std::uint64_t i = 0; i < d.r; ++i)
            for (std::uint64_t j = 0; j < d.c; ++j) ni[i] += z[i][j];
        double slack = 0;
        for (std::uint64_t i = 0; i < d.r; ++i) {
            for (std::uint64_t r = 0; r < d.r; ++r) {
                double co = 0;
                for (std::uint64_t j = 0; j < d.c; ++j) co += z[i][j] * z[r][j];
                slack += co * (ni[r] - co) / (ni[i] * ni[r]);
            }
        }
        for (const auto& s : kSettings) {
            const double got = cov_uu(s.th, s.k, fp, sp).m(0, 0) - var_ua_exact_dense(s.th, s.k, op);
            const double want = 2 * s.th.sigma2_b * s.th.sigma2_b * slack;
            EXPECT_NEAR(got, want, 1e-9 * (std::fabs(want) + 1)) << seed;
        }
    }
}

TEST(CovU, IidPatternHasZeroWithinVariance) {
    std::vector<IndexTriple> d;
    for (std::uint64_t k = 0; k < 20; ++k) d.push_back({k, k, 0.0});
    auto fp = first_pass(d);
    auto sp = second_pass(d, fp);
    const auto c = cov_uu({1, 1, 1}, {0, 0, 0}, fp, sp).m;
    EXPECT_NEAR(c(0, 0), 0.0, 1e-12);
    EXPECT_NEAR(c(1, 1), 0.0, 1e-12);
}

TEST(CovU, TwoByTwoCrossCovariance) {
    auto d = grid2x2();
    auto fp = first_pass(d);
    auto sp = second_pass(d, fp);
    // N - R - C + ZN^{-1,-1} = 4 - 2 - 2 + 1
    EXPECT_DOUBLE_EQ(cov_ua_ub({2.0, 0.5, 1.0}, {0, 0, 0}, pattern_sums(fp), cross_totals(fp, sp)), 2.0);
}

TEST(CovU, FlatKurtosisKillsFourthMomentTerms) {
    // kappa = -2 is a two-point law; the pattern-kurtosis terms drop out.
    auto d = pattern(3);
    auto fp = first_pass(d.cells);
    auto sp = second_pass(d.cells, fp);
    const Setting s{{0, 0, 1.0}, {0, 0, -2.0}};
    const auto c = cov_uu(s.th, s.k, fp, sp).m;
    const auto ex = oracle_cov(d, s);
    const double n = static_cast<double>(fp.n());
    EXPECT_NEAR(c(2, 2), 2 * n * (n - 1), 1e-9 * c(2, 2));
    EXPECT_NEAR(c(2, 2), ex(2, 2), 1e-9 * c(2, 2));
    EXPECT_NEAR(c(0, 1), 0.0, 1e-12);
}

TEST(CovU, KurtosisBelowFloorIsFloored) {
    auto d = pattern(4);
    auto fp = first_pass(d.cells);
    auto sp = second_pass(d.cells, fp);
    const auto a = cov_uu({1, 1, 1}, {-5, -3, -9}, fp, sp).m;
    const auto b = cov_uu({1, 1, 1}, {-2, -2, -2}, fp, sp).m;
    EXPECT_EQ(a, b);
}

TEST(CovU, MatchesMonteCarlo) {
    // Checks the quadratic-form oracle itself against simulation.
    auto d = pattern(6, 6, 6, 0.6);
    auto fp = first_pass(d.cells);
    ModelParams mp;
    mp.theta = {1.0, 0.5, 0.8};
    mp.law_a = EffectLaw::uniform;
    mp.law_e = EffectLaw::centered_exponential;
    const Setting s{mp.theta, mp.kurtoses()};
    const auto ex = oracle_cov(d, s);
    std::mt19937_64 rng(123);
    const int reps = 40000;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Matrix3d second = Eigen::Matrix3d::Zero();
    std::vector<double> a(d.r), b(d.c);
    for (int k = 0; k < reps; ++k) {
        for (auto& x : a) x = draw_effect(mp.law_a, mp.theta.sigma2_a, rng);
        for (auto& x : b) x = draw_effect(mp.law_b, mp.theta.sigma2_b, rng);
        std::vector<IndexTriple> y = d.cells;
        for (auto& t : y) t.value = a[t.row] + b[t.col] + draw_effect(mp.law_e, mp.theta.sigma2_e, rng);
        const Eigen::Vector3d u = u_stats(first_pass(y)).vec();
        mean += u;
        second += u * u.transpose();
    }
    mean /= reps;
    const Eigen::Matrix3d cov = second / reps - mean * mean.transpose();
    for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(cov(i, i), ex(i, i), 0.08 * ex(i, i)) << i;
    }
    EXPECT_NEAR(cov(0, 2), ex(0, 2), 0.08 * std::sqrt(ex(0, 0) * ex(2, 2)));
}

TEST(ThetaCov, PluginIsSandwich) {
    auto d = pattern(7, 15, 15, 0.4);
    auto fp = first_pass(d.cells);
    auto sp = second_pass(d.cells, fp);
    const auto& s = kSettings[1];
    auto ucov = cov_uu(s.th, s.k, fp, sp);
    auto mm = moment_matrix(fp);
    auto tc = theta_cov_plugin(s.th, s.k, fp, sp);
    const Eigen::Matrix3d inv = mm.entries.inverse();
    const Eigen::Matrix3d expect = inv * ucov.m * inv.transpose();
    EXPECT_LT((tc.m - expect).norm(), 1e-9 * expect.norm());
    EXPECT_EQ(tc.regime, CovarianceRegime::plugin_upper);
    EXPECT_EQ(tc.m, tc.m.transpose());
}

TEST(ThetaCov, AsymptoticBalancedExample) {
    // R = C = 1000 full grid: sum N_i^2 / N^2 = 1e-3.
    PatternSums ps;
    ps.n = 1000000;
    ps.r = ps.c = 1000;
    ps.row_sq = ps.col_sq = 1e9;
    auto tc = theta_cov_asymptotic({2.0, 0.5, 1.0}, {0, 0, 0}, ps, 0.001);
    EXPECT_NEAR(tc.m(0, 0), 8e-3, 1e-15);
    EXPECT_NEAR(tc.m(1, 1), 5e-4, 1e-15);
    EXPECT_NEAR(tc.m(2, 2), 2e-6, 1e-18);
    EXPECT_EQ(tc.m(0, 1), 0.0);
    EXPECT_EQ(tc.regime, CovarianceRegime::asymptotic);
}

TEST(ThetaCov, AsymptoticUsesOwnCountSums) {
    PatternSums ps;
    ps.n = 1000;
    ps.row_sq = 4000;
    ps.col_sq = 9000;
    auto tc = theta_cov_asymptotic({1.0, 1.0, 1.0}, {0, 0, 0}, ps, 0.0);
    EXPECT_DOUBLE_EQ(tc.m(0, 0), 2 * 4000.0 / 1e6);
    EXPECT_DOUBLE_EQ(tc.m(1, 1), 2 * 9000.0 / 1e6);
}

TEST(ThetaCov, DeltaGate) {
    PatternSums ps;
    ps.n = 100;
    ps.row_sq = ps.col_sq = 1000;
    EXPECT_THROW(theta_cov_asymptotic({1, 1, 1}, {0, 0, 0}, ps, 0.02), DeltaTooLarge);
    EXPECT_THROW(theta_cov_asymptotic({1, 1, 1}, {0, 0, 0}, ps, NAN), DeltaTooLarge);
    EXPECT_NO_THROW(theta_cov_asymptotic({1, 1, 1}, {0, 0, 0}, ps, 0.01));

    auto d = grid2x2();
    auto fp = first_pass(d);
    auto sp = second_pass(d, fp);
    auto oc = compute_delta(fp, sp);
    auto tc = theta_covariance({1, 1, 1}, {0, 0, 0}, pattern_sums(fp), cross_totals(fp, sp), oc);
    EXPECT_EQ(tc.regime, CovarianceRegime::plugin_upper);
    EXPECT_EQ(tc.delta, 0.5);
    auto forced = theta_covariance({1, 1, 1}, {0, 0, 0}, pattern_sums(fp), cross_totals(fp, sp), oc, 1.0);
    EXPECT_EQ(forced.regime, CovarianceRegime::asymptotic);
    auto plug = theta_covariance({1, 1, 1}, {0, 0, 0}, pattern_sums(fp), cross_totals(fp, sp), oc, 1.0, true);
    EXPECT_EQ(plug.regime, CovarianceRegime::plugin_upper);
}

TEST(ThetaCov, SingularPatternRejected) {
    std::vector<IndexTriple> d;
    for (std::uint64_t k = 0; k < 5; ++k) d.push_back({k, k, 0.0});
    auto fp = first_pass(d);
    auto sp = second_pass(d, fp);
    EXPECT_THROW(theta_cov_plugin({1, 1, 1}, {0, 0, 0}, fp, sp), SingularSystem);
}

TEST(ExactRange, RefusesHugeN) {
    PatternSums ps;
    ps.n = std::uint64_t{1} << 31;
    EXPECT_THROW(chi_square_term(ps, 0), InstanceTooLarge);
    EXPECT_THROW(var_ue_exact({1, 1, 1}, {0, 0, 0}, ps, CrossTotals{}), InstanceTooLarge);
}

TEST(DenseOracle, RefusesLargeInstances) {
    ObservationPattern p{5000, 5000, {}};
    EXPECT_THROW(chi_square_dense(p), InstanceTooLarge);
}

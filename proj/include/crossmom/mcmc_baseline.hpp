#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "crossmom/errors.hpp"
#include "crossmom/model.hpp"

namespace crossmom {

/// Convergence rate of the two-block Gibbs sampler for (a, b) given mu and
/// the variance components on a balanced R x C grid.
inline double gibbs_rate(std::uint64_t r, std::uint64_t c, const VarianceComponents& th) {
    th.validate();
    if (r == 0 || c == 0) {
        throw InvalidArgument("gibbs rate needs r, c >= 1");
    }
    if (th.sigma2_a == 0 && th.sigma2_b == 0 && th.sigma2_e == 0) {
        throw InvalidArgument("gibbs rate undefined when all variance components are zero");
    }
    if (th.sigma2_a == 0 || th.sigma2_b == 0) {
        return 0.0;
    }
    if (th.sigma2_e == 0) {
        return 1.0;
    }
    const double rd = static_cast<double>(r);
    const double cd = static_cast<double>(c);
    return (th.sigma2_b / (th.sigma2_b + th.sigma2_e / rd)) * (th.sigma2_a / (th.sigma2_a + th.sigma2_e / cd));
}

struct GibbsConfig {
    std::uint64_t r = 1;
    std::uint64_t c = 1;
    double mu = 0;
    VarianceComponents theta;
    std::uint64_t iterations = 0;
    std::uint64_t burn_in = 0;
    std::uint64_t seed = 0;

    void validate() const {
        if (r == 0 || c == 0) throw InvalidArgument("gibbs needs r, c >= 1");
        if (!(iterations > burn_in)) throw InvalidArgument("iterations must exceed burn-in");
        theta.validate();
        if (!(theta.sigma2_a > 0 && theta.sigma2_b > 0 && theta.sigma2_e > 0)) {
            throw InvalidArgument("gibbs needs positive variance components");
        }
    }
};

/// Post-burn-in draws; row t of `a` is a^(t).
struct GibbsChain {
    Eigen::MatrixXd a;
    Eigen::MatrixXd b;

    std::vector<double> sum_a() const {
        std::vector<double> out(static_cast<std::size_t>(a.rows()));
        for (Eigen::Index t = 0; t < a.rows(); ++t) out[t] = a.row(t).sum();
        return out;
    }
    std::vector<double> sum_b() const {
        std::vector<double> out(static_cast<std::size_t>(b.rows()));
        for (Eigen::Index t = 0; t < b.rows(); ++t) out[t] = b.row(t).sum();
        return out;
    }
};

/// Alternates exact draws of a | b and b | a. `y` is the full R x C grid.
inline GibbsChain run_gibbs_phi(const GibbsConfig& cfg, const Eigen::MatrixXd& y) {
    cfg.validate();
    if (y.rows() != static_cast<Eigen::Index>(cfg.r) || y.cols() != static_cast<Eigen::Index>(cfg.c) ||
        !y.allFinite()) {
        throw InvalidArgument("gibbs sampler needs a complete, finite r x c grid");
    }
    const double sa = cfg.theta.sigma2_a, sb = cfg.theta.sigma2_b, se = cfg.theta.sigma2_e;
    const double rd = static_cast<double>(cfg.r), cd = static_cast<double>(cfg.c);
    const double shrink_a = sa / (se + cd * sa);
    const double shrink_b = sb / (se + rd * sb);
    const double sd_a = std::sqrt(sa * se / (se + cd * sa));
    const double sd_b = std::sqrt(sb * se / (se + rd * sb));
    const Eigen::MatrixXd resid = y.array() - cfg.mu;
    const Eigen::VectorXd row_sums = resid.rowwise().sum();
    const Eigen::VectorXd col_sums = resid.colwise().sum().transpose();

    std::mt19937_64 rng(detail::splitmix64(cfg.seed));
    std::normal_distribution<double> norm(0.0, 1.0);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.r));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.c));
    const auto kept = static_cast<Eigen::Index>(cfg.iterations - cfg.burn_in);
    GibbsChain chain{Eigen::MatrixXd(kept, a.size()), Eigen::MatrixXd(kept, b.size())};
    for (std::uint64_t t = 0; t < cfg.iterations; ++t) {
        const double bsum = b.sum();
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            a(i) = shrink_a * (row_sums(i) - bsum) + sd_a * norm(rng);
        }
        const double asum = a.sum();
        for (Eigen::Index j = 0; j < b.size(); ++j) {
            b(j) = shrink_b * (col_sums(j) - asum) + sd_b * norm(rng);
        }
        if (t >= cfg.burn_in) {
            const auto k = static_cast<Eigen::Index>(t - cfg.burn_in);
            chain.a.row(k) = a.transpose();
            chain.b.row(k) = b.transpose();
        }
    }
    return chain;
}

/// Posterior mean of (a, b) given mu and the variance components, from the
/// joint precision matrix. Dense (R+C)^2 solve; for checking the sampler.
inline Eigen::VectorXd gibbs_posterior_mean(const GibbsConfig& cfg, const Eigen::MatrixXd& y) {
    const auto r = static_cast<Eigen::Index>(cfg.r), c = static_cast<Eigen::Index>(cfg.c);
    const double sa = cfg.theta.sigma2_a, sb = cfg.theta.sigma2_b, se = cfg.theta.sigma2_e;
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(r + c, r + c);
    q.topLeftCorner(r, r).diagonal().setConstant(static_cast<double>(c) / se + 1 / sa);
    q.bottomRightCorner(c, c).diagonal().setConstant(static_cast<double>(r) / se + 1 / sb);
    q.topRightCorner(r, c).setConstant(1 / se);
    q.bottomLeftCorner(c, r).setConstant(1 / se);
    const Eigen::MatrixXd resid = y.array() - cfg.mu;
    Eigen::VectorXd h(r + c);
    h.head(r) = resid.rowwise().sum() / se;
    h.tail(c) = resid.colwise().sum().transpose() / se;
    return q.ldlt().solve(h);
}

struct RateReport {
    double rho_theory = NAN;
    double rho_empirical = NAN;
    std::vector<double> acf;
};

inline constexpr std::size_t kMinChainLength = 5000;

/// Sample autocorrelations at lags 0..max_lag.
inline std::vector<double> autocorrelation(const std::vector<double>& x, std::size_t max_lag) {
    const std::size_t n = x.size();
    double mean = 0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double c0 = 0;
    for (double v : x) c0 += (v - mean) * (v - mean);
    std::vector<double> acf;
    if (!(c0 > 0)) {
        return acf;
    }
    max_lag = std::min(max_lag, n - 1);
    acf.reserve(max_lag + 1);
    for (std::size_t k = 0; k <= max_lag; ++k) {
        double ck = 0;
        for (std::size_t t = 0; t + k < n; ++t) ck += (x[t] - mean) * (x[t + k] - mean);
        acf.push_back(ck / c0);
    }
    return acf;
}

/// Geometric decay rate of the autocorrelations: the mean of acf[k+1]/acf[k]
/// over the leading lags whose autocorrelation exceeds 0.2.
inline RateReport empirical_rate(const std::vector<double>& series, std::size_t max_lag = 200) {
    if (series.size() < kMinChainLength) {
        throw ChainTooShort("need at least 5000 post-burn-in draws");
    }
    RateReport rep;
    rep.acf = autocorrelation(series, max_lag);
    if (rep.acf.size() < 2) {
        throw NoisyAutocorrelation("chain has no variation; autocorrelation undefined");
    }
    double sum = 0;
    std::size_t used = 0;
    for (std::size_t k = 0; k + 1 < rep.acf.size() && rep.acf[k] > 0.2; ++k) {
        sum += rep.acf[k + 1] / rep.acf[k];
        ++used;
    }
    rep.rho_empirical = sum / static_cast<double>(used);
    return rep;
}

/// Simulates a balanced grid, runs the sampler and measures the decay of
/// the slower of sum(a) and sum(b).
inline RateReport gibbs_rate_check(const GibbsConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.mu = cfg.mu;
    p.theta = cfg.theta;
    Eigen::MatrixXd y(static_cast<Eigen::Index>(cfg.r), static_cast<Eigen::Index>(cfg.c));
    simulate(p, SimulationShape{cfg.r, cfg.c, 1.0, cfg.seed}, [&](const IndexTriple& t) {
        y(static_cast<Eigen::Index>(t.row), static_cast<Eigen::Index>(t.col)) = t.value;
    });
    const GibbsChain chain = run_gibbs_phi(cfg, y);
    RateReport ra = empirical_rate(chain.sum_a());
    RateReport rb = empirical_rate(chain.sum_b());
    RateReport out = ra.rho_empirical >= rb.rho_empirical ? std::move(ra) : std::move(rb);
    out.rho_theory = gibbs_rate(cfg.r, cfg.c, cfg.theta);
    return out;
}

}  // namespace crossmom

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "crossmom/errors.hpp"
#include "crossmom/model.hpp"
#include "crossmom/streaming_pass.hpp"
#include "crossmom/variance_estimator.hpp"

namespace crossmom {

/// What the shrinkage predictor needs to know about one target cell.
/// Unseen rows or columns carry zero counts and totals.
struct CellContext {
    double n_i = 0;
    double n_j = 0;
    bool z = false;
    double t_i = 0;  // T_i.
    double t_j = 0;  // T_.j
    double n = 0;
    double sum_ni2 = 0;
    double sum_nj2 = 0;
    std::optional<std::uint32_t> row;
    std::optional<std::uint32_t> col;
    /// The observed value when z is set; only smoothing reads it.
    double y = NAN;

    void validate() const {
        if (z && (n_i < 1 || n_j < 1)) {
            throw InvalidArgument("observed cell needs a seen row and column");
        }
        if (!(n >= 1)) {
            throw InvalidArgument("prediction needs N >= 1");
        }
    }
};

template <class Key>
CellContext make_cell_context(const FirstPassSummary<Key>& fp, const SecondPassSummary& sp, const PatternSums& ps,
                              std::optional<std::uint32_t> row, std::optional<std::uint32_t> col,
                              std::optional<double> y = std::nullopt) {
    CellContext ctx;
    ctx.n = ps.nd();
    ctx.sum_ni2 = ps.row_sq;
    ctx.sum_nj2 = ps.col_sq;
    ctx.row = row;
    ctx.col = col;
    if (row) {
        ctx.n_i = static_cast<double>(fp.rows[*row].n);
        ctx.t_i = static_cast<double>(sp.t_row[*row]);
    }
    if (col) {
        ctx.n_j = static_cast<double>(fp.cols[*col].n);
        ctx.t_j = static_cast<double>(sp.t_col[*col]);
    }
    if (y) {
        if (!row || !col) {
            throw InvalidArgument("an observed cell must lie in a seen row and column");
        }
        ctx.z = true;
        ctx.y = *y;
    }
    return ctx;
}

struct ShrinkageWeights {
    double lambda0 = 0;
    double lambda_a = 0;
    double lambda_b = 0;
    double lambda_ab = 0;
    double eta = NAN;

    Eigen::Vector3d vec3() const { return {lambda0, lambda_a, lambda_b}; }
    Eigen::Vector4d vec4() const { return {lambda0, lambda_a, lambda_b, lambda_ab}; }
};

/// How far the cell is from the large-count limits where the weights take
/// their textbook forms; small means the asymptotic intuition applies.
inline double prediction_eta(const CellContext& ctx) {
    const bool seen_i = ctx.n_i > 0;
    const bool seen_j = ctx.n_j > 0;
    if (seen_i && seen_j) {
        return std::max({1 / ctx.n_i, 1 / ctx.n_j, ctx.n_i / ctx.n, ctx.n_j / ctx.n});
    }
    if (seen_j) return ctx.t_j / ctx.n;
    if (seen_i) return ctx.t_i / ctx.n;
    return std::max({ctx.sum_ni2 / (ctx.n * ctx.n), ctx.sum_nj2 / (ctx.n * ctx.n), 1 / ctx.n});
}

/// Quadratic L(lambda) = lambda' H lambda - 2 c' lambda + constant.
struct PredictionSystem {
    Eigen::MatrixXd h;
    Eigen::VectorXd c;
    double constant = 0;

    double mse(const Eigen::VectorXd& lambda) const {
        return lambda.dot(h * lambda) - 2 * c.dot(lambda) + constant;
    }
};

inline PredictionSystem build_system(double mu, const VarianceComponents& th, const CellContext& ctx) {
    const double m2 = mu * mu;
    const double sa = th.sigma2_a, sb = th.sigma2_b, se = th.sigma2_e;
    const double z = ctx.z ? 1.0 : 0.0;
    const double n = ctx.n, ni = ctx.n_i, nj = ctx.n_j;
    PredictionSystem s;
    s.h.resize(3, 3);
    s.h(0, 0) = m2 * n * n + sa * ctx.sum_ni2 + sb * ctx.sum_nj2 + se * n;
    s.h(0, 1) = m2 * n * ni + sa * ni * ni + sb * ctx.t_i + se * ni;
    s.h(0, 2) = m2 * n * nj + sa * ctx.t_j + sb * nj * nj + se * nj;
    s.h(1, 1) = m2 * ni * ni + sa * ni * ni + sb * ni + se * ni;
    s.h(1, 2) = m2 * ni * nj + z * (sa * ni + sb * nj + se);
    s.h(2, 2) = m2 * nj * nj + sa * nj + sb * nj * nj + se * nj;
    s.h(1, 0) = s.h(0, 1);
    s.h(2, 0) = s.h(0, 2);
    s.h(2, 1) = s.h(1, 2);
    s.c.resize(3);
    s.c << m2 * n + sa * ni + sb * nj + se * z,
           m2 * ni + sa * ni + sb * z + se * z,
           m2 * nj + sa * z + sb * nj + se * z;
    s.constant = m2 + sa + sb + se;
    return s;
}

/// Four-weight system for estimating mu + a_i + b_j at an observed cell, the
/// fourth weight multiplying Y_ij itself.
inline PredictionSystem build_smoothing_system(double mu, const VarianceComponents& th, const CellContext& ctx) {
    if (!ctx.z) {
        throw NotObserved("smoothing needs an observed cell");
    }
    const double m2 = mu * mu;
    const double sa = th.sigma2_a, sb = th.sigma2_b, se = th.sigma2_e;
    const double n = ctx.n, ni = ctx.n_i, nj = ctx.n_j;
    const PredictionSystem base = build_system(mu, th, ctx);
    PredictionSystem s;
    s.h = Eigen::MatrixXd::Zero(4, 4);
    s.h.topLeftCorner(3, 3) = base.h;
    s.h(0, 3) = m2 * n + sa * ni + sb * nj + se;
    s.h(1, 3) = m2 * ni + sa * ni + sb + se;
    s.h(2, 3) = m2 * nj + sa + sb * nj + se;
    s.h(3, 3) = m2 + sa + sb + se;
    for (int k = 0; k < 3; ++k) s.h(3, k) = s.h(k, 3);
    s.c.resize(4);
    s.c << m2 * n + sa * ni + sb * nj,
           m2 * ni + sa * ni + sb,
           m2 * nj + sa + sb * nj,
           m2 + sa + sb;
    s.constant = m2 + sa + sb;
    return s;
}

namespace detail {

/// Solves the system restricted to `active` coordinates after scaling each
/// weight by its count, so entries are O(1) whatever N is.
inline Eigen::VectorXd solve_active(const PredictionSystem& sys, const std::vector<int>& active,
                                    const std::vector<double>& scale) {
    const int k = static_cast<int>(active.size());
    Eigen::MatrixXd h(k, k);
    Eigen::VectorXd c(k);
    for (int a = 0; a < k; ++a) {
        c(a) = sys.c(active[a]) / scale[active[a]];
        for (int b = 0; b < k; ++b) {
            h(a, b) = sys.h(active[a], active[b]) / (scale[active[a]] * scale[active[b]]);
        }
    }
    // Rank deficiency means two totals coincide (a row seen once, say); any
    // solution then gives the same predictor, so take the minimum-norm one.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(h);
    cod.setThreshold(1e-12);
    if (cod.rank() == 0) {
        throw SingularPredictionSystem("prediction system is singular for these parameters");
    }
    const Eigen::VectorXd x = cod.solve(c);
    const double cn = std::max(c.cwiseAbs().maxCoeff(), h.cwiseAbs().maxCoeff() * x.cwiseAbs().maxCoeff());
    if (!x.allFinite() || (h * x - c).cwiseAbs().maxCoeff() > 1e-8 * std::max(cn, 1e-300)) {
        throw SingularPredictionSystem("prediction system is numerically singular");
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(sys.c.size());
    for (int a = 0; a < k; ++a) {
        out(active[a]) = x(a) / scale[active[a]];
    }
    return out;
}

}  // namespace detail

inline ShrinkageWeights solve_weights(const PredictionSystem& sys, const CellContext& ctx) {
    std::vector<int> active{0};
    if (ctx.n_i > 0) active.push_back(1);
    if (ctx.n_j > 0) active.push_back(2);
    const Eigen::VectorXd x = detail::solve_active(sys, active, {ctx.n, std::max(ctx.n_i, 1.0), std::max(ctx.n_j, 1.0)});
    ShrinkageWeights w;
    w.lambda0 = x(0);
    w.lambda_a = x(1);
    w.lambda_b = x(2);
    w.eta = prediction_eta(ctx);
    return w;
}

inline ShrinkageWeights shrinkage_weights(double mu, const VarianceComponents& th, const CellContext& ctx) {
    ctx.validate();
    return solve_weights(build_system(mu, th, ctx), ctx);
}

/// Best self-weight when the other three weights are held at zero.
inline double conditional_self_weight(double mu, const VarianceComponents& th) {
    const double signal = mu * mu + th.sigma2_a + th.sigma2_b;
    return signal / (signal + th.sigma2_e);
}

inline ShrinkageWeights smoothing_weights(double mu, const VarianceComponents& th, const CellContext& ctx) {
    ctx.validate();
    if (!ctx.z) {
        throw NotObserved("smoothing needs an observed cell");
    }
    ShrinkageWeights w;
    w.eta = prediction_eta(ctx);
    if (th.sigma2_e == 0.0) {
        // Noise-free cell: the observation is the target.
        w.lambda_ab = 1.0;
        return w;
    }
    const Eigen::VectorXd x = detail::solve_active(build_smoothing_system(mu, th, ctx), {0, 1, 2, 3},
                                                   {ctx.n, ctx.n_i, ctx.n_j, 1.0});
    w.lambda0 = x(0);
    w.lambda_a = x(1);
    w.lambda_b = x(2);
    w.lambda_ab = x(3);
    return w;
}

/// MSE of lambda0 Y.. + lambda_a Y_i. + lambda_b Y_.j for predicting Y_ij,
/// written out term by term.
inline double shrinkage_mse(double mu, const VarianceComponents& th, const CellContext& ctx,
                            const ShrinkageWeights& w) {
    const double sa = th.sigma2_a, sb = th.sigma2_b, se = th.sigma2_e;
    const double z = ctx.z ? 1.0 : 0.0;
    const double n = ctx.n, ni = ctx.n_i, nj = ctx.n_j;
    const double l0 = w.lambda0, la = w.lambda_a, lb = w.lambda_b;
    const double bias = 1 - l0 * n - la * ni - lb * nj;
    return mu * mu * bias * bias +
           l0 * l0 * (sa * ctx.sum_ni2 + sb * ctx.sum_nj2 + se * n) +
           la * la * (sa * ni * ni + sb * ni + se * ni) +
           lb * lb * (sa * nj + sb * nj * nj + se * nj) + sa + sb + se -
           2 * l0 * (sa * ni + sb * nj + se * z) -
           2 * la * (sa * ni + sb * z + se * z) -
           2 * lb * (sa * z + sb * nj + se * z) +
           2 * l0 * la * (sa * ni * ni + sb * ctx.t_i + se * ni) +
           2 * l0 * lb * (sa * ctx.t_j + sb * nj * nj + se * nj) +
           2 * la * lb * z * (sa * ni + sb * nj + se);
}

/// MSE of the four-weight predictor for mu + a_i + b_j at an observed cell.
inline double smoothing_mse(double mu, const VarianceComponents& th, const CellContext& ctx,
                            const ShrinkageWeights& w) {
    if (!ctx.z) {
        throw NotObserved("smoothing needs an observed cell");
    }
    const double sa = th.sigma2_a, sb = th.sigma2_b, se = th.sigma2_e;
    const double n = ctx.n, ni = ctx.n_i, nj = ctx.n_j;
    const double l0 = w.lambda0, la = w.lambda_a, lb = w.lambda_b, lab = w.lambda_ab;
    const double bias = 1 - l0 * n - la * ni - lb * nj;
    const double base = mu * mu * bias * bias + sa + sb +
                        l0 * l0 * (sa * ctx.sum_ni2 + sb * ctx.sum_nj2 + se * n) +
                        la * la * (sa * ni * ni + sb * ni + se * ni) +
                        lb * lb * (sa * nj + sb * nj * nj + se * nj) -
                        2 * l0 * (sa * ni + sb * nj) - 2 * la * (sa * ni + sb) - 2 * lb * (sa + sb * nj) +
                        2 * l0 * la * (sa * ni * ni + sb * ctx.t_i + se * ni) +
                        2 * l0 * lb * (sa * ctx.t_j + sb * nj * nj + se * nj) +
                        2 * la * lb * (sa * ni + sb * nj + se);
    const double ey2 = mu * mu + sa + sb + se;
    const double cov_yhat = l0 * (sa * ni + sb * nj + se) + la * (sa * ni + sb + se) + lb * (sa + sb * nj + se);
    const double e_y_yhat = mu * mu * (n * l0 + ni * la + nj * lb) + cov_yhat;
    return base + lab * lab * ey2 + 2 * lab * e_y_yhat - 2 * lab * (mu * mu + sa + sb);
}

/// Applies weights to the grand, row and column totals (and the cell value
/// when smoothing).
template <class Key>
double predict(const ShrinkageWeights& w, const FirstPassSummary<Key>& fp, const CellContext& ctx) {
    double y = w.lambda0 * fp.global.total();
    if (ctx.row && w.lambda_a != 0.0) y += w.lambda_a * fp.rows[*ctx.row].total();
    if (ctx.col && w.lambda_b != 0.0) y += w.lambda_b * fp.cols[*ctx.col].total();
    if (ctx.z && w.lambda_ab != 0.0) y += w.lambda_ab * ctx.y;
    return y;
}

struct PredictionRecord {
    ShrinkageWeights weights;
    double prediction = NAN;
    double mse = NAN;
    bool smoothed = false;
};

/// One cell's weights, prediction and MSE at the optimum. Smoothing applies
/// only to observed cells and targets mu + a_i + b_j.
template <class Key>
PredictionRecord predict_cell(double mu, const VarianceComponents& th, const FirstPassSummary<Key>& fp,
                              const CellContext& ctx, bool smooth = false) {
    PredictionRecord rec;
    if (smooth && ctx.z) {
        rec.weights = smoothing_weights(mu, th, ctx);
        rec.mse = smoothing_mse(mu, th, ctx, rec.weights);
        rec.smoothed = true;
    } else {
        rec.weights = shrinkage_weights(mu, th, ctx);
        rec.mse = shrinkage_mse(mu, th, ctx, rec.weights);
    }
    rec.prediction = predict(rec.weights, fp, ctx);
    return rec;
}

enum class BlpTarget { cell, cell_mean };

/// Best linear predictor over all observed cells, by a dense N x N solve.
/// Returns weights in the order of `p.cells`.
inline Eigen::VectorXd blp_weights_dense(double mu, const VarianceComponents& th, const ObservationPattern& p,
                                         std::uint32_t i, std::uint32_t j, BlpTarget target = BlpTarget::cell) {
    const auto n = static_cast<Eigen::Index>(p.cells.size());
    if (n > 500) {
        throw InstanceTooLarge("dense BLP oracle limited to N <= 500");
    }
    const double m2 = mu * mu;
    Eigen::MatrixXd a(n, n);
    Eigen::VectorXd b(n);
    for (Eigen::Index u = 0; u < n; ++u) {
        const auto [r, s] = p.cells[u];
        for (Eigen::Index v = 0; v < n; ++v) {
            const auto [r2, s2] = p.cells[v];
            a(u, v) = m2 + th.sigma2_a * (r == r2) + th.sigma2_b * (s == s2) + th.sigma2_e * (u == v);
        }
        b(u) = m2 + th.sigma2_a * (r == i) + th.sigma2_b * (s == j) +
               (target == BlpTarget::cell ? th.sigma2_e * (r == i && s == j) : 0.0);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) {
        throw SingularPredictionSystem("BLP system is singular");
    }
    return lu.solve(b);
}

inline double blp_mse_dense(double mu, const VarianceComponents& th, const ObservationPattern& p, std::uint32_t i,
                            std::uint32_t j, const Eigen::VectorXd& lambda, BlpTarget target = BlpTarget::cell) {
    const double m2 = mu * mu;
    double total = 0;
    CompensatedSum self;
    CompensatedSum sum_row_sq, sum_col_sq, sum_sq;
    std::vector<double> row_w(p.r, 0.0), col_w(p.c, 0.0);
    for (std::size_t u = 0; u < p.cells.size(); ++u) {
        const auto [r, s] = p.cells[u];
        total += lambda(static_cast<Eigen::Index>(u));
        row_w[r] += lambda(static_cast<Eigen::Index>(u));
        col_w[s] += lambda(static_cast<Eigen::Index>(u));
        sum_sq += lambda(static_cast<Eigen::Index>(u)) * lambda(static_cast<Eigen::Index>(u));
        if (r == i && s == j) self += lambda(static_cast<Eigen::Index>(u));
    }
    for (double v : row_w) sum_row_sq += v * v;
    for (double v : col_w) sum_col_sq += v * v;
    const double ri = i < p.r ? row_w[i] : 0.0;
    const double cj = j < p.c ? col_w[j] : 0.0;
    const double e_t = target == BlpTarget::cell ? th.sigma2_e : 0.0;
    return m2 * (1 - total) * (1 - total) + th.sigma2_a + th.sigma2_b + e_t +
           th.sigma2_a * sum_row_sq.value() + th.sigma2_b * sum_col_sq.value() + th.sigma2_e * sum_sq.value() -
           2 * (th.sigma2_a * ri + th.sigma2_b * cj + e_t * self.value());
}

}  // namespace crossmom

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "crossmom/compensated_sum.hpp"
#include "crossmom/errors.hpp"
#include "crossmom/model.hpp"
#include "crossmom/moment_estimator.hpp"
#include "crossmom/streaming_pass.hpp"

namespace crossmom {

/// O(R+C) reductions of the second-pass vectors that the covariance formulas
/// need, together with the six ZN sums.
struct CrossTotals {
    double zn_mm = 0;
    double zn_pm = 0;
    double zn_mp = 0;
    u128 zn_pp = 0;
    double zn_m2 = 0;
    double zn_2m = 0;
    double t_row_sq_over_n = 0;  // sum_i T_i.^2 / N_i.
    double t_col_sq_over_n = 0;  // sum_j T_.j^2 / N_.j
    double row_pair_inv = 0;     // sum_ir (ZZ')_ir / (N_i. N_r.) = sum_j (sum_i Z_ij / N_i.)^2
    double col_pair_inv = 0;     // sum_js (Z'Z)_js / (N_.j N_.s)
};

template <class Key>
CrossTotals cross_totals(const FirstPassSummary<Key>& fp, const SecondPassSummary& sp) {
    CrossTotals ct;
    ct.zn_mm = sp.zn_mm.value();
    ct.zn_pm = sp.zn_pm.value();
    ct.zn_mp = sp.zn_mp.value();
    ct.zn_pp = sp.zn_pp;
    ct.zn_m2 = sp.zn_m2.value();
    ct.zn_2m = sp.zn_2m.value();
    CompensatedSum tr, tc, gr, gc;
    for (std::size_t i = 0; i < fp.rows.size(); ++i) {
        const double t = static_cast<double>(sp.t_row[i]);
        tr += t * t / static_cast<double>(fp.rows[i].n);
        const double h = sp.row_inv_col_mass[i].value();
        gc += h * h;
    }
    for (std::size_t j = 0; j < fp.cols.size(); ++j) {
        const double t = static_cast<double>(sp.t_col[j]);
        tc += t * t / static_cast<double>(fp.cols[j].n);
        const double g = sp.col_inv_row_mass[j].value();
        gr += g * g;
    }
    ct.t_row_sq_over_n = tr.checked_value("sum T_i.^2/N_i.");
    ct.t_col_sq_over_n = tc.checked_value("sum T_.j^2/N_.j");
    ct.row_pair_inv = gr.value();
    ct.col_pair_inv = gc.value();
    return ct;
}

namespace detail {

inline double floored(double kappa) { return std::max(kappa, -2.0); }

inline void require_exact_range(const PatternSums& ps) {
    // N^4 must fit the 128-bit intermediates.
    if (ps.n >= (std::uint64_t{1} << 31)) {
        throw InstanceTooLarge("more than 2^31 observations");
    }
}

/// N^2 sum N^2 - 2N sum N^3 + sum N^4 and (sum N^2)^2 - sum N^4, exact.
inline std::pair<double, double> var_ue_factor_terms(std::uint64_t n, u128 sq, u128 cube, u128 quart) {
    const i128 nn = static_cast<i128>(n);
    const i128 kurt = nn * nn * static_cast<i128>(sq) - 2 * nn * static_cast<i128>(cube) + static_cast<i128>(quart);
    const i128 pair = static_cast<i128>(sq) * static_cast<i128>(sq) - static_cast<i128>(quart);
    return {to_double(kurt), to_double(pair)};
}

}  // namespace detail

/// N^3 - 2N ZN^{1,1} + sum N_i.^2 sum N_.j^2, exact.
inline double chi_square_term(const PatternSums& ps, u128 zn_pp) {
    detail::require_exact_range(ps);
    const i128 n = ps.n;
    return to_double(n * n * n - 2 * n * static_cast<i128>(zn_pp) +
                     static_cast<i128>(ps.row_sq_exact) * static_cast<i128>(ps.col_sq_exact));
}

inline double var_ue_exact(const VarianceComponents& th, const Kurtoses& k, const PatternSums& ps,
                           const CrossTotals& ct) {
    detail::require_exact_range(ps);
    const double n = ps.nd();
    const double a2 = th.sigma2_a * th.sigma2_a;
    const double b2 = th.sigma2_b * th.sigma2_b;
    const double e2 = th.sigma2_e * th.sigma2_e;
    const auto [ka, pa] = detail::var_ue_factor_terms(ps.n, ps.row_sq_exact, ps.row_cube_exact, ps.row_quart_exact);
    const auto [kb, pb] = detail::var_ue_factor_terms(ps.n, ps.col_sq_exact, ps.col_cube_exact, ps.col_quart_exact);
    const double n3 = n * n * n;
    return 2 * a2 * pa + a2 * (detail::floored(k.kappa_a) + 2) * ka +
           2 * b2 * pb + b2 * (detail::floored(k.kappa_b) + 2) * kb +
           2 * e2 * n * (n - 1) + e2 * (detail::floored(k.kappa_e) + 2) * n * (n - 1) * (n - 1) +
           4 * th.sigma2_a * th.sigma2_b * chi_square_term(ps, ct.zn_pp) +
           4 * th.sigma2_a * th.sigma2_e * (n3 - n * ps.row_sq) +
           4 * th.sigma2_b * th.sigma2_e * (n3 - n * ps.col_sq);
}

/// Two-pass over-estimate of Var(U_a).
///
/// sum_ir (ZZ')_ir (1 - 1/N_i.)(1 - 1/N_r.) expands to
/// sum_j N_.j^2 - 2 ZN^{-1,1} + sum_ir (ZZ')_ir/(N_i. N_r.), all known after
/// the second pass, so that factor is exact. Only the pair term
/// sum_ir (ZZ')_ir^2/(N_i. N_r.) is bounded, using (ZZ')_ir <= N_r.
inline double var_ua_upper(const VarianceComponents& th, const Kurtoses& k, const PatternSums& ps,
                           const CrossTotals& ct) {
    const double b2 = th.sigma2_b * th.sigma2_b;
    const double e2 = th.sigma2_e * th.sigma2_e;
    const double n_minus_r = static_cast<double>(ps.n - ps.r);
    return b2 * (detail::floored(k.kappa_b) + 2) * std::max(ps.col_sq - 2 * ct.zn_mp + ct.row_pair_inv, 0.0) +
           2 * b2 * std::max(ct.zn_mp - ct.row_pair_inv, 0.0) +
           4 * th.sigma2_b * th.sigma2_e * n_minus_r +
           e2 * (detail::floored(k.kappa_e) + 2) * ps.row_nested_term() + 2 * e2 * ps.row_one_minus_inv();
}

inline double var_ub_upper(const VarianceComponents& th, const Kurtoses& k, const PatternSums& ps,
                           const CrossTotals& ct) {
    const double a2 = th.sigma2_a * th.sigma2_a;
    const double e2 = th.sigma2_e * th.sigma2_e;
    const double n_minus_c = static_cast<double>(ps.n - ps.c);
    return a2 * (detail::floored(k.kappa_a) + 2) * std::max(ps.row_sq - 2 * ct.zn_pm + ct.col_pair_inv, 0.0) +
           2 * a2 * std::max(ct.zn_pm - ct.col_pair_inv, 0.0) +
           4 * th.sigma2_a * th.sigma2_e * n_minus_c +
           e2 * (detail::floored(k.kappa_e) + 2) * ps.col_nested_term() + 2 * e2 * ps.col_one_minus_inv();
}

inline double cov_ua_ub(const VarianceComponents& th, const Kurtoses& k, const PatternSums& ps,
                        const CrossTotals& ct) {
    const double e2 = th.sigma2_e * th.sigma2_e;
    const double s = ps.nd() - static_cast<double>(ps.r) - static_cast<double>(ps.c) + ct.zn_mm;
    return e2 * (detail::floored(k.kappa_e) + 2) * s;
}

inline double cov_ua_ue(const VarianceComponents& th, const Kurtoses& k, const PatternSums& ps,
                        const CrossTotals& ct) {
    detail::require_exact_range(ps);
    const double n = ps.nd();
    const double b2 = th.sigma2_b * th.sigma2_b;
    const double e2 = th.sigma2_e * th.sigma2_e;
    const double n_minus_r = static_cast<double>(ps.n - ps.r);
    const double int_part =
        to_double(static_cast<i128>(ps.n) * static_cast<i128>(ps.col_sq_exact) - static_cast<i128>(ps.col_cube_exact));
    return 2 * b2 * (ct.t_row_sq_over_n - ct.zn_m2) +
           b2 * (detail::floored(k.kappa_b) + 2) * (int_part - n * ct.zn_mp + ct.zn_m2) +
           2 * e2 * n_minus_r + e2 * (detail::floored(k.kappa_e) + 2) * n_minus_r * (n - 1) +
           4 * th.sigma2_b * th.sigma2_e * n * n_minus_r;
}

inline double cov_ub_ue(const VarianceComponents& th, const Kurtoses& k, const PatternSums& ps,
                        const CrossTotals& ct) {
    detail::require_exact_range(ps);
    const double n = ps.nd();
    const double a2 = th.sigma2_a * th.sigma2_a;
    const double e2 = th.sigma2_e * th.sigma2_e;
    const double n_minus_c = static_cast<double>(ps.n - ps.c);
    const double int_part =
        to_double(static_cast<i128>(ps.n) * static_cast<i128>(ps.row_sq_exact) - static_cast<i128>(ps.row_cube_exact));
    return 2 * a2 * (ct.t_col_sq_over_n - ct.zn_2m) +
           a2 * (detail::floored(k.kappa_a) + 2) * (int_part - n * ct.zn_pm + ct.zn_2m) +
           2 * e2 * n_minus_c + e2 * (detail::floored(k.kappa_e) + 2) * n_minus_c * (n - 1) +
           4 * th.sigma2_a * th.sigma2_e * n * n_minus_c;
}

/// Covariance of (U_a, U_b, U_e). Off-diagonal entries and Var(U_e) are
/// exact; Var(U_a) and Var(U_b) are over-estimates unless replaced.
struct UCovariance {
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
    std::array<bool, 3> diag_upper_bound{true, true, false};
};

inline UCovariance cov_uu(const VarianceComponents& th, const Kurtoses& k, const PatternSums& ps,
                          const CrossTotals& ct) {
    UCovariance c;
    c.m(0, 0) = var_ua_upper(th, k, ps, ct);
    c.m(1, 1) = var_ub_upper(th, k, ps, ct);
    c.m(2, 2) = var_ue_exact(th, k, ps, ct);
    c.m(0, 1) = c.m(1, 0) = cov_ua_ub(th, k, ps, ct);
    c.m(0, 2) = c.m(2, 0) = cov_ua_ue(th, k, ps, ct);
    c.m(1, 2) = c.m(2, 1) = cov_ub_ue(th, k, ps, ct);
    return c;
}

template <class Key>
UCovariance cov_uu(const VarianceComponents& th, const Kurtoses& k, const FirstPassSummary<Key>& fp,
                   const SecondPassSummary& sp) {
    return cov_uu(th, k, pattern_sums(fp), cross_totals(fp, sp));
}

enum class CovarianceRegime { asymptotic, plugin_upper };

inline const char* to_string(CovarianceRegime r) noexcept {
    return r == CovarianceRegime::asymptotic ? "asymptotic" : "plugin_upper";
}

struct ThetaCovariance {
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
    CovarianceRegime regime = CovarianceRegime::plugin_upper;
    double delta = NAN;
    double delta0 = NAN;
    bool nonconservative_diagonal = false;
};

inline constexpr double kDefaultDelta0 = 0.01;

inline ThetaCovariance theta_cov_asymptotic(const VarianceComponents& th, const Kurtoses& k, const PatternSums& ps,
                                            double delta, double delta0 = kDefaultDelta0) {
    if (!(delta <= delta0)) {
        throw DeltaTooLarge("delta " + std::to_string(delta) + " exceeds threshold " + std::to_string(delta0));
    }
    const double n = ps.nd();
    ThetaCovariance out;
    out.regime = CovarianceRegime::asymptotic;
    out.delta = delta;
    out.delta0 = delta0;
    out.m(0, 0) = th.sigma2_a * th.sigma2_a * (detail::floored(k.kappa_a) + 2) * ps.row_sq / (n * n);
    out.m(1, 1) = th.sigma2_b * th.sigma2_b * (detail::floored(k.kappa_b) + 2) * ps.col_sq / (n * n);
    out.m(2, 2) = th.sigma2_e * th.sigma2_e * (detail::floored(k.kappa_e) + 2) / n;
    return out;
}

/// M^{-1} Sigma_U M^{-T}.
inline ThetaCovariance theta_cov_from_ucov(const UCovariance& ucov, const MomentMatrix& mm) {
    if (mm.singular()) {
        throw SingularSystem(mm.singularity_reason());
    }
    const Eigen::Matrix3d inv = mm.inverse();
    ThetaCovariance out;
    out.regime = CovarianceRegime::plugin_upper;
    out.m = inv * ucov.m * inv.transpose();
    out.m = 0.5 * (out.m + out.m.transpose()).eval();
    out.nonconservative_diagonal = (out.m.diagonal().array() < 0.0).any();
    return out;
}

inline ThetaCovariance theta_cov_plugin(const VarianceComponents& th, const Kurtoses& k, const PatternSums& ps,
                                        const CrossTotals& ct) {
    return theta_cov_from_ucov(cov_uu(th, k, ps, ct), moment_matrix(ps));
}

template <class Key>
ThetaCovariance theta_cov_plugin(const VarianceComponents& th, const Kurtoses& k, const FirstPassSummary<Key>& fp,
                                 const SecondPassSummary& sp) {
    return theta_cov_plugin(th, k, pattern_sums(fp), cross_totals(fp, sp));
}

/// The delta gate: asymptotic diagonal when delta <= delta0 (unless forced
/// off), otherwise the plug-in matrix.
inline ThetaCovariance theta_covariance(const VarianceComponents& th, const Kurtoses& k, const PatternSums& ps,
                                        const CrossTotals& ct, const ObservationCounts& oc,
                                        double delta0 = kDefaultDelta0, bool force_plugin = false) {
    ThetaCovariance out = (!force_plugin && oc.delta <= delta0) ? theta_cov_asymptotic(th, k, ps, oc.delta, delta0)
                                                                : theta_cov_plugin(th, k, ps, ct);
    out.delta = oc.delta;
    out.delta0 = delta0;
    return out;
}

/// Cell list with dense indices; input to the O(RC) and pair-enumerating
/// oracles below.
struct ObservationPattern {
    std::uint32_t r = 0;
    std::uint32_t c = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> cells;

    ObservationPattern transposed() const {
        ObservationPattern t{c, r, {}};
        t.cells.reserve(cells.size());
        for (auto [i, j] : cells) t.cells.emplace_back(j, i);
        return t;
    }
};

template <class Range, class Key>
ObservationPattern observation_pattern(const Range& triples, const FirstPassSummary<Key>& fp) {
    ObservationPattern p{static_cast<std::uint32_t>(fp.r()), static_cast<std::uint32_t>(fp.c()), {}};
    for (const auto& t : triples) {
        p.cells.emplace_back(*fp.row_keys.find(t.row), *fp.col_keys.find(t.col));
    }
    return p;
}

inline constexpr double kDenseOracleLimit = 1e7;

/// Exact Var(U_a) by enumerating co-observed row pairs column by column.
/// Cost is sum_j N_.j^2, refused above 1e7.
inline double var_ua_exact_dense(const VarianceComponents& th, const Kurtoses& k, const ObservationPattern& p) {
    std::vector<std::uint64_t> ni(p.r, 0);
    std::vector<std::vector<std::uint32_t>> by_col(p.c);
    for (auto [i, j] : p.cells) {
        ++ni[i];
        by_col[j].push_back(i);
    }
    double cost = 0;
    for (const auto& col : by_col) cost += static_cast<double>(col.size()) * static_cast<double>(col.size());
    if (cost > kDenseOracleLimit) {
        throw InstanceTooLarge("dense Var(U_a) oracle limited to sum N_.j^2 <= 1e7");
    }
    std::unordered_map<std::uint64_t, std::uint64_t> zzt;
    for (const auto& col : by_col) {
        for (auto i : col) {
            for (auto r : col) {
                ++zzt[(static_cast<std::uint64_t>(i) << 32) | r];
            }
        }
    }
    CompensatedSum kurt_term, pair_term, nested, one_minus;
    for (const auto& [key, cnt] : zzt) {
        const double fi = static_cast<double>(ni[key >> 32]);
        const double fr = static_cast<double>(ni[key & 0xffffffffULL]);
        const double z = static_cast<double>(cnt);
        kurt_term += z * (1 - 1 / fi) * (1 - 1 / fr);
        pair_term += z * (z - 1) / (fi * fr);
    }
    double n = 0;
    for (auto v : ni) {
        if (v == 0) continue;
        const double f = static_cast<double>(v);
        nested += f * (1 - 1 / f) * (1 - 1 / f);
        one_minus += 1 - 1 / f;
        n += f;
    }
    const double r = static_cast<double>(std::count_if(ni.begin(), ni.end(), [](auto v) { return v > 0; }));
    const double b2 = th.sigma2_b * th.sigma2_b;
    const double e2 = th.sigma2_e * th.sigma2_e;
    return b2 * (detail::floored(k.kappa_b) + 2) * kurt_term.value() + 2 * b2 * pair_term.value() +
           4 * th.sigma2_b * th.sigma2_e * (n - r) + e2 * (detail::floored(k.kappa_e) + 2) * nested.value() +
           2 * e2 * one_minus.value();
}

inline double var_ub_exact_dense(const VarianceComponents& th, const Kurtoses& k, const ObservationPattern& p) {
    return var_ua_exact_dense({th.sigma2_b, th.sigma2_a, th.sigma2_e}, {k.kappa_b, k.kappa_a, k.kappa_e},
                              p.transposed());
}

/// sum_ij (N_i. N_.j - N Z_ij)^2 over the full grid, O(RC).
inline double chi_square_dense(const ObservationPattern& p) {
    if (static_cast<double>(p.r) * static_cast<double>(p.c) > kDenseOracleLimit) {
        throw InstanceTooLarge("dense chi-square oracle limited to R*C <= 1e7");
    }
    std::vector<std::int64_t> ni(p.r, 0), nj(p.c, 0);
    std::vector<std::uint8_t> z(static_cast<std::size_t>(p.r) * p.c, 0);
    for (auto [i, j] : p.cells) {
        ++ni[i];
        ++nj[j];
        z[static_cast<std::size_t>(i) * p.c + j] = 1;
    }
    const std::int64_t n = static_cast<std::int64_t>(p.cells.size());
    i128 total = 0;
    for (std::uint32_t i = 0; i < p.r; ++i) {
        for (std::uint32_t j = 0; j < p.c; ++j) {
            const i128 d = static_cast<i128>(ni[i]) * nj[j] - n * z[static_cast<std::size_t>(i) * p.c + j];
            total += d * d;
        }
    }
    return to_double(total);
}

}  // namespace crossmom

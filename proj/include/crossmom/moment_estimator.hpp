#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "crossmom/errors.hpp"
#include "crossmom/model.hpp"
#include "crossmom/streaming_pass.hpp"

namespace crossmom {

/// Within-row, within-column and global pair statistics.
struct UStatistics {
    double u_a = 0;
    double u_b = 0;
    double u_e = 0;

    Eigen::Vector3d vec() const { return {u_a, u_b, u_e}; }
};

struct WStatistics {
    double w_a = 0;
    double w_b = 0;
    double w_e = 0;

    Eigen::Vector3d vec() const { return {w_a, w_b, w_e}; }
};

template <class Key>
UStatistics u_stats(const FirstPassSummary<Key>& fp) {
    CompensatedSum ua;
    CompensatedSum ub;
    for (const auto& g : fp.rows) ua += g.m2;
    for (const auto& g : fp.cols) ub += g.m2;
    return {ua.checked_value("U_a"), ub.checked_value("U_b"), static_cast<double>(fp.n()) * fp.global.m2};
}

/// Same statistics with the second moments re-read by the second pass; these
/// do not depend on how the first pass was sharded.
template <class Key>
UStatistics u_stats(const FirstPassSummary<Key>& fp, const SecondPassSummary& sp) {
    CompensatedSum ua;
    CompensatedSum ub;
    for (std::size_t i = 0; i < fp.rows.size(); ++i) ua += sp.centered_sq_row(i, fp.rows[i].n);
    for (std::size_t j = 0; j < fp.cols.size(); ++j) ub += sp.centered_sq_col(j, fp.cols[j].n);
    const auto n = fp.n();
    return {ua.checked_value("U_a"), ub.checked_value("U_b"), static_cast<double>(n) * sp.centered_sq_global(n)};
}

template <class Key>
WStatistics w_stats(const FirstPassSummary<Key>& fp, const SecondPassSummary& sp) {
    CompensatedSum wa;
    CompensatedSum wb;
    for (std::size_t i = 0; i < fp.rows.size(); ++i) {
        const double s2 = sp.centered_sq_row(i, fp.rows[i].n);
        wa += sp.centered_fourth_row(i, fp.rows[i].n);
        wa += 3.0 * s2 * s2 / static_cast<double>(fp.rows[i].n);
    }
    for (std::size_t j = 0; j < fp.cols.size(); ++j) {
        const double s2 = sp.centered_sq_col(j, fp.cols[j].n);
        wb += sp.centered_fourth_col(j, fp.cols[j].n);
        wb += 3.0 * s2 * s2 / static_cast<double>(fp.cols[j].n);
    }
    const double n = static_cast<double>(fp.n());
    const double s = sp.centered_sq_global(fp.n());
    return {wa.checked_value("W_a"), wb.checked_value("W_b"), n * sp.centered_fourth_global(fp.n()) + 3.0 * s * s};
}

/// The 3x3 map from (sigma2_a, sigma2_b, sigma2_e) to E(U). Its pattern
///
///     [ 0       a  a ]
///     [ b       0  b ]      a = N - R, b = N - C
///     [ N^2-Sr  N^2-Sc  N^2-N ]
///
/// admits a closed-form solve, used instead of a general factorization.
struct MomentMatrix {
    Eigen::Matrix3d entries = Eigen::Matrix3d::Zero();
    double det = 0;
    std::uint64_t n_minus_r = 0;
    std::uint64_t n_minus_c = 0;
    /// N^2 + N - sum N_i.^2 - sum N_.j^2, exact.
    i128 det_factor = 0;
    double n = 0;

    double a() const noexcept { return static_cast<double>(n_minus_r); }
    double b() const noexcept { return static_cast<double>(n_minus_c); }

    bool singular() const noexcept {
        return n_minus_r == 0 || n_minus_c == 0 || std::fabs(to_double(det_factor)) < 1e-9 * n * n;
    }

    /// Which components cannot be separated, for error messages.
    std::string singularity_reason() const {
        std::string out;
        if (n_minus_r == 0) {
            out += "every row holds a single observation (N = R): sigma2_b and sigma2_e are not separately identifiable";
        }
        if (n_minus_c == 0) {
            if (!out.empty()) out += "; ";
            out += "every column holds a single observation (N = C): sigma2_a and sigma2_e are not separately identifiable";
        }
        if (out.empty() && singular()) {
            out = "one row or column holds about half the data or more: sigma2_a and sigma2_b are not identifiable";
        }
        return out;
    }

    /// Solves M x = y in closed form. Caller checks singular() first.
    Eigen::Vector3d solve(const Eigen::Vector3d& y) const {
        const double p = entries(2, 0);
        const double q = entries(2, 1);
        const double d = -to_double(det_factor);  // (N^2 - N) - p - q
        const double u = y(0) / a();
        const double v = y(1) / b();
        const double e = (y(2) - p * v - q * u) / d;
        return {v - e, u - e, e};
    }

    Eigen::Matrix3d inverse() const {
        Eigen::Matrix3d inv;
        for (int k = 0; k < 3; ++k) {
            inv.col(k) = solve(Eigen::Vector3d::Unit(k));
        }
        return inv;
    }
};

inline MomentMatrix moment_matrix(const PatternSums& ps) {
    MomentMatrix m;
    const u128 n = ps.n;
    m.n = ps.nd();
    m.n_minus_r = ps.n - ps.r;
    m.n_minus_c = ps.n - ps.c;
    m.det_factor = ps.det_factor_exact();
    const double a = m.a();
    const double b = m.b();
    m.entries << 0.0, a, a,
                 b, 0.0, b,
                 to_double(n * n - ps.row_sq_exact), to_double(n * n - ps.col_sq_exact), to_double(n * n - n);
    m.det = a * b * to_double(m.det_factor);
    return m;
}

template <class Key>
MomentMatrix moment_matrix(const FirstPassSummary<Key>& fp) {
    return moment_matrix(pattern_sums(fp));
}

struct ThetaEstimate {
    double sigma2_a = 0;
    double sigma2_b = 0;
    double sigma2_e = 0;
    VarianceComponents clamped;
    double mu4_a = 0;
    double mu4_b = 0;
    double mu4_e = 0;
    /// Kurtoses fed to variance formulas: floored at -2, zero where undefined.
    Kurtoses kappa;
    /// Unfloored values; NaN where undefined.
    std::array<double, 3> kappa_raw{NAN, NAN, NAN};
    std::array<bool, 3> kappa_defined{false, false, false};
    std::array<bool, 3> kappa_floored{false, false, false};
    bool kurtoses_solved = false;

    Eigen::Vector3d raw() const { return {sigma2_a, sigma2_b, sigma2_e}; }
};

inline VarianceComponents clamp(const Eigen::Vector3d& t) {
    return {std::max(t(0), 0.0), std::max(t(1), 0.0), std::max(t(2), 0.0)};
}

inline ThetaEstimate solve_theta(const UStatistics& u, const MomentMatrix& m) {
    if (m.singular()) {
        throw SingularSystem(m.singularity_reason());
    }
    const Eigen::Vector3d t = m.solve(u.vec());
    ThetaEstimate est;
    est.sigma2_a = t(0);
    est.sigma2_b = t(1);
    est.sigma2_e = t(2);
    est.clamped = clamp(t);
    return est;
}

/// E(W) minus its fourth-moment part, at variance components `t`.
inline Eigen::Vector3d w_offsets(const Eigen::Vector3d& t, const MomentMatrix& m) {
    const double a2 = t(0) * t(0);
    const double b2 = t(1) * t(1);
    const double e2 = t(2) * t(2);
    const double ca = 3 * a2 + 12 * t(0) * t(2);
    const double cb = 3 * b2 + 12 * t(1) * t(2);
    return {(cb + 3 * e2) * m.a(),
            (ca + 3 * e2) * m.b(),
            ca * m.entries(2, 0) + cb * m.entries(2, 1) + 3 * e2 * m.entries(2, 2) +
                12 * t(0) * t(1) * to_double(m.det_factor)};
}

/// Kurtosis is declared undefined when the variance estimate is at or below
/// var_floor (the caller passes 1e-12 times the sample variance of the data).
inline ThetaEstimate solve_kurtoses(ThetaEstimate est, const WStatistics& w, const MomentMatrix& m, double var_floor,
                                    bool strict = false) {
    if (m.singular()) {
        throw SingularSystem(m.singularity_reason());
    }
    const Eigen::Vector3d mu4 = m.solve(w.vec() - w_offsets(est.raw(), m));
    est.mu4_a = mu4(0);
    est.mu4_b = mu4(1);
    est.mu4_e = mu4(2);
    const Eigen::Vector3d t = est.raw();
    static constexpr const char* kNames[3] = {"kappa_a", "kappa_b", "kappa_e"};
    double* out[3] = {&est.kappa.kappa_a, &est.kappa.kappa_b, &est.kappa.kappa_e};
    for (int k = 0; k < 3; ++k) {
        if (!(t(k) > var_floor)) {
            if (strict) {
                throw UndefinedKurtosis(std::string(kNames[k]) + " undefined: variance estimate is not positive");
            }
            est.kappa_defined[k] = false;
            est.kappa_raw[k] = NAN;
            *out[k] = 0.0;
            continue;
        }
        const double kap = mu4(k) / (t(k) * t(k)) - 3.0;
        est.kappa_defined[k] = true;
        est.kappa_raw[k] = kap;
        est.kappa_floored[k] = kap < -2.0;
        *out[k] = std::max(kap, -2.0);
    }
    est.kurtoses_solved = true;
    return est;
}

template <class Key>
double variance_floor(const FirstPassSummary<Key>& fp) {
    return 1e-12 * fp.global.sample_variance();
}

}  // namespace crossmom

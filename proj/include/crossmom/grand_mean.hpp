#pragma once

#include "crossmom/errors.hpp"
#include "crossmom/model.hpp"
#include "crossmom/streaming_pass.hpp"

namespace crossmom {

struct GrandMean {
    double mu_hat = 0;
    /// Var(Ybar..) at the given components.
    double var_bound = 0;
    /// eps_R sigma2_a + eps_C sigma2_b + sigma2_e / N; equals var_bound for
    /// balanced data.
    double eps_bound = 0;
};

/// Variance of the plain average of all observations under the model.
inline double grand_mean_variance_bound(const PatternSums& ps, const VarianceComponents& theta) {
    const double n = ps.nd();
    return theta.sigma2_a * ps.row_sq / (n * n) + theta.sigma2_b * ps.col_sq / (n * n) + theta.sigma2_e / n;
}

template <class Key>
GrandMean grand_mean(const FirstPassSummary<Key>& fp, const VarianceComponents& theta) {
    if (fp.n() == 0) {
        throw EmptyData("grand mean of an empty data set");
    }
    const PatternSums ps = pattern_sums(fp);
    const double n = ps.nd();
    return {fp.global.mean, grand_mean_variance_bound(ps, theta),
            theta.sigma2_a * static_cast<double>(ps.max_row) / n + theta.sigma2_b * static_cast<double>(ps.max_col) / n +
                theta.sigma2_e / n};
}

}  // namespace crossmom

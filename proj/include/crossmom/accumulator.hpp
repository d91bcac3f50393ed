#pragma once

#include <cmath>
#include <cstdint>

#include "crossmom/errors.hpp"

namespace crossmom {

/// Streaming central moments of one group of values (a row, a column, or the
/// whole data set): count, mean, and the 2nd..4th central sums.
///
/// Updates follow the Welford/Terriberry recurrences; merges follow Chan et
/// al. and Pebay, so shards of a stream can be combined in any order.
struct GroupAccumulator {
    std::uint64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;  // sum (y - mean)^2
    double m3 = 0.0;  // sum (y - mean)^3
    double m4 = 0.0;  // sum (y - mean)^4

    void update(double y) {
        if (!std::isfinite(y)) {
            throw NonFiniteValue("non-finite value in accumulator update");
        }
        const double n1 = static_cast<double>(n);
        ++n;
        const double nn = static_cast<double>(n);
        const double delta = y - mean;
        const double delta_n = delta / nn;
        const double delta_n2 = delta_n * delta_n;
        const double term1 = delta * delta_n * n1;
        mean += delta_n;
        m4 += term1 * delta_n2 * (nn * nn - 3.0 * nn + 3.0) + 6.0 * delta_n2 * m2 - 4.0 * delta_n * m3;
        m3 += term1 * delta_n * (nn - 2.0) - 3.0 * delta_n * m2;
        m2 += term1;
    }

    /// Sample variance m2 / (n - 1); zero for fewer than two values.
    double sample_variance() const noexcept {
        return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
    }

    double total() const noexcept { return mean * static_cast<double>(n); }
};

inline GroupAccumulator merge(const GroupAccumulator& a, const GroupAccumulator& b) noexcept {
    if (a.n == 0) {
        return b;
    }
    if (b.n == 0) {
        return a;
    }
    const double na = static_cast<double>(a.n);
    const double nb = static_cast<double>(b.n);
    const double n = na + nb;
    const double delta = b.mean - a.mean;
    const double delta2 = delta * delta;
    const double delta3 = delta2 * delta;
    const double delta4 = delta2 * delta2;

    GroupAccumulator out;
    out.n = a.n + b.n;
    // Weighted mean is better conditioned than a.mean + delta * nb / n when
    // the shards have similar size.
    out.mean = (na * a.mean + nb * b.mean) / n;
    out.m2 = a.m2 + b.m2 + delta2 * na * nb / n;
    out.m3 = a.m3 + b.m3 + delta3 * na * nb * (na - nb) / (n * n) +
             3.0 * delta * (na * b.m2 - nb * a.m2) / n;
    out.m4 = a.m4 + b.m4 + delta4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n) +
             6.0 * delta2 * (na * na * b.m2 + nb * nb * a.m2) / (n * n) +
             4.0 * delta * (na * b.m3 - nb * a.m3) / n;
    return out;
}

inline GroupAccumulator& operator+=(GroupAccumulator& a, const GroupAccumulator& b) noexcept {
    a = merge(a, b);
    return a;
}

}  // namespace crossmom

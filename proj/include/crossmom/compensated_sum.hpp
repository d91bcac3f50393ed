#pragma once

#include <cmath>

#include "crossmom/errors.hpp"

namespace crossmom {

/// Largest magnitude any aggregate may reach before we refuse to continue.
inline constexpr double kOverflowLimit = 1e300;

/// Neumaier-compensated running sum.
///
/// Carries the low-order bits lost by each addition in a separate term, so the
/// result is accurate to about one rounding of the final value regardless of
/// the number of terms. Two sums merge by adding both their parts.
class CompensatedSum {
public:
    CompensatedSum() = default;
    explicit CompensatedSum(double v) : sum_(v) {}

    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::fabs(sum_) >= std::fabs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }

    CompensatedSum& operator+=(double x) noexcept {
        add(x);
        return *this;
    }

    CompensatedSum& operator+=(const CompensatedSum& other) noexcept {
        add(other.sum_);
        add(other.comp_);
        return *this;
    }

    double value() const noexcept { return sum_ + comp_; }

    /// Value, or throws when the aggregate left the representable range.
    double checked_value(const char* what) const {
        const double v = value();
        if (!std::isfinite(v) || std::fabs(v) > kOverflowLimit) {
            throw NonFiniteValue(std::string("aggregate overflow in ") + what);
        }
        return v;
    }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace crossmom

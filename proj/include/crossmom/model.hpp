#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crossmom/errors.hpp"

namespace crossmom {

/// True (simulation) variance components of the two-factor crossed model
/// Y_ij = mu + a_i + b_j + e_ij. Estimates live in ThetaEstimate.
struct VarianceComponents {
    double sigma2_a = 0.0;
    double sigma2_b = 0.0;
    double sigma2_e = 0.0;

    void validate() const {
        for (double v : {sigma2_a, sigma2_b, sigma2_e}) {
            if (!std::isfinite(v) || v < 0.0) {
                throw InvalidArgument("variance components must be finite and nonnegative");
            }
        }
    }

    friend bool operator==(const VarianceComponents&, const VarianceComponents&) = default;
};

struct Kurtoses {
    double kappa_a = 0.0;
    double kappa_b = 0.0;
    double kappa_e = 0.0;

    void validate() const {
        for (double k : {kappa_a, kappa_b, kappa_e}) {
            if (!(k >= -2.0)) {
                throw InvalidArgument("kurtosis must be >= -2");
            }
        }
    }
};

enum class EffectLaw { normal, uniform, centered_exponential };

inline double law_kurtosis(EffectLaw law) noexcept {
    switch (law) {
        case EffectLaw::normal:
            return 0.0;
        case EffectLaw::uniform:
            return -1.2;
        case EffectLaw::centered_exponential:
            return 6.0;
    }
    return 0.0;
}

inline std::string_view to_string(EffectLaw law) noexcept {
    switch (law) {
        case EffectLaw::normal:
            return "normal";
        case EffectLaw::uniform:
            return "uniform";
        case EffectLaw::centered_exponential:
            return "exponential";
    }
    return "normal";
}

inline EffectLaw parse_effect_law(std::string_view s) {
    if (s == "normal") return EffectLaw::normal;
    if (s == "uniform") return EffectLaw::uniform;
    if (s == "exponential" || s == "centered-exponential") return EffectLaw::centered_exponential;
    throw InvalidArgument("unknown effect law '" + std::string(s) + "'");
}

struct ModelParams {
    double mu = 0.0;
    VarianceComponents theta;
    EffectLaw law_a = EffectLaw::normal;
    EffectLaw law_b = EffectLaw::normal;
    EffectLaw law_e = EffectLaw::normal;

    Kurtoses kurtoses() const noexcept {
        return {law_kurtosis(law_a), law_kurtosis(law_b), law_kurtosis(law_e)};
    }
};

/// One (row key, column key, value) record. Presence of a triple means the
/// cell is observed.
template <class Key>
struct BasicTriple {
    Key row;
    Key col;
    double value = 0.0;
};

using Triple = BasicTriple<std::string>;
using IndexTriple = BasicTriple<std::uint64_t>;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent generator for stream `tag`, element `index` under `seed`.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    std::uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ (tag * 0xd1b54a32d192ed03ULL));
    s = splitmix64(s ^ index);
    return std::mt19937_64(s);
}

}  // namespace detail

/// Zero-mean draw with variance `sigma2` from `law`.
template <class Rng>
double draw_effect(EffectLaw law, double sigma2, Rng& rng) {
    if (sigma2 == 0.0) {
        return 0.0;
    }
    const double sd = std::sqrt(sigma2);
    switch (law) {
        case EffectLaw::normal: {
            std::normal_distribution<double> d(0.0, 1.0);
            return sd * d(rng);
        }
        case EffectLaw::uniform: {
            std::uniform_real_distribution<double> d(-1.0, 1.0);
            return sd * std::sqrt(3.0) * d(rng);
        }
        case EffectLaw::centered_exponential: {
            std::exponential_distribution<double> d(1.0);
            return sd * (d(rng) - 1.0);
        }
    }
    return 0.0;
}

struct SimulationShape {
    std::uint64_t rows = 1;
    std::uint64_t cols = 1;
    double observe_prob = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (rows == 0 || cols == 0) {
            throw InvalidArgument("simulation needs at least one row and one column");
        }
        if (!(observe_prob > 0.0 && observe_prob <= 1.0)) {
            throw InvalidArgument("observe probability must lie in (0, 1]");
        }
    }
};

/// Effects drawn once per row or column. Every row and column has its own
/// generator, so any block of rows can be produced independently.
inline double row_effect(const ModelParams& p, std::uint64_t seed, std::uint64_t i) {
    auto rng = detail::substream(seed, 1, i);
    return draw_effect(p.law_a, p.theta.sigma2_a, rng);
}

inline double col_effect(const ModelParams& p, std::uint64_t seed, std::uint64_t j) {
    auto rng = detail::substream(seed, 2, j);
    return draw_effect(p.law_b, p.theta.sigma2_b, rng);
}

/// Streams Y_ij = mu + a_i + b_j + e_ij for rows [row_begin, row_end) of an
/// R x C grid, each cell kept independently with probability observe_prob.
/// `sink` receives IndexTriple values in row-major order.
template <class Sink>
void simulate_rows(const ModelParams& params, const SimulationShape& shape, std::uint64_t row_begin,
                   std::uint64_t row_end, Sink&& sink) {
    params.theta.validate();
    shape.validate();
    if (!std::isfinite(params.mu)) {
        throw InvalidArgument("mu must be finite");
    }
    row_end = std::min(row_end, shape.rows);

    std::vector<double> b(shape.cols);
    for (std::uint64_t j = 0; j < shape.cols; ++j) {
        b[j] = col_effect(params, shape.seed, j);
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::uint64_t i = row_begin; i < row_end; ++i) {
        const double a = row_effect(params, shape.seed, i);
        auto rng = detail::substream(shape.seed, 3, i);
        for (std::uint64_t j = 0; j < shape.cols; ++j) {
            if (shape.observe_prob < 1.0 && unif(rng) >= shape.observe_prob) {
                continue;
            }
            const double e = draw_effect(params.law_e, params.theta.sigma2_e, rng);
            sink(IndexTriple{i, j, params.mu + a + b[j] + e});
        }
    }
}

template <class Sink>
void simulate(const ModelParams& params, const SimulationShape& shape, Sink&& sink) {
    simulate_rows(params, shape, 0, shape.rows, std::forward<Sink>(sink));
}

inline std::vector<IndexTriple> simulate(const ModelParams& params, const SimulationShape& shape) {
    std::vector<IndexTriple> out;
    simulate(params, shape, [&](const IndexTriple& t) { out.push_back(t); });
    return out;
}

}  // namespace crossmom

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "crossmom/accumulator.hpp"
#include "crossmom/compensated_sum.hpp"
#include "crossmom/errors.hpp"
#include "crossmom/key_index.hpp"
#include "crossmom/model.hpp"

namespace crossmom {

using u128 = unsigned __int128;
using i128 = __int128;

inline double to_double(u128 v) noexcept { return static_cast<double>(v); }
inline double to_double(i128 v) noexcept { return static_cast<double>(v); }

enum class DuplicatePolicy {
    /// Exact duplicate detection; keeps one 64-bit id per observed cell.
    reject,
    /// Trust the input to hold at most one record per cell. Memory stays O(R+C).
    unchecked,
};

/// Everything the first pass learns: per-row, per-column and global moment
/// accumulators, keyed through dense indices.
template <class Key>
struct FirstPassSummary {
    GroupAccumulator global;
    KeyIndex<Key> row_keys;
    KeyIndex<Key> col_keys;
    std::vector<GroupAccumulator> rows;
    std::vector<GroupAccumulator> cols;

    std::uint64_t n() const noexcept { return global.n; }
    std::uint64_t r() const noexcept { return rows.size(); }
    std::uint64_t c() const noexcept { return cols.size(); }

    std::size_t memory_bytes() const noexcept {
        return row_keys.memory_bytes() + col_keys.memory_bytes() +
               (rows.capacity() + cols.capacity()) * sizeof(GroupAccumulator);
    }
};

/// Merges shard summary `b` into `a`. Groups are matched by key.
template <class Key>
void merge_into(FirstPassSummary<Key>& a, const FirstPassSummary<Key>& b) {
    a.global += b.global;
    for (std::size_t k = 0; k < b.rows.size(); ++k) {
        const auto idx = a.row_keys.intern(b.row_keys.key(static_cast<std::uint32_t>(k)));
        if (idx >= a.rows.size()) a.rows.resize(idx + 1);
        a.rows[idx] += b.rows[k];
    }
    for (std::size_t k = 0; k < b.cols.size(); ++k) {
        const auto idx = a.col_keys.intern(b.col_keys.key(static_cast<std::uint32_t>(k)));
        if (idx >= a.cols.size()) a.cols.resize(idx + 1);
        a.cols[idx] += b.cols[k];
    }
}

template <class Key>
class FirstPassBuilder {
public:
    explicit FirstPassBuilder(DuplicatePolicy policy = DuplicatePolicy::reject) : policy_(policy) {}

    template <class K>
    void add(const K& row, const K& col, double y) {
        if (!std::isfinite(y)) {
            throw NonFiniteValue("non-finite value at row '" + key_to_string(row) + "', column '" +
                                 key_to_string(col) + "'");
        }
        const auto ri = s_.row_keys.intern(row);
        const auto ci = s_.col_keys.intern(col);
        if (ri == s_.rows.size()) s_.rows.emplace_back();
        if (ci == s_.cols.size()) s_.cols.emplace_back();
        if (policy_ == DuplicatePolicy::reject) {
            record_cell(ri, ci);
        }
        s_.rows[ri].update(y);
        s_.cols[ci].update(y);
        s_.global.update(y);
    }

    void add(const BasicTriple<Key>& t) { add(t.row, t.col, t.value); }

    /// Folds another shard in. Cells seen by both shards are duplicates.
    void merge(FirstPassBuilder&& other) {
        std::vector<std::uint32_t> row_map(other.s_.rows.size());
        std::vector<std::uint32_t> col_map(other.s_.cols.size());
        for (std::size_t k = 0; k < row_map.size(); ++k) {
            row_map[k] = s_.row_keys.intern(other.s_.row_keys.key(static_cast<std::uint32_t>(k)));
        }
        for (std::size_t k = 0; k < col_map.size(); ++k) {
            col_map[k] = s_.col_keys.intern(other.s_.col_keys.key(static_cast<std::uint32_t>(k)));
        }
        if (policy_ == DuplicatePolicy::reject) {
            for (std::uint64_t cell : other.cells_) {
                record_cell(row_map[cell >> 32], col_map[cell & 0xffffffffULL]);
            }
        }
        s_.rows.resize(s_.row_keys.size());
        s_.cols.resize(s_.col_keys.size());
        for (std::size_t k = 0; k < row_map.size(); ++k) s_.rows[row_map[k]] += other.s_.rows[k];
        for (std::size_t k = 0; k < col_map.size(); ++k) s_.cols[col_map[k]] += other.s_.cols[k];
        s_.global += other.s_.global;
        other.cells_.clear();
    }

    const FirstPassSummary<Key>& summary() const noexcept { return s_; }

    FirstPassSummary<Key> finish() && {
        if (s_.n() == 0) {
            throw EmptyData("no observations");
        }
        return std::move(s_);
    }

    std::size_t memory_bytes() const noexcept {
        return s_.memory_bytes() + cells_.bucket_count() * sizeof(void*) +
               cells_.size() * (sizeof(std::uint64_t) + sizeof(void*));
    }

private:
    void record_cell(std::uint32_t ri, std::uint32_t ci) {
        const std::uint64_t cell = (static_cast<std::uint64_t>(ri) << 32) | ci;
        if (!cells_.insert(cell).second) {
            throw DuplicateCell("duplicate cell (row '" + key_to_string(s_.row_keys.key(ri)) + "', column '" +
                                key_to_string(s_.col_keys.key(ci)) + "')");
        }
    }

    FirstPassSummary<Key> s_;
    DuplicatePolicy policy_;
    std::unordered_set<std::uint64_t> cells_;
};

/// Count-only quantities of the observation pattern, all O(R+C) from pass 1.
/// Integer power sums are accumulated exactly and rounded once.
struct PatternSums {
    std::uint64_t n = 0;
    std::uint64_t r = 0;
    std::uint64_t c = 0;
    u128 row_sq_exact = 0;  // sum_i N_i.^2
    u128 col_sq_exact = 0;  // sum_j N_.j^2
    u128 row_cube_exact = 0;
    u128 col_cube_exact = 0;
    u128 row_quart_exact = 0;
    u128 col_quart_exact = 0;
    double row_sq = 0, row_cube = 0, row_quart = 0;
    double col_sq = 0, col_cube = 0, col_quart = 0;
    double row_inv = 0;  // sum_i 1/N_i.
    double col_inv = 0;  // sum_j 1/N_.j
    std::uint64_t max_row = 0;
    std::uint64_t max_col = 0;
    std::uint32_t argmax_row = 0;
    std::uint32_t argmax_col = 0;

    double nd() const noexcept { return static_cast<double>(n); }
    /// N^2 - sum N_i.^2 - sum N_.j^2 + N, exact.
    i128 det_factor_exact() const noexcept {
        const u128 nn = static_cast<u128>(n);
        return static_cast<i128>(nn * nn + nn) - static_cast<i128>(row_sq_exact) - static_cast<i128>(col_sq_exact);
    }
    /// sum_i N_i.(1 - 1/N_i.)^2 = N - 2R + sum 1/N_i.
    double row_nested_term() const noexcept { return nd() - 2.0 * static_cast<double>(r) + row_inv; }
    double col_nested_term() const noexcept { return nd() - 2.0 * static_cast<double>(c) + col_inv; }
    /// sum_i (1 - 1/N_i.)
    double row_one_minus_inv() const noexcept { return static_cast<double>(r) - row_inv; }
    double col_one_minus_inv() const noexcept { return static_cast<double>(c) - col_inv; }
};

namespace detail {

struct PowerSums {
    u128 sq = 0, cube = 0, quart = 0;
    CompensatedSum inv;
    std::uint64_t max = 0;
    std::uint32_t argmax = 0;
};

inline PowerSums power_sums(const std::vector<GroupAccumulator>& groups) {
    PowerSums p;
    for (std::size_t k = 0; k < groups.size(); ++k) {
        const u128 m = groups[k].n;
        p.sq += m * m;
        p.cube += m * m * m;
        p.quart += m * m * m * m;
        p.inv += 1.0 / static_cast<double>(groups[k].n);
        // strict > keeps the first-seen group on ties
        if (groups[k].n > p.max) {
            p.max = groups[k].n;
            p.argmax = static_cast<std::uint32_t>(k);
        }
    }
    return p;
}

}  // namespace detail

template <class Key>
PatternSums pattern_sums(const FirstPassSummary<Key>& fp) {
    PatternSums s;
    s.n = fp.n();
    s.r = fp.r();
    s.c = fp.c();
    const auto rp = detail::power_sums(fp.rows);
    const auto cp = detail::power_sums(fp.cols);
    s.row_sq_exact = rp.sq;
    s.col_sq_exact = cp.sq;
    s.row_cube_exact = rp.cube;
    s.col_cube_exact = cp.cube;
    s.row_quart_exact = rp.quart;
    s.col_quart_exact = cp.quart;
    s.row_sq = to_double(rp.sq);
    s.row_cube = to_double(rp.cube);
    s.row_quart = to_double(rp.quart);
    s.col_sq = to_double(cp.sq);
    s.col_cube = to_double(cp.cube);
    s.col_quart = to_double(cp.quart);
    s.row_inv = rp.inv.value();
    s.col_inv = cp.inv.value();
    s.max_row = rp.max;
    s.max_col = cp.max;
    s.argmax_row = rp.argmax;
    s.argmax_col = cp.argmax;
    return s;
}

/// Second-pass aggregates. Needs the first-pass counts and means, so every
/// entry is indexed by the first pass's dense row/column indices.
struct SecondPassSummary {
    CompensatedSum zn_mm;  // sum Z N_i.^-1 N_.j^-1
    CompensatedSum zn_pm;  // sum Z N_i.   N_.j^-1
    CompensatedSum zn_mp;  // sum Z N_i.^-1 N_.j
    u128 zn_pp = 0;        // sum Z N_i.   N_.j  (exact)
    CompensatedSum zn_m2;  // sum Z N_i.^-1 N_.j^2
    CompensatedSum zn_2m;  // sum Z N_i.^2 N_.j^-1
    std::vector<std::uint64_t> t_row;  // T_i. = sum_j Z_ij N_.j
    std::vector<std::uint64_t> t_col;  // T_.j = sum_i Z_ij N_i.
    std::vector<CompensatedSum> fourth_row;  // sum_j Z_ij (Y_ij - Ybar_i.)^4
    std::vector<CompensatedSum> fourth_col;
    CompensatedSum fourth_global;
    // Centered first and second powers, so the second moments can be recomputed
    // without the merge-order rounding of the first pass.
    std::vector<CompensatedSum> lin_row, lin_col, sq_row, sq_col, cube_row, cube_col;
    CompensatedSum lin_global, sq_global, cube_global;
    std::vector<CompensatedSum> col_inv_row_mass;  // g_j = sum_i Z_ij / N_i.
    std::vector<CompensatedSum> row_inv_col_mass;  // h_i = sum_j Z_ij / N_.j
    std::vector<std::uint64_t> seen_row;
    std::vector<std::uint64_t> seen_col;
    std::vector<CompensatedSum> value_row;  // row totals as re-read by this pass
    std::vector<CompensatedSum> value_col;

    /// ZN^{p,q} for the six supported exponent pairs.
    double zn(int p, int q) const {
        if (p == -1 && q == -1) return zn_mm.value();
        if (p == 1 && q == -1) return zn_pm.value();
        if (p == -1 && q == 1) return zn_mp.value();
        if (p == 1 && q == 1) return to_double(zn_pp);
        if (p == -1 && q == 2) return zn_m2.value();
        if (p == 2 && q == -1) return zn_2m.value();
        throw InvalidArgument("unsupported ZN exponent pair");
    }

    SecondPassSummary& operator+=(const SecondPassSummary& o) {
        zn_mm += o.zn_mm;
        zn_pm += o.zn_pm;
        zn_mp += o.zn_mp;
        zn_pp += o.zn_pp;
        zn_m2 += o.zn_m2;
        zn_2m += o.zn_2m;
        fourth_global += o.fourth_global;
        lin_global += o.lin_global;
        sq_global += o.sq_global;
        cube_global += o.cube_global;
        for (std::size_t i = 0; i < t_row.size(); ++i) {
            t_row[i] += o.t_row[i];
            fourth_row[i] += o.fourth_row[i];
            lin_row[i] += o.lin_row[i];
            sq_row[i] += o.sq_row[i];
            cube_row[i] += o.cube_row[i];
            row_inv_col_mass[i] += o.row_inv_col_mass[i];
            seen_row[i] += o.seen_row[i];
            value_row[i] += o.value_row[i];
        }
        for (std::size_t j = 0; j < t_col.size(); ++j) {
            t_col[j] += o.t_col[j];
            fourth_col[j] += o.fourth_col[j];
            lin_col[j] += o.lin_col[j];
            sq_col[j] += o.sq_col[j];
            cube_col[j] += o.cube_col[j];
            col_inv_row_mass[j] += o.col_inv_row_mass[j];
            seen_col[j] += o.seen_col[j];
            value_col[j] += o.value_col[j];
        }
        return *this;
    }

    /// sum (Y - Ybar)^2 and sum (Y - Ybar)^4 over row i, column j, or
    /// everything, recentred on the mean this pass actually saw.
    double centered_sq_row(std::size_t i, std::uint64_t n) const { return centered_sq(sq_row[i], lin_row[i], n); }
    double centered_sq_col(std::size_t j, std::uint64_t n) const { return centered_sq(sq_col[j], lin_col[j], n); }
    double centered_sq_global(std::uint64_t n) const { return centered_sq(sq_global, lin_global, n); }
    double centered_fourth_row(std::size_t i, std::uint64_t n) const {
        return centered_fourth(fourth_row[i], cube_row[i], sq_row[i], lin_row[i], n);
    }
    double centered_fourth_col(std::size_t j, std::uint64_t n) const {
        return centered_fourth(fourth_col[j], cube_col[j], sq_col[j], lin_col[j], n);
    }
    double centered_fourth_global(std::uint64_t n) const {
        return centered_fourth(fourth_global, cube_global, sq_global, lin_global, n);
    }

private:
    static double centered_sq(const CompensatedSum& sq, const CompensatedSum& lin, std::uint64_t n) {
        const double l = lin.value();
        return std::max(sq.value() - l * l / static_cast<double>(n), 0.0);
    }
    static double centered_fourth(const CompensatedSum& q, const CompensatedSum& c, const CompensatedSum& sq,
                                  const CompensatedSum& lin, std::uint64_t n) {
        const double nn = static_cast<double>(n);
        const double e = lin.value() / nn;
        const double e2 = e * e;
        const double v = q.value() - 4 * e * c.value() + 6 * e2 * sq.value() - 3 * e2 * e2 * nn;
        return std::max(v, 0.0);
    }
};

template <class Key>
class SecondPassBuilder {
public:
    explicit SecondPassBuilder(const FirstPassSummary<Key>& fp) : fp_(&fp) {
        const auto r = fp.rows.size();
        const auto c = fp.cols.size();
        s_.t_row.assign(r, 0);
        s_.t_col.assign(c, 0);
        s_.fourth_row.assign(r, CompensatedSum{});
        s_.fourth_col.assign(c, CompensatedSum{});
        s_.lin_row.assign(r, CompensatedSum{});
        s_.sq_row.assign(r, CompensatedSum{});
        s_.lin_col.assign(c, CompensatedSum{});
        s_.sq_col.assign(c, CompensatedSum{});
        s_.cube_row.assign(r, CompensatedSum{});
        s_.cube_col.assign(c, CompensatedSum{});
        s_.col_inv_row_mass.assign(c, CompensatedSum{});
        s_.row_inv_col_mass.assign(r, CompensatedSum{});
        s_.seen_row.assign(r, 0);
        s_.seen_col.assign(c, 0);
        s_.value_row.assign(r, CompensatedSum{});
        s_.value_col.assign(c, CompensatedSum{});
    }

    template <class K>
    void add(const K& row, const K& col, double y) {
        const auto ri = fp_->row_keys.find(row);
        const auto ci = fp_->col_keys.find(col);
        if (!ri || !ci) {
            throw SummaryMismatch("second pass saw a key unknown to the first pass (row '" + key_to_string(row) +
                                  "', column '" + key_to_string(col) + "')");
        }
        if (!std::isfinite(y)) {
            throw NonFiniteValue("non-finite value in second pass");
        }
        const GroupAccumulator& ra = fp_->rows[*ri];
        const GroupAccumulator& ca = fp_->cols[*ci];
        const double ni = static_cast<double>(ra.n);
        const double nj = static_cast<double>(ca.n);
        const double inv_i = 1.0 / ni;
        const double inv_j = 1.0 / nj;

        s_.zn_mm += inv_i * inv_j;
        s_.zn_pm += ni * inv_j;
        s_.zn_mp += inv_i * nj;
        s_.zn_pp += static_cast<u128>(ra.n) * ca.n;
        s_.zn_m2 += inv_i * nj * nj;
        s_.zn_2m += ni * ni * inv_j;
        s_.t_row[*ri] += ca.n;
        s_.t_col[*ci] += ra.n;
        s_.col_inv_row_mass[*ci] += inv_i;
        s_.row_inv_col_mass[*ri] += inv_j;
        ++s_.seen_row[*ri];
        ++s_.seen_col[*ci];
        s_.value_row[*ri] += y;
        s_.value_col[*ci] += y;

        const double dr = y - ra.mean;
        const double dc = y - ca.mean;
        const double dg = y - fp_->global.mean;
        s_.fourth_row[*ri] += (dr * dr) * (dr * dr);
        s_.fourth_col[*ci] += (dc * dc) * (dc * dc);
        s_.fourth_global += (dg * dg) * (dg * dg);
        s_.lin_row[*ri] += dr;
        s_.lin_col[*ci] += dc;
        s_.lin_global += dg;
        s_.sq_row[*ri] += dr * dr;
        s_.sq_col[*ci] += dc * dc;
        s_.sq_global += dg * dg;
        s_.cube_row[*ri] += dr * dr * dr;
        s_.cube_col[*ci] += dc * dc * dc;
        s_.cube_global += dg * dg * dg;
    }

    void add(const BasicTriple<Key>& t) { add(t.row, t.col, t.value); }

    void merge(const SecondPassBuilder& other) { s_ += other.s_; }

    /// Checks that the second stream reproduced the first-pass counts.
    SecondPassSummary finish() && {
        for (std::size_t i = 0; i < s_.seen_row.size(); ++i) {
            if (s_.seen_row[i] != fp_->rows[i].n) {
                throw SummaryMismatch("second pass count for row '" +
                                      key_to_string(fp_->row_keys.key(static_cast<std::uint32_t>(i))) +
                                      "' differs from first pass");
            }
        }
        for (std::size_t j = 0; j < s_.seen_col.size(); ++j) {
            if (s_.seen_col[j] != fp_->cols[j].n) {
                throw SummaryMismatch("second pass count for column '" +
                                      key_to_string(fp_->col_keys.key(static_cast<std::uint32_t>(j))) +
                                      "' differs from first pass");
            }
        }
        for (const auto* v : {&s_.zn_mm, &s_.zn_pm, &s_.zn_mp, &s_.zn_m2, &s_.zn_2m, &s_.fourth_global}) {
            v->checked_value("second pass");
        }
        return std::move(s_);
    }

private:
    const FirstPassSummary<Key>* fp_;
    SecondPassSummary s_;
};

template <class Range>
using range_key_t = decltype(std::declval<std::ranges::range_value_t<Range>>().row);

template <class Range>
auto first_pass(const Range& triples, DuplicatePolicy policy = DuplicatePolicy::reject) {
    FirstPassBuilder<range_key_t<Range>> b(policy);
    for (const auto& t : triples) {
        b.add(t.row, t.col, t.value);
    }
    return std::move(b).finish();
}

template <class Range, class Key>
SecondPassSummary second_pass(const Range& triples, const FirstPassSummary<Key>& fp) {
    SecondPassBuilder<Key> b(fp);
    for (const auto& t : triples) {
        b.add(t.row, t.col, t.value);
    }
    return std::move(b).finish();
}

/// Checks that the second stream carried the same row and column totals as
/// the first, to relative tolerance `rel_tol` of the largest absolute total.
template <class Key>
void verify_totals(const FirstPassSummary<Key>& fp, const SecondPassSummary& sp, double rel_tol = 1e-9) {
    auto check = [&](const std::vector<GroupAccumulator>& groups, const std::vector<CompensatedSum>& sums,
                     const KeyIndex<Key>& keys, const char* kind) {
        double scale = 0;
        for (const auto& g : groups) scale = std::max(scale, std::fabs(g.total()) + std::sqrt(g.m2 * g.n));
        for (std::size_t k = 0; k < groups.size(); ++k) {
            if (std::fabs(sums[k].value() - groups[k].total()) > rel_tol * std::max(scale, 1.0)) {
                throw SummaryMismatch(std::string("second pass total for ") + kind + " '" +
                                      key_to_string(keys.key(static_cast<std::uint32_t>(k))) +
                                      "' differs from first pass");
            }
        }
    };
    check(fp.rows, sp.value_row, fp.row_keys, "row");
    check(fp.cols, sp.value_col, fp.col_keys, "column");
}

/// Balance diagnostics: the eight ratios whose maximum is delta, each reported.
struct ObservationCounts {
    double eps_r = 0;
    double eps_c = 0;
    double r_over_n = 0;
    double c_over_n = 0;
    double n_over_sum_ni2 = 0;
    double n_over_sum_nj2 = 0;
    double zn_mp_over_sum_ni2 = 0;  // ZN^{-1,1} / sum N_i.^2
    double zn_pm_over_sum_nj2 = 0;  // ZN^{1,-1} / sum N_.j^2
    double sum_ni2 = 0;
    double sum_nj2 = 0;
    double sum_ni_inv = 0;
    double sum_nj_inv = 0;
    double delta = 0;
    std::uint32_t argmax_row = 0;
    std::uint32_t argmax_col = 0;
};

inline ObservationCounts compute_delta(const PatternSums& ps, double zn_mp, double zn_pm) {
    ObservationCounts oc;
    const double n = ps.nd();
    oc.eps_r = static_cast<double>(ps.max_row) / n;
    oc.eps_c = static_cast<double>(ps.max_col) / n;
    oc.r_over_n = static_cast<double>(ps.r) / n;
    oc.c_over_n = static_cast<double>(ps.c) / n;
    oc.n_over_sum_ni2 = n / ps.row_sq;
    oc.n_over_sum_nj2 = n / ps.col_sq;
    oc.zn_mp_over_sum_ni2 = zn_mp / ps.row_sq;
    oc.zn_pm_over_sum_nj2 = zn_pm / ps.col_sq;
    oc.sum_ni2 = ps.row_sq;
    oc.sum_nj2 = ps.col_sq;
    oc.sum_ni_inv = ps.row_inv;
    oc.sum_nj_inv = ps.col_inv;
    oc.argmax_row = ps.argmax_row;
    oc.argmax_col = ps.argmax_col;
    oc.delta = std::max({oc.eps_r, oc.eps_c, oc.r_over_n, oc.c_over_n, oc.n_over_sum_ni2, oc.n_over_sum_nj2,
                         oc.zn_mp_over_sum_ni2, oc.zn_pm_over_sum_nj2});
    return oc;
}

inline ObservationCounts compute_delta(const PatternSums& ps, const SecondPassSummary& sp) {
    return compute_delta(ps, sp.zn(-1, 1), sp.zn(1, -1));
}

template <class Key>
ObservationCounts compute_delta(const FirstPassSummary<Key>& fp, const SecondPassSummary& sp) {
    return compute_delta(pattern_sums(fp), sp);
}

/// Collapses repeated cells to their average, keeping first-appearance order.
/// Opt-in cleanup for dirty logs; needs memory proportional to the input.
template <class Key>
std::vector<BasicTriple<Key>> dedupe_average(const std::vector<BasicTriple<Key>>& triples) {
    struct Cell {
        std::size_t slot;
        std::uint64_t count;
        CompensatedSum sum;
    };
    KeyIndex<Key> rows;
    KeyIndex<Key> cols;
    std::unordered_map<std::uint64_t, Cell> cells;
    std::vector<BasicTriple<Key>> out;
    std::vector<std::uint64_t> order;
    for (const auto& t : triples) {
        if (!std::isfinite(t.value)) {
            throw NonFiniteValue("non-finite value while deduplicating");
        }
        const std::uint64_t id = (static_cast<std::uint64_t>(rows.intern(t.row)) << 32) | cols.intern(t.col);
        auto [it, inserted] = cells.try_emplace(id, Cell{out.size(), 0, {}});
        if (inserted) {
            out.push_back(t);
        }
        ++it->second.count;
        it->second.sum += t.value;
    }
    for (auto& [id, cell] : cells) {
        out[cell.slot].value = cell.sum.value() / static_cast<double>(cell.count);
    }
    return out;
}

}  // namespace crossmom

#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "crossmom/accumulator.hpp"
#include "crossmom/csv.hpp"
#include "crossmom/errors.hpp"
#include "crossmom/streaming_pass.hpp"

namespace crossmom {

// First-pass summary as text, so the two passes can run as separate jobs:
//
//   # crossmom-summary v1
//   counts,N,R,C
//   global,,n,mean,m2,m3,m4
//   row,<key>,n,mean,m2,m3,m4      (R lines, first-seen order)
//   col,<key>,n,mean,m2,m3,m4      (C lines)
//
// Doubles are written shortest round-trip, so reading back is exact.

inline constexpr const char* kSidecarMagic = "# crossmom-summary v1";

namespace detail {

inline void write_group(std::ostream& out, const char* kind, const std::string& key, const GroupAccumulator& g) {
    out << kind << ',' << quote_csv(key) << ',' << g.n << ',' << format_double(g.mean) << ','
        << format_double(g.m2) << ',' << format_double(g.m3) << ',' << format_double(g.m4) << '\n';
}

inline GroupAccumulator parse_group(const std::vector<std::string>& f, std::uint64_t line) {
    GroupAccumulator g;
    double vals[4];
    for (int k = 0; k < 4; ++k) {
        if (!parse_double(f[3 + k], vals[k])) {
            throw ParseError(line, "bad number '" + f[3 + k] + "'");
        }
    }
    std::uint64_t n = 0;
    auto res = std::from_chars(f[2].data(), f[2].data() + f[2].size(), n);
    if (res.ec != std::errc() || res.ptr != f[2].data() + f[2].size() || n == 0) {
        throw ParseError(line, "bad count '" + f[2] + "'");
    }
    g.n = n;
    g.mean = vals[0];
    g.m2 = vals[1];
    g.m3 = vals[2];
    g.m4 = vals[3];
    return g;
}

}  // namespace detail

inline void write_sidecar(std::ostream& out, const FirstPassSummary<std::string>& fp) {
    out << kSidecarMagic << '\n';
    out << "counts," << fp.n() << ',' << fp.r() << ',' << fp.c() << '\n';
    detail::write_group(out, "global", "", fp.global);
    for (std::size_t i = 0; i < fp.rows.size(); ++i) {
        detail::write_group(out, "row", fp.row_keys.key(static_cast<std::uint32_t>(i)), fp.rows[i]);
    }
    for (std::size_t j = 0; j < fp.cols.size(); ++j) {
        detail::write_group(out, "col", fp.col_keys.key(static_cast<std::uint32_t>(j)), fp.cols[j]);
    }
}

inline FirstPassSummary<std::string> read_sidecar(std::istream& in) {
    std::string line;
    std::uint64_t line_no = 0;
    auto next = [&]() {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };
    if (!next() || line != kSidecarMagic) {
        throw ParseError(1, "not a crossmom summary file");
    }
    std::vector<std::string> f;
    if (!next() || !detail::split_csv(line, f) || f.size() != 4 || f[0] != "counts") {
        throw ParseError(line_no, "expected counts line");
    }
    std::uint64_t declared[3];
    for (int k = 0; k < 3; ++k) {
        auto res = std::from_chars(f[1 + k].data(), f[1 + k].data() + f[1 + k].size(), declared[k]);
        if (res.ec != std::errc()) throw ParseError(line_no, "bad count");
    }
    FirstPassSummary<std::string> fp;
    bool have_global = false;
    while (next()) {
        if (line.empty()) continue;
        if (!detail::split_csv(line, f) || f.size() != 7) {
            throw ParseError(line_no, "expected 7 fields");
        }
        const GroupAccumulator g = detail::parse_group(f, line_no);
        if (f[0] == "global") {
            fp.global = g;
            have_global = true;
        } else if (f[0] == "row" || f[0] == "col") {
            auto& keys = f[0] == "row" ? fp.row_keys : fp.col_keys;
            auto& groups = f[0] == "row" ? fp.rows : fp.cols;
            if (keys.find(f[1])) throw ParseError(line_no, "repeated " + f[0] + " key '" + f[1] + "'");
            keys.intern(f[1]);
            groups.push_back(g);
        } else {
            throw ParseError(line_no, "unknown record kind '" + f[0] + "'");
        }
    }
    if (!have_global || fp.n() != declared[0] || fp.r() != declared[1] || fp.c() != declared[2]) {
        throw SummaryMismatch("summary file counts do not match its records");
    }
    std::uint64_t row_total = 0, col_total = 0;
    for (const auto& g : fp.rows) row_total += g.n;
    for (const auto& g : fp.cols) col_total += g.n;
    if (row_total != fp.n() || col_total != fp.n()) {
        throw SummaryMismatch("row or column counts in summary file do not add up to N");
    }
    return fp;
}

}  // namespace crossmom

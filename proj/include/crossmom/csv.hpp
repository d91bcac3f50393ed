#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <system_error>
#include <vector>

#include "crossmom/errors.hpp"
#include "crossmom/model.hpp"

namespace crossmom {

/// Shortest decimal that reads back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

namespace detail {

/// Splits one CSV record. Fields may be double-quoted with "" escapes.
inline bool split_csv(std::string_view line, std::vector<std::string>& fields) {
    fields.clear();
    std::string cur;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char ch = line[k];
        if (quoted) {
            if (ch == '"') {
                if (k + 1 < line.size() && line[k + 1] == '"') {
                    cur += '"';
                    ++k;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"' && cur.empty() && !was_quoted) {
            quoted = true;
            was_quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
            was_quoted = false;
        } else {
            if (was_quoted) return false;
            cur += ch;
        }
    }
    if (quoted) return false;
    fields.push_back(std::move(cur));
    return true;
}

inline bool needs_quotes(std::string_view s) {
    return s.find_first_of(",\"\r\n") != std::string_view::npos || (!s.empty() && (s.front() == ' ' || s.back() == ' '));
}

}  // namespace detail

inline std::string quote_csv(std::string_view s) {
    if (!detail::needs_quotes(s)) return std::string(s);
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

/// Parses one data line into `t`. Returns false for a blank line.
inline bool parse_record(std::string_view line, std::uint64_t line_no, std::vector<std::string>& fields, Triple& t) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) return false;
    if (!detail::split_csv(line, fields)) {
        throw ParseError(line_no, "malformed quoted field");
    }
    if (fields.size() != 3) {
        throw ParseError(line_no, "expected 3 fields, got " + std::to_string(fields.size()));
    }
    double v;
    if (!parse_double(fields[2], v)) {
        throw ParseError(line_no, "value '" + fields[2] + "' is not a number");
    }
    if (!std::isfinite(v)) {
        throw ParseError(line_no, "value '" + fields[2] + "' is not finite");
    }
    t.row = std::move(fields[0]);
    t.col = std::move(fields[1]);
    t.value = v;
    return true;
}

inline void check_header(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> f;
    if (!detail::split_csv(line, f) || f.size() != 3 || f[0] != "row" || f[1] != "col" || f[2] != "value") {
        throw ParseError(1, "header must be 'row,col,value'");
    }
}

/// Streams `row,col,value` records. The header line is required.
class TripleReader {
public:
    explicit TripleReader(std::istream& in) : in_(in) {
        std::string line;
        if (!read_line(line)) {
            throw ParseError(1, "missing header");
        }
        check_header(line);
    }

    /// False at end of input. Blank lines are skipped.
    bool next(Triple& t) {
        std::string line;
        while (read_line(line)) {
            if (parse_record(line, line_no_, fields_, t)) return true;
        }
        return false;
    }

    std::uint64_t line() const noexcept { return line_no_; }

private:
    bool read_line(std::string& line) {
        if (!std::getline(in_, line)) return false;
        ++line_no_;
        return true;
    }

    std::istream& in_;
    std::vector<std::string> fields_;
    std::uint64_t line_no_ = 0;
};

template <class Fn>
void for_each_triple(std::istream& in, Fn&& fn) {
    TripleReader reader(in);
    Triple t;
    while (reader.next(t)) {
        fn(t);
    }
}

inline std::vector<Triple> read_triples(std::istream& in) {
    std::vector<Triple> out;
    for_each_triple(in, [&](const Triple& t) { out.push_back(t); });
    return out;
}

inline void write_header(std::ostream& out) { out << "row,col,value\n"; }

template <class Key>
void write_triple(std::ostream& out, const BasicTriple<Key>& t) {
    if constexpr (std::is_convertible_v<const Key&, std::string_view>) {
        out << quote_csv(t.row) << ',' << quote_csv(t.col) << ',' << format_double(t.value) << '\n';
    } else {
        out << t.row << ',' << t.col << ',' << format_double(t.value) << '\n';
    }
}

}  // namespace crossmom

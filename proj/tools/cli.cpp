#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "crossmom/crossmom.hpp"

namespace crossmom::cli {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;
using Fp = FirstPassSummary<std::string>;

constexpr int kFormatVersion = 1;

// Exit codes.
constexpr int kOk = 0;
constexpr int kIoOrParse = 1;
constexpr int kIdentifiability = 2;
constexpr int kBadFlags = 3;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

json components(double a, double b, double e) { return {{"sigma2_a", a}, {"sigma2_b", b}, {"sigma2_e", e}}; }

json components(const VarianceComponents& v) { return components(v.sigma2_a, v.sigma2_b, v.sigma2_e); }

json triple_json(double a, double b, double e) { return {{"a", a}, {"b", b}, {"e", e}}; }

json matrix_json(const Eigen::Matrix3d& m) {
    json out = json::array();
    for (int i = 0; i < 3; ++i) out.push_back({m(i, 0), m(i, 1), m(i, 2)});
    return out;
}

std::vector<std::string> split_fields(const std::string& s) {
    std::vector<std::string> f;
    if (!detail::split_csv(s, f)) {
        throw InvalidArgument("malformed list '" + s + "'");
    }
    return f;
}

VarianceComponents parse_theta(const std::string& s) {
    const auto f = split_fields(s);
    double v[3];
    if (f.size() != 3 || !parse_double(f[0], v[0]) || !parse_double(f[1], v[1]) || !parse_double(f[2], v[2])) {
        throw InvalidArgument("--theta needs three numbers 'a,b,e'");
    }
    VarianceComponents th{v[0], v[1], v[2]};
    th.validate();
    return th;
}

class OutputTarget {
public:
    OutputTarget(const std::string& path, std::ostream& fallback) : out_(&fallback) {
        if (!path.empty() && path != "-") {
            file_.open(path, std::ios::binary);
            if (!file_) {
                throw IoError("cannot write '" + path + "'");
            }
            out_ = &file_;
        }
    }

    std::ostream& stream() { return *out_; }

    void finish() {
        out_->flush();
        if (!*out_) {
            throw IoError("write failed");
        }
    }

private:
    std::ofstream file_;
    std::ostream* out_;
};

void emit(const json& report, const std::string& path, std::ostream& out) {
    OutputTarget t(path, out);
    t.stream() << report.dump(2) << '\n';
    t.finish();
}

// ---- sharded input ----

struct ShardOutcome {
    std::uint64_t lines = 0;
    std::exception_ptr error;
    std::uint64_t error_line = 0;  // local, when error is a ParseError
    bool parse_error = false;
};

/// Calls fn(triple) for each record of one byte range.
template <class Fn>
void scan_range(const std::string& path, const ByteRange& range, Fn&& fn, ShardOutcome& outcome) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read '" + path + "'");
    }
    in.seekg(static_cast<std::streamoff>(range.begin));
    std::uint64_t pos = range.begin;
    std::string line;
    std::vector<std::string> fields;
    Triple t;
    while (pos < range.end && std::getline(in, line)) {
        pos += line.size() + 1;
        ++outcome.lines;
        try {
            if (parse_record(line, outcome.lines, fields, t)) fn(t);
        } catch (const ParseError& e) {
            outcome.parse_error = true;
            outcome.error_line = e.line();
            throw;
        }
    }
    if (in.bad()) {
        throw IoError("read error on '" + path + "'");
    }
}

/// Runs one builder per shard on a small thread pool and returns them in
/// shard order. Parse errors are rethrown with file-global line numbers.
template <class Builder, class Make, class Add>
std::vector<Builder> run_shards(const std::string& path, const std::vector<ByteRange>& ranges, Make make, Add add) {
    std::vector<std::optional<Builder>> builders(ranges.size());
    std::vector<ShardOutcome> outcomes(ranges.size());
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (std::size_t s = next++; s < ranges.size(); s = next++) {
            try {
                builders[s].emplace(make());
                Builder& b = *builders[s];
                scan_range(path, ranges[s], [&](const Triple& t) { add(b, t, s); }, outcomes[s]);
            } catch (...) {
                outcomes[s].error = std::current_exception();
            }
        }
    };
    const unsigned threads = worker_count(static_cast<unsigned>(ranges.size()));
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < threads; ++k) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    std::uint64_t line_offset = 1;  // header
    for (const auto& o : outcomes) {
        if (o.error) {
            if (o.parse_error) {
                try {
                    std::rethrow_exception(o.error);
                } catch (const ParseError& e) {
                    const std::string msg = e.what();
                    const auto colon = msg.find(": ");
                    throw ParseError(line_offset + o.error_line,
                                     colon == std::string::npos ? msg : msg.substr(colon + 2));
                }
            }
            std::rethrow_exception(o.error);
        }
        line_offset += o.lines;
    }
    std::vector<Builder> out;
    out.reserve(builders.size());
    for (auto& b : builders) out.push_back(std::move(*b));
    return out;
}

struct InputOptions {
    std::string path;
    unsigned shards = 1;
    bool dedupe_average = false;
    bool assume_unique = false;
    std::string summaries_in;
    std::string summaries_out;
};

/// Source of triples for both passes: the file (sharded) or an in-memory
/// copy when duplicates are averaged away first.
class Input {
public:
    explicit Input(const InputOptions& opt) : opt_(opt) {
        if (opt.shards == 0) {
            throw InvalidArgument("--shards must be >= 1");
        }
        if (opt.dedupe_average && opt.assume_unique) {
            throw InvalidArgument("--dedupe-average and --assume-unique are exclusive");
        }
        if (opt.dedupe_average) {
            std::ifstream in(opt.path, std::ios::binary);
            if (!in) {
                throw IoError("cannot read '" + opt.path + "'");
            }
            memory_ = dedupe_average(read_triples(in));
        } else {
            ranges_ = plan_shards(opt.path, opt.shards);
        }
    }

    Fp first_pass() const {
        if (memory_) {
            return crossmom::first_pass(*memory_);
        }
        const auto policy = opt_.assume_unique ? DuplicatePolicy::unchecked : DuplicatePolicy::reject;
        auto parts = run_shards<FirstPassBuilder<std::string>>(
            opt_.path, ranges_, [policy] { return FirstPassBuilder<std::string>(policy); },
            [](FirstPassBuilder<std::string>& b, const Triple& t, std::size_t) { b.add(t.row, t.col, t.value); });
        for (std::size_t s = 1; s < parts.size(); ++s) parts[0].merge(std::move(parts[s]));
        return std::move(parts[0]).finish();
    }

    /// Second pass; `capture` (cell key -> value) is filled for requested cells.
    SecondPassSummary second_pass(const Fp& fp, std::unordered_map<std::uint64_t, double>* capture = nullptr) const {
        auto cell_key = [&](const Triple& t) -> std::optional<std::uint64_t> {
            const auto ri = fp.row_keys.find(std::string_view(t.row));
            const auto ci = fp.col_keys.find(std::string_view(t.col));
            if (!ri || !ci) return std::nullopt;
            return (static_cast<std::uint64_t>(*ri) << 32) | *ci;
        };
        if (memory_) {
            SecondPassBuilder<std::string> b(fp);
            for (const auto& t : *memory_) {
                b.add(t.row, t.col, t.value);
                if (capture && !capture->empty()) {
                    if (auto k = cell_key(t); k && capture->count(*k)) (*capture)[*k] = t.value;
                }
            }
            return std::move(b).finish();
        }
        std::vector<std::unordered_map<std::uint64_t, double>> seen(ranges_.size());
        const bool want = capture && !capture->empty();
        auto parts = run_shards<SecondPassBuilder<std::string>>(
            opt_.path, ranges_, [&] { return SecondPassBuilder<std::string>(fp); },
            [&](SecondPassBuilder<std::string>& b, const Triple& t, std::size_t s) {
                b.add(t.row, t.col, t.value);
                if (want) {
                    if (auto k = cell_key(t); k && capture->count(*k)) seen[s][*k] = t.value;
                }
            });
        for (std::size_t s = 1; s < parts.size(); ++s) parts[0].merge(parts[s]);
        if (want) {
            for (const auto& m : seen) {
                for (const auto& [k, v] : m) (*capture)[k] = v;
            }
        }
        return std::move(parts[0]).finish();
    }

private:
    InputOptions opt_;
    std::vector<ByteRange> ranges_;
    std::optional<std::vector<Triple>> memory_;
};

Fp load_first_pass(const Input& input, const InputOptions& opt, double& ms) {
    const auto t0 = Clock::now();
    Fp fp;
    if (!opt.summaries_in.empty()) {
        std::ifstream in(opt.summaries_in, std::ios::binary);
        if (!in) {
            throw IoError("cannot read '" + opt.summaries_in + "'");
        }
        fp = read_sidecar(in);
    } else {
        fp = input.first_pass();
    }
    if (!opt.summaries_out.empty()) {
        std::ofstream out(opt.summaries_out, std::ios::binary);
        if (!out) {
            throw IoError("cannot write '" + opt.summaries_out + "'");
        }
        write_sidecar(out, fp);
        if (!out.flush()) {
            throw IoError("write failed for '" + opt.summaries_out + "'");
        }
    }
    ms = ms_since(t0);
    return fp;
}

void add_input_options(CLI::App* cmd, InputOptions& opt) {
    cmd->add_option("input", opt.path, "CSV of row,col,value with header")->required();
    cmd->add_option("--shards", opt.shards, "parallel byte-range shards per pass")->check(CLI::PositiveNumber);
    cmd->add_flag("--dedupe-average", opt.dedupe_average, "average repeated cells (loads the file into memory)");
    cmd->add_flag("--assume-unique", opt.assume_unique, "skip the duplicate-cell check; memory stays O(R + C)");
    cmd->add_option("--summaries-in", opt.summaries_in, "read the first-pass summary instead of running pass 1");
    cmd->add_option("--summaries-out", opt.summaries_out, "write the first-pass summary");
}

// ---- estimate ----

struct EstimateOptions {
    InputOptions input;
    double delta0 = kDefaultDelta0;
    bool two_pass_only = false;
    bool seed_check = false;
    bool pass1_only = false;
    std::string out;
};

json pass1_counts(const Fp& fp, const PatternSums& ps) {
    json c;
    c["N"] = ps.n;
    c["R"] = ps.r;
    c["C"] = ps.c;
    c["eps_r"] = static_cast<double>(ps.max_row) / ps.nd();
    c["eps_c"] = static_cast<double>(ps.max_col) / ps.nd();
    c["largest_row"] = fp.row_keys.key(ps.argmax_row);
    c["largest_col"] = fp.col_keys.key(ps.argmax_col);
    return c;
}

int cmd_estimate(const EstimateOptions& opt, std::ostream& out, std::ostream& err) {
    if (!(opt.delta0 >= 0)) {
        throw InvalidArgument("--delta0 must be >= 0");
    }
    json report;
    report["format_version"] = kFormatVersion;
    report["status"] = "ok";
    json timings;

    Input input(opt.input);
    double t_pass1 = 0;
    const Fp fp = load_first_pass(input, opt.input, t_pass1);
    timings["pass1"] = t_pass1;

    auto t0 = Clock::now();
    const PatternSums ps = pattern_sums(fp);
    report["counts"] = pass1_counts(fp, ps);
    UStatistics u = u_stats(fp);
    const MomentMatrix mm = moment_matrix(ps);
    report["mu_hat"] = fp.global.mean;
    report["u"] = triple_json(u.u_a, u.u_b, u.u_e);
    if (opt.pass1_only) {
        report["status"] = "pass1_only";
        timings["solve"] = ms_since(t0);
        report["timings_ms"] = timings;
        emit(report, opt.out, out);
        return kOk;
    }
    if (mm.singular()) {
        report["status"] = "singular";
        report["error"] = mm.singularity_reason();
        timings["solve"] = ms_since(t0);
        report["timings_ms"] = timings;
        emit(report, opt.out, out);
        err << "error: " << mm.singularity_reason() << '\n';
        return kIdentifiability;
    }
    ThetaEstimate est = solve_theta(u, mm);
    double t_solve = ms_since(t0);

    t0 = Clock::now();
    const SecondPassSummary sp = input.second_pass(fp);
    if (opt.seed_check) {
        verify_totals(fp, sp);
    }
    timings["pass2"] = ms_since(t0);

    t0 = Clock::now();
    u = u_stats(fp, sp);
    report["mu_hat"] = fp.global.mean + sp.lin_global.value() / static_cast<double>(fp.n());
    report["u"] = triple_json(u.u_a, u.u_b, u.u_e);
    est = solve_theta(u, mm);
    const WStatistics w = w_stats(fp, sp);
    est = solve_kurtoses(est, w, mm, variance_floor(fp));
    const ObservationCounts oc = compute_delta(ps, sp);
    const CrossTotals ct = cross_totals(fp, sp);
    const ThetaCovariance cov = theta_covariance(est.clamped, est.kappa, ps, ct, oc, opt.delta0, opt.two_pass_only);
    const GrandMean gm = grand_mean(fp, est.clamped);
    t_solve += ms_since(t0);

    json& counts = report["counts"];
    counts["r_over_n"] = oc.r_over_n;
    counts["c_over_n"] = oc.c_over_n;
    counts["n_over_sum_ni2"] = oc.n_over_sum_ni2;
    counts["n_over_sum_nj2"] = oc.n_over_sum_nj2;
    counts["zn_mp_over_sum_ni2"] = oc.zn_mp_over_sum_ni2;
    counts["zn_pm_over_sum_nj2"] = oc.zn_pm_over_sum_nj2;
    counts["delta"] = oc.delta;
    counts["delta0"] = opt.delta0;
    report["mu_hat_var"] = gm.var_bound;
    report["mu_hat_var_eps_bound"] = gm.eps_bound;
    report["w"] = triple_json(w.w_a, w.w_b, w.w_e);
    report["theta"] = {{"raw", components(est.sigma2_a, est.sigma2_b, est.sigma2_e)},
                       {"clamped", components(est.clamped)}};
    report["kurtosis"] = {
        {"raw", triple_json(est.kappa_raw[0], est.kappa_raw[1], est.kappa_raw[2])},
        {"used", triple_json(est.kappa.kappa_a, est.kappa.kappa_b, est.kappa.kappa_e)},
        {"defined", {{"a", est.kappa_defined[0]}, {"b", est.kappa_defined[1]}, {"e", est.kappa_defined[2]}}},
        {"floored", {{"a", est.kappa_floored[0]}, {"b", est.kappa_floored[1]}, {"e", est.kappa_floored[2]}}},
    };
    report["mu4"] = triple_json(est.mu4_a, est.mu4_b, est.mu4_e);
    json se = json::array();
    for (int k = 0; k < 3; ++k) se.push_back(cov.m(k, k) >= 0 ? std::sqrt(cov.m(k, k)) : NAN);
    report["theta_covariance"] = {{"regime", to_string(cov.regime)},
                                  {"matrix", matrix_json(cov.m)},
                                  {"standard_errors", se},
                                  {"nonconservative_diagonal", cov.nonconservative_diagonal}};
    timings["solve"] = t_solve;
    report["timings_ms"] = timings;
    emit(report, opt.out, out);
    return kOk;
}

// ---- predict ----

struct PredictOptions {
    InputOptions input;
    std::string cells_path;
    std::vector<std::string> cells;
    std::optional<double> mu;
    std::string theta;
    bool smooth = false;
    std::string out;
};

std::vector<std::pair<std::string, std::string>> requested_cells(const PredictOptions& opt) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& c : opt.cells) {
        const auto f = split_fields(c);
        if (f.size() != 2) {
            throw InvalidArgument("--cell needs 'row,col', got '" + c + "'");
        }
        out.emplace_back(f[0], f[1]);
    }
    if (!opt.cells_path.empty()) {
        std::ifstream in(opt.cells_path, std::ios::binary);
        if (!in) {
            throw IoError("cannot read '" + opt.cells_path + "'");
        }
        std::string line;
        std::vector<std::string> f;
        std::uint64_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line_no == 1) {
                if (!detail::split_csv(line, f) || f.size() != 2 || f[0] != "row" || f[1] != "col") {
                    throw ParseError(1, "cells header must be 'row,col'");
                }
                continue;
            }
            if (line.empty()) continue;
            if (!detail::split_csv(line, f) || f.size() != 2) {
                throw ParseError(line_no, "expected 'row,col'");
            }
            out.emplace_back(f[0], f[1]);
        }
        if (line_no == 0) {
            throw ParseError(1, "missing header");
        }
    }
    if (out.empty()) {
        throw InvalidArgument("predict needs --cell or --cells");
    }
    return out;
}

int cmd_predict(const PredictOptions& opt, std::ostream& out, std::ostream&) {
    const auto cells = requested_cells(opt);
    std::optional<VarianceComponents> given;
    if (!opt.theta.empty()) given = parse_theta(opt.theta);
    if (opt.mu && !std::isfinite(*opt.mu)) {
        throw InvalidArgument("--mu must be finite");
    }

    json timings;
    Input input(opt.input);
    double t_pass1 = 0;
    const Fp fp = load_first_pass(input, opt.input, t_pass1);
    timings["pass1"] = t_pass1;
    const PatternSums ps = pattern_sums(fp);

    const MomentMatrix mm = moment_matrix(ps);
    if (!given && mm.singular()) {
        throw SingularSystem(mm.singularity_reason());
    }

    struct Resolved {
        std::optional<std::uint32_t> row, col;
    };
    std::vector<Resolved> resolved;
    std::unordered_map<std::uint64_t, double> capture;
    for (const auto& [r, c] : cells) {
        Resolved x{fp.row_keys.find(std::string_view(r)), fp.col_keys.find(std::string_view(c))};
        if (x.row && x.col) capture.emplace((static_cast<std::uint64_t>(*x.row) << 32) | *x.col, NAN);
        resolved.push_back(x);
    }

    auto t0 = Clock::now();
    const SecondPassSummary sp = input.second_pass(fp, &capture);
    timings["pass2"] = ms_since(t0);
    const VarianceComponents theta = given ? *given : solve_theta(u_stats(fp, sp), mm).clamped;
    const double mu = opt.mu ? *opt.mu : fp.global.mean + sp.lin_global.value() / static_cast<double>(fp.n());

    t0 = Clock::now();
    json records = json::array();
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const auto& x = resolved[k];
        std::optional<double> y;
        if (x.row && x.col) {
            const double v = capture.at((static_cast<std::uint64_t>(*x.row) << 32) | *x.col);
            if (!std::isnan(v)) y = v;
        }
        const CellContext ctx = make_cell_context(fp, sp, ps, x.row, x.col, y);
        const PredictionRecord rec = predict_cell(mu, theta, fp, ctx, opt.smooth);
        json r;
        r["row"] = cells[k].first;
        r["col"] = cells[k].second;
        r["row_seen"] = x.row.has_value();
        r["col_seen"] = x.col.has_value();
        r["observed"] = ctx.z;
        r["weights"] = {{"lambda0", rec.weights.lambda0},
                        {"lambda_a", rec.weights.lambda_a},
                        {"lambda_b", rec.weights.lambda_b},
                        {"lambda_ab", rec.weights.lambda_ab}};
        r["eta"] = rec.weights.eta;
        r["smoothed"] = rec.smoothed;
        r["prediction"] = rec.prediction;
        r["mse"] = rec.mse;
        records.push_back(std::move(r));
    }
    const double t_solve = ms_since(t0);
    timings["solve"] = t_solve;
    timings["solve_per_cell"] = t_solve / static_cast<double>(cells.size());

    json report;
    report["format_version"] = kFormatVersion;
    report["status"] = "ok";
    report["mu"] = mu;
    report["theta"] = components(theta);
    report["theta_source"] = given ? "given" : "estimated";
    report["predictions"] = std::move(records);
    report["timings_ms"] = timings;
    emit(report, opt.out, out);
    return kOk;
}

// ---- simulate ----

struct SimulateOptions {
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    double prob = 0.25;
    std::uint64_t seed = 1;
    double mu = 0;
    std::string theta = "1,1,1";
    std::string law_a = "normal", law_b = "normal", law_e = "normal";
    std::string out;
};

int cmd_simulate(const SimulateOptions& opt, std::ostream& out, std::ostream&) {
    ModelParams p;
    p.mu = opt.mu;
    p.theta = parse_theta(opt.theta);
    p.law_a = parse_effect_law(opt.law_a);
    p.law_b = parse_effect_law(opt.law_b);
    p.law_e = parse_effect_law(opt.law_e);
    const SimulationShape shape{opt.rows, opt.cols, opt.prob, opt.seed};
    shape.validate();
    OutputTarget target(opt.out, out);
    std::ostream& os = target.stream();
    write_header(os);
    simulate(p, shape, [&](const IndexTriple& t) { write_triple(os, t); });
    target.finish();
    return kOk;
}

// ---- gibbs-rate ----

struct GibbsOptions {
    std::uint64_t r = 0;
    std::uint64_t c = 0;
    std::string theta;
    double mu = 0;
    bool empirical = false;
    std::uint64_t iters = 60000;
    std::uint64_t burn_in = 2000;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_gibbs_rate(const GibbsOptions& opt, std::ostream& out, std::ostream&) {
    const VarianceComponents th = parse_theta(opt.theta);
    json report;
    report["format_version"] = kFormatVersion;
    report["status"] = "ok";
    report["r"] = opt.r;
    report["c"] = opt.c;
    report["theta"] = components(th);
    report["rho_theory"] = gibbs_rate(opt.r, opt.c, th);
    if (opt.empirical) {
        if (opt.iters <= opt.burn_in || opt.iters - opt.burn_in < kMinChainLength) {
            throw InvalidArgument("--iters minus --burn-in must be at least 5000");
        }
        const auto t0 = Clock::now();
        const RateReport rep = gibbs_rate_check({opt.r, opt.c, opt.mu, th, opt.iters, opt.burn_in, opt.seed});
        report["rho_empirical"] = rep.rho_empirical;
        report["iterations"] = opt.iters;
        report["burn_in"] = opt.burn_in;
        report["seed"] = opt.seed;
        json acf = json::array();
        for (std::size_t k = 0; k < std::min<std::size_t>(rep.acf.size(), 21); ++k) acf.push_back(rep.acf[k]);
        report["acf"] = acf;
        report["timings_ms"] = {{"chain", ms_since(t0)}};
    }
    emit(report, opt.out, out);
    return kOk;
}

}  // namespace

std::vector<ByteRange> plan_shards(const std::string& path, unsigned shards) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read '" + path + "'");
    }
    std::string header;
    if (!std::getline(in, header)) {
        throw ParseError(1, "missing header");
    }
    check_header(header);
    in.clear();
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::uint64_t>(in.tellg());
    const std::uint64_t start = std::min<std::uint64_t>(header.size() + 1, size);
    const std::uint64_t body = size - start;

    // Moves a cut forward to the start of the next line.
    auto align = [&](std::uint64_t cut) -> std::uint64_t {
        if (cut <= start || cut >= size) return std::min(std::max(cut, start), size);
        in.clear();
        in.seekg(static_cast<std::streamoff>(cut - 1));
        std::string rest;
        if (in.get() == '\n') return cut;
        std::getline(in, rest);
        return std::min(cut + rest.size() + 1, size);
    };
    std::vector<ByteRange> out;
    std::uint64_t prev = start;
    for (unsigned k = 1; k <= shards; ++k) {
        const std::uint64_t cut = k == shards ? size : align(start + body * k / shards);
        const std::uint64_t end = std::max(cut, prev);
        out.push_back({prev, end});
        prev = end;
    }
    return out;
}

unsigned worker_count(unsigned shards) {
    unsigned cap = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("CM_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) cap = static_cast<unsigned>(v);
    }
    return std::max(1u, std::min(shards, cap));
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Method-of-moments variance components for crossed random effects", "crossmom"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    EstimateOptions est;
    auto* estimate = app.add_subcommand("estimate", "estimate variance components, kurtoses and covariances");
    add_input_options(estimate, est.input);
    estimate->add_option("--delta0", est.delta0, "balance threshold for the asymptotic covariance");
    estimate->add_flag("--two-pass-only", est.two_pass_only, "always report the two-pass plug-in covariance");
    estimate->add_flag("--seed-check", est.seed_check, "check that pass 2 re-read the same totals");
    estimate->add_flag("--pass1-only", est.pass1_only, "stop after the first pass");
    estimate->add_option("--out", est.out, "report path (default stdout)");

    PredictOptions pred;
    auto* predict = app.add_subcommand("predict", "shrinkage predictions for cells");
    add_input_options(predict, pred.input);
    predict->add_option("--cells", pred.cells_path, "CSV of row,col with header");
    predict->add_option("--cell", pred.cells, "one cell as 'row,col' (repeatable)");
    predict->add_option("--mu", pred.mu, "grand mean override");
    predict->add_option("--theta", pred.theta, "variance components 'a,b,e' instead of estimating");
    predict->add_flag("--smooth", pred.smooth, "for observed cells, estimate mu + a_i + b_j using Y_ij too");
    predict->add_option("--out", pred.out, "report path (default stdout)");

    SimulateOptions sim;
    auto* simulate_cmd = app.add_subcommand("simulate", "write a synthetic data set");
    simulate_cmd->add_option("--rows", sim.rows)->required();
    simulate_cmd->add_option("--cols", sim.cols)->required();
    simulate_cmd->add_option("--prob", sim.prob, "probability each cell is observed");
    simulate_cmd->add_option("--seed", sim.seed);
    simulate_cmd->add_option("--mu", sim.mu);
    simulate_cmd->add_option("--theta", sim.theta, "'a,b,e'");
    simulate_cmd->add_option("--law-a", sim.law_a, "normal, uniform or exponential");
    simulate_cmd->add_option("--law-b", sim.law_b);
    simulate_cmd->add_option("--law-e", sim.law_e);
    simulate_cmd->add_option("--out", sim.out, "CSV path (default stdout)");

    GibbsOptions gib;
    auto* gibbs = app.add_subcommand("gibbs-rate", "convergence rate of the two-block Gibbs sampler");
    gibbs->add_option("--r", gib.r)->required();
    gibbs->add_option("--c", gib.c)->required();
    gibbs->add_option("--theta", gib.theta, "'a,b,e'")->required();
    gibbs->add_option("--mu", gib.mu);
    gibbs->add_flag("--empirical", gib.empirical, "also run the sampler and measure the decay");
    gibbs->add_option("--iters", gib.iters);
    gibbs->add_option("--burn-in", gib.burn_in);
    gibbs->add_option("--seed", gib.seed);
    gibbs->add_option("--out", gib.out, "report path (default stdout)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kBadFlags;
    }

    try {
        if (*estimate) return cmd_estimate(est, out, err);
        if (*predict) return cmd_predict(pred, out, err);
        if (*simulate_cmd) return cmd_simulate(sim, out, err);
        if (*gibbs) return cmd_gibbs_rate(gib, out, err);
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return kBadFlags;
    } catch (const ChainTooShort& e) {
        err << "error: " << e.what() << '\n';
        return kBadFlags;
    } catch (const SingularSystem& e) {
        err << "error: " << e.what() << '\n';
        return kIdentifiability;
    } catch (const SingularPredictionSystem& e) {
        err << "error: " << e.what() << '\n';
        return kIdentifiability;
    } catch (const UndefinedKurtosis& e) {
        err << "error: " << e.what() << '\n';
        return kIdentifiability;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kIoOrParse;
    } catch (const std::bad_alloc&) {
        err << "error: out of memory\n";
        return kIoOrParse;
    }
    return kBadFlags;
}

}  // namespace crossmom::cli

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "../tools/cli.hpp"

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = crossmom::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string samples(const std::string& name) { return std::string(CROSSMOM_SAMPLES) + "/" + name; }

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class TempDir {
public:
    TempDir() {
        dir_ = fs::temp_directory_path() / ("crossmom_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                           "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    ~TempDir() { fs::remove_all(dir_); }

    std::string write(const std::string& name, const std::string& text) const {
        const auto p = (dir_ / name).string();
        std::ofstream(p, std::ios::binary) << text;
        return p;
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

private:
    fs::path dir_;
};

json strip_timings(json j) {
    j.erase("timings_ms");
    return j;
}

void expect_numbers_close(const json& a, const json& b, double rel, const std::string& where = "") {
    ASSERT_EQ(a.type(), b.type()) << where;
    if (a.is_object()) {
        ASSERT_EQ(a.size(), b.size()) << where;
        for (auto it = a.begin(); it != a.end(); ++it) {
            ASSERT_TRUE(b.contains(it.key())) << where << "/" << it.key();
            expect_numbers_close(it.value(), b.at(it.key()), rel, where + "/" + it.key());
        }
    } else if (a.is_array()) {
        ASSERT_EQ(a.size(), b.size()) << where;
        for (std::size_t k = 0; k < a.size(); ++k) expect_numbers_close(a[k], b[k], rel, where + "/" + std::to_string(k));
    } else if (a.is_number_float()) {
        const double x = a.get<double>(), y = b.get<double>();
        EXPECT_NEAR(x, y, rel * std::max(std::fabs(x), std::fabs(y))) << where;
    } else {
        EXPECT_EQ(a, b) << where;
    }
}

}  // namespace

TEST(Cli, GoldenEstimateReport) {
    auto r = run({"estimate", samples("small.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = json::parse(r.out);
    for (const auto& [k, v] : report["timings_ms"].items()) EXPECT_GE(v.get<double>(), 0.0) << k;
    const std::string got = strip_timings(report).dump(2) + "\n";
    if (std::getenv("CROSSMOM_UPDATE_GOLDEN")) {
        std::ofstream(samples("small_estimate.json"), std::ios::binary) << got;
    }
    EXPECT_EQ(got, slurp(samples("small_estimate.json")));
}

TEST(Cli, SimulateIsDeterministicBySeed) {
    auto r = run({"simulate", "--rows", "40", "--cols", "30", "--prob", "0.3", "--seed", "7", "--mu", "1", "--theta",
                  "2,0.5,1"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, slurp(samples("small.csv")));
    auto other = run({"simulate", "--rows", "40", "--cols", "30", "--prob", "0.3", "--seed", "8"});
    EXPECT_NE(other.out, r.out);
}

TEST(Cli, SimulateEstimateRoundTrip) {
    TempDir tmp;
    const auto csv = tmp.path("grid.csv");
    ASSERT_EQ(run({"simulate", "--rows", "100", "--cols", "100", "--prob", "1", "--seed", "3", "--theta", "2,0.5,1",
                   "--out", csv})
                  .code,
              0);
    auto r = run({"estimate", csv});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j["counts"]["N"], 10000);
    const auto& th = j["theta"]["clamped"];
    const auto& se = j["theta_covariance"]["standard_errors"];
    const double truth[3] = {2.0, 0.5, 1.0};
    const char* names[3] = {"sigma2_a", "sigma2_b", "sigma2_e"};
    for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(th[names[k]].get<double>(), truth[k], 5 * se[k].get<double>()) << names[k];
    }
    const double delta = j["counts"]["delta"];
    EXPECT_EQ(j["theta_covariance"]["regime"].get<std::string>(), delta <= 0.01 ? "asymptotic" : "plugin_upper");
}

TEST(Cli, ShardsAgree) {
    auto base = run({"estimate", samples("small.csv"), "--shards", "1"});
    ASSERT_EQ(base.code, 0);
    const auto want = strip_timings(json::parse(base.out));
    for (const char* k : {"2", "3", "7", "16"}) {
        auto r = run({"estimate", samples("small.csv"), "--shards", k});
        ASSERT_EQ(r.code, 0) << r.err;
        expect_numbers_close(strip_timings(json::parse(r.out)), want, 1e-12);
    }
}

TEST(Cli, SummariesSplitPasses) {
    TempDir tmp;
    const auto side = tmp.path("pass1.txt");
    auto a = run({"estimate", samples("small.csv"), "--summaries-out", side});
    ASSERT_EQ(a.code, 0) << a.err;
    auto b = run({"estimate", samples("small.csv"), "--summaries-in", side});
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(strip_timings(json::parse(a.out)).dump(), strip_timings(json::parse(b.out)).dump());
    EXPECT_EQ(run({"estimate", samples("small.csv"), "--summaries-in", tmp.path("missing")}).code, 1);
}

TEST(Cli, SeedCheckAndPassOneOnly) {
    auto r = run({"estimate", samples("small.csv"), "--seed-check", "--two-pass-only"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(r.out)["theta_covariance"]["regime"], "plugin_upper");
    auto p = run({"estimate", samples("small.csv"), "--pass1-only"});
    ASSERT_EQ(p.code, 0);
    const auto j = json::parse(p.out);
    EXPECT_EQ(j["status"], "pass1_only");
    EXPECT_FALSE(j.contains("theta"));
}

TEST(Cli, DuplicateCellsAreRejectedUnlessAveraged) {
    TempDir tmp;
    const auto csv = tmp.write("dup.csv", "row,col,value\na,x,1\na,y,2\nb,x,3\nb,y,4\na,x,5\nc,z,1\nc,x,0\n");
    auto r = run({"estimate", csv});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("duplicate"), std::string::npos) << r.err;
    EXPECT_EQ(run({"estimate", csv, "--dedupe-average"}).code, 0);
    EXPECT_EQ(run({"estimate", csv, "--dedupe-average", "--assume-unique"}).code, 3);
}

TEST(Cli, AssumeUniqueMatchesCheckedRun) {
    auto a = run({"estimate", samples("small.csv")});
    auto b = run({"estimate", samples("small.csv"), "--assume-unique", "--shards", "3"});
    ASSERT_EQ(b.code, 0) << b.err;
    expect_numbers_close(strip_timings(json::parse(a.out)), strip_timings(json::parse(b.out)), 1e-12);
}

TEST(ExitCodes, Success) {
    EXPECT_EQ(run({"gibbs-rate", "--r", "20", "--c", "20", "--theta", "2,0.5,1"}).code, 0);
    EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(ExitCodes, IoAndParse) {
    TempDir tmp;
    auto missing = run({"estimate", tmp.path("nope.csv")});
    EXPECT_EQ(missing.code, 1);
    auto nan = run({"estimate", tmp.write("nan.csv", "row,col,value\n1,1,2\n1,2,NaN\n2,1,0\n")});
    EXPECT_EQ(nan.code, 1);
    EXPECT_NE(nan.err.find("line 3"), std::string::npos) << nan.err;
    // Line numbers stay global when the bad line sits in a later shard.
    std::string text = "row,col,value\n";
    for (int k = 0; k < 200; ++k) text += std::to_string(k % 13) + "," + std::to_string(k / 13) + ",1.5\n";
    text += "7,x,oops\n";
    const auto big = tmp.write("late.csv", text);
    for (const char* k : {"1", "4"}) {
        auto r = run({"estimate", big, "--shards", k});
        EXPECT_EQ(r.code, 1);
        EXPECT_NE(r.err.find("line 202"), std::string::npos) << r.err;
    }
    EXPECT_EQ(run({"estimate", tmp.write("hdr.csv", "a,b,c\n1,1,1\n")}).code, 1);
    EXPECT_EQ(run({"estimate", samples("small.csv"), "--out", tmp.path("no/such/dir/x.json")}).code, 1);
}

TEST(ExitCodes, Identifiability) {
    TempDir tmp;
    std::string text = "row,col,value\n";
    for (int k = 0; k < 20; ++k) text += std::to_string(k) + "," + std::to_string(k) + "," + std::to_string(k * 0.1) + "\n";
    auto r = run({"estimate", tmp.write("iid.csv", text)});
    EXPECT_EQ(r.code, 2);
    const auto j = json::parse(r.out);
    EXPECT_EQ(j["status"], "singular");
    EXPECT_FALSE(j["error"].get<std::string>().empty());
    EXPECT_NE(r.err.find("sigma2"), std::string::npos) << r.err;
}

TEST(ExitCodes, BadFlags) {
    EXPECT_EQ(run({}).code, 3);
    EXPECT_EQ(run({"frobnicate"}).code, 3);
    EXPECT_EQ(run({"estimate"}).code, 3);
    EXPECT_EQ(run({"estimate", samples("small.csv"), "--shards", "0"}).code, 3);
    EXPECT_EQ(run({"estimate", samples("small.csv"), "--bogus"}).code, 3);
    EXPECT_EQ(run({"predict", samples("small.csv"), "--cell", "1,2", "--theta", "1,2"}).code, 3);
    EXPECT_EQ(run({"predict", samples("small.csv"), "--cell", "1,2", "--theta", "1,-2,1"}).code, 3);
    EXPECT_EQ(run({"simulate", "--rows", "3"}).code, 3);
    EXPECT_EQ(run({"gibbs-rate", "--r", "5", "--c", "5", "--theta", "x"}).code, 3);
    EXPECT_EQ(run({"gibbs-rate", "--r", "5", "--c", "5", "--theta", "1,1,1", "--empirical", "--iters", "50"}).code, 3);
}

TEST(Predict, UnseenCellUsesGrandTotalOnly) {
    auto r = run({"predict", samples("small.csv"), "--cell", "new-row,new-col", "--theta", "2,0.5,1", "--mu", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j["theta_source"], "given");
    const auto& p = j["predictions"][0];
    EXPECT_FALSE(p["row_seen"].get<bool>());
    EXPECT_EQ(p["weights"]["lambda_a"], 0.0);
    EXPECT_EQ(p["weights"]["lambda_b"], 0.0);
    const auto est = json::parse(run({"estimate", samples("small.csv")}).out);
    const double total = est["mu_hat"].get<double>() * est["counts"]["N"].get<double>();
    EXPECT_NEAR(p["prediction"].get<double>(), p["weights"]["lambda0"].get<double>() * total, 1e-12);
}

TEST(Predict, SmoothingPopulatesSelfWeight) {
    TempDir tmp;
    const auto cells = tmp.write("cells.csv", "row,col\n0,0\n999,0\n");
    auto r = run({"predict", samples("small.csv"), "--cells", cells, "--smooth"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    ASSERT_EQ(j["predictions"].size(), 2u);
    const auto& seen = j["predictions"][0];
    EXPECT_TRUE(seen["observed"].get<bool>());
    EXPECT_TRUE(seen["smoothed"].get<bool>());
    EXPECT_GT(seen["weights"]["lambda_ab"].get<double>(), 0.0);
    const auto& unseen = j["predictions"][1];
    EXPECT_FALSE(unseen["smoothed"].get<bool>());
    EXPECT_EQ(unseen["weights"]["lambda_ab"], 0.0);
}

TEST(Predict, BatchMatchesSingleCells) {
    auto both = json::parse(run({"predict", samples("small.csv"), "--cell", "3,4", "--cell", "5,x"}).out);
    auto one = json::parse(run({"predict", samples("small.csv"), "--cell", "5,x"}).out);
    expect_numbers_close(both["predictions"][1], one["predictions"][0], 0.0);
}

TEST(Predict, UsesTheEstimateReport) {
    auto est = json::parse(run({"estimate", samples("small.csv")}).out);
    auto pred = json::parse(run({"predict", samples("small.csv"), "--cell", "3,4", "--shards", "3"}).out);
    EXPECT_NEAR(pred["mu"].get<double>(), est["mu_hat"].get<double>(), 1e-12);
    expect_numbers_close(pred["theta"], est["theta"]["clamped"], 1e-12);
}

TEST(GibbsRateCmd, Reports) {
    auto j = json::parse(run({"gibbs-rate", "--r", "1000", "--c", "1000", "--theta", "2,0.5,1"}).out);
    EXPECT_NEAR(j["rho_theory"].get<double>(), 0.997506, 1e-6);
    auto z = json::parse(run({"gibbs-rate", "--r", "10", "--c", "10", "--theta", "0,0.5,1"}).out);
    EXPECT_EQ(z["rho_theory"], 0.0);
    auto e = run({"gibbs-rate", "--r", "20", "--c", "20", "--theta", "2,0.5,1", "--empirical", "--seed", "11"});
    ASSERT_EQ(e.code, 0) << e.err;
    const auto ej = json::parse(e.out);
    EXPECT_NEAR(ej["rho_empirical"].get<double>(), 400.0 / 451.0, 0.03);
}

TEST(Shards, PlanCoversBodyOnLineBoundaries) {
    const auto path = samples("small.csv");
    const auto text = slurp(path);
    for (unsigned k : {1u, 2u, 5u, 16u, 1000u}) {
        auto plan = crossmom::cli::plan_shards(path, k);
        ASSERT_EQ(plan.size(), k);
        EXPECT_EQ(plan.front().begin, text.find('\n') + 1);
        EXPECT_EQ(plan.back().end, text.size());
        for (std::size_t s = 0; s < plan.size(); ++s) {
            if (s > 0) {
                EXPECT_EQ(plan[s].begin, plan[s - 1].end);
            }
            if (plan[s].begin > 0 && plan[s].begin < text.size()) {
                EXPECT_EQ(text[plan[s].begin - 1], '\n');
            }
        }
    }
}

TEST(Shards, WorkerCountHonoursEnv) {
    ::setenv("CM_THREADS", "2", 1);
    EXPECT_EQ(crossmom::cli::worker_count(16), 2u);
    EXPECT_EQ(crossmom::cli::worker_count(1), 1u);
    ::setenv("CM_THREADS", "junk", 1);
    EXPECT_GE(crossmom::cli::worker_count(16), 1u);
    ::unsetenv("CM_THREADS");
}

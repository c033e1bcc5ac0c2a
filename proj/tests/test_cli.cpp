#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "qdelta/config.hpp"
#include "qdelta/csv_schema.hpp"
#include "qdelta/weight.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace qdelta;

namespace {

const fs::path kFixtures = QDELTA_FIXTURE_DIR;

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("qdelta_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct Run {
    int code = -1;
    std::string err;
};

Run qdelta_run(const std::string& args, const fs::path& dir, const std::string& env = "") {
    fs::path err = dir / "stderr.txt";
    std::string cmd = env + " \"" + std::string(QDELTA_CLI_PATH) + "\" " + args + " > \"" + (dir / "stdout.txt").string() +
                      "\" 2> \"" + err.string() + "\"";
    int rc = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.err = slurp(err);
    return r;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    fs::path p = dir / "run.cfg";
    std::ofstream(p) << text;
    return p;
}

void expect_schema(const fs::path& file) {
    auto it = csv_schemas().find(file.filename().string());
    ASSERT_NE(it, csv_schemas().end()) << file;
    auto bad = check_csv(slurp(file), it->second);
    EXPECT_TRUE(bad.empty()) << file << ": " << (bad.empty() ? "" : bad.front());
    std::string cmd = "\"" + std::string(QDELTA_CSVCHECK_PATH) + "\" \"" + file.string() + "\"";
    EXPECT_EQ(std::system(cmd.c_str()), 0) << file;
}

std::size_t data_rows(const fs::path& csv) {
    std::istringstream in(slurp(csv));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) ++n;
    return n - 1;
}

}  // namespace

TEST(Cli, CountSphere) {
    auto d = scratch("count");
    auto r = qdelta_run("count --config \"" + (kFixtures / "sphere.cfg").string() + "\" --out \"" + d.string() + "\"", d);
    ASSERT_EQ(r.code, 0) << r.err;
    json j = json::parse(slurp(d / "count.json"));
    EXPECT_EQ(j["result"]["raw"], 6);
    EXPECT_NEAR(j["result"]["gamma"].get<double>(), 6 * bump1(1 / 1.5), 1e-14);
    EXPECT_EQ(j["config_hash"], Config::load((kFixtures / "sphere.cfg").string()).hash());
    EXPECT_TRUE(j["result"].contains("seconds"));
}

TEST(Cli, MissingFieldIsAConfigError) {
    auto d = scratch("missing");
    auto cfg = write_config(d, "form = 1 1 1\np0 = 5\nh = 0\nweight.center = 0 0 0\nweight.radius = 1.5\n");
    auto r = qdelta_run("count --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"", d);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("m0"), std::string::npos) << r.err;
}

TEST(Cli, MalformedValuesAreConfigErrors) {
    auto d = scratch("malformed");
    for (std::string bad : {"form = 1 1 x\n", "form = 1 1 0\n", "form = 1 1 1 3 0 0\n", "garbage line\n"}) {
        auto cfg = write_config(d, bad + "m0 = 1\np0 = 5\nh = 0\nweight.center = 0 0 0\nweight.radius = 1.5\n");
        EXPECT_EQ(qdelta_run("count --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"", d).code, 2) << bad;
    }
    EXPECT_EQ(qdelta_run("count --out \"" + d.string() + "\"", d).code, 2);
    EXPECT_EQ(qdelta_run("count --config /nonexistent.cfg", d).code, 2);
}

TEST(Cli, DeterministicRerunIsByteIdentical) {
    auto a = scratch("det_a"), b = scratch("det_b");
    std::string cfg = (kFixtures / "hyperboloid.cfg").string();
    ASSERT_EQ(qdelta_run("count --config \"" + cfg + "\" --out \"" + a.string() + "\" --deterministic", a).code, 0);
    ASSERT_EQ(
        qdelta_run("count --config \"" + cfg + "\" --out \"" + b.string() + "\" --deterministic --threads 3", b).code, 0);
    EXPECT_EQ(slurp(a / "count.json"), slurp(b / "count.json"));
    EXPECT_EQ(slurp(a / "config.echo"), slurp(b / "config.echo"));
}

TEST(Cli, ConfigEchoRoundTrips) {
    auto a = scratch("echo_a"), b = scratch("echo_b");
    std::string cfg = (kFixtures / "hyperboloid.cfg").string();
    ASSERT_EQ(qdelta_run("count --config \"" + cfg + "\" --out \"" + a.string() + "\" --deterministic", a).code, 0);
    ASSERT_EQ(qdelta_run("count --config \"" + (a / "config.echo").string() + "\" --out \"" + b.string() +
                             "\" --deterministic",
                         b)
                  .code,
              0);
    EXPECT_EQ(slurp(a / "count.json"), slurp(b / "count.json"));
    EXPECT_EQ(Config::load((a / "config.echo").string()).hash(), Config::load(cfg).hash());
}

TEST(Cli, ExpsumTable) {
    auto d = scratch("expsum");
    auto cfg = write_config(d, slurp(kFixtures / "hyperboloid.cfg") + "expsum.q_min = 1\nexpsum.q_max = 50\nexpsum.c_max = 0\n");
    ASSERT_EQ(qdelta_run("expsum --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"", d).code, 0);
    EXPECT_EQ(data_rows(d / "expsum.csv"), 50u);
    expect_schema(d / "expsum.csv");
}

TEST(Cli, DensityTable) {
    auto d = scratch("density");
    auto cfg = write_config(d, slurp(kFixtures / "hyperboloid.cfg") + "density.p_max = 100\n");
    ASSERT_EQ(qdelta_run("density --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"", d).code, 0);
    EXPECT_EQ(data_rows(d / "density.csv"), 25u);
    expect_schema(d / "density.csv");
    json j = json::parse(slurp(d / "density.json"));
    EXPECT_TRUE(j["singular_series"]["square"].get<bool>());
}

TEST(Cli, DeltaCheckTable) {
    auto d = scratch("delta");
    auto cfg = write_config(d, "delta.Q = 5, 10\ndelta.n_min = -25\ndelta.n_max = 25\n");
    ASSERT_EQ(qdelta_run("delta-check --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"", d).code, 0);
    EXPECT_EQ(data_rows(d / "delta_check.csv"), 102u);
    expect_schema(d / "delta_check.csv");
    json j = json::parse(slurp(d / "delta_check.json"));
    EXPECT_LT(j["per_Q"][0]["max_deviation"].get<double>(), 0.02);
}

TEST(Cli, ToleranceFailureExitCode) {
    auto d = scratch("tol");
    auto cfg = write_config(d, "delta.Q = 5\ndelta.tol = 0.001\n");
    EXPECT_EQ(qdelta_run("delta-check --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"", d).code, 1);
}

TEST(Cli, ResourceBoundExitCode) {
    auto d = scratch("resource");
    auto cfg = write_config(d, "form = 1 1 1\nm0 = 1\np0 = 5\nh = 9\nweight.center = 0 0 0\nweight.radius = 1.5\n");
    auto r = qdelta_run("count --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"", d);
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("box bound"), std::string::npos) << r.err;
}

TEST(Cli, CacheDirectoryFromEnvironment) {
    auto d = scratch("cache");
    fs::path cache = d / "cache";
    auto cfg = write_config(d, "delta.Q = 5\n");
    ASSERT_EQ(qdelta_run("delta-check --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"", d,
                         "QDELTA_CACHE_DIR=\"" + cache.string() + "\"")
                  .code,
              0);
    EXPECT_TRUE(fs::exists(cache / "omega_mass.txt"));
}

TEST(Cli, CompareObstructed) {
    auto d = scratch("cmp_obstructed");
    auto r = qdelta_run("compare --config \"" + (kFixtures / "obstructed.cfg").string() + "\" --out \"" + d.string() + "\" --deterministic", d);
    ASSERT_EQ(r.code, 0) << r.err;
    json j = json::parse(slurp(d / "report.json"));
    EXPECT_TRUE(j["local_obstruction"].get<bool>());
    for (const auto& row : j["rows"]) {
        EXPECT_EQ(row["raw"], 0);
        EXPECT_EQ(row["main"].get<double>(), 0.0);
    }
    ASSERT_EQ(j["poisson"].size(), 2u);
    EXPECT_TRUE(j["poisson"][0].contains("skipped"));
    EXPECT_TRUE(j["poisson"][1]["pass"].get<bool>());
    expect_schema(d / "compare.csv");
    expect_schema(d / "poisson_q.csv");
}

TEST(Cli, CompareSphereReportsBothCandidates) {
    auto d = scratch("cmp_sphere");
    auto r = qdelta_run(
        "compare --config \"" + (kFixtures / "sphere.cfg").string() + "\" --out \"" + d.string() + "\" --deterministic", d);
    ASSERT_EQ(r.code, 0) << r.err;
    json j = json::parse(slurp(d / "report.json"));
    EXPECT_FALSE(j["singular_series"]["square"].get<bool>());
    EXPECT_EQ(j["tracked_candidate"], "with_L1");
    EXPECT_GT(j["constants"]["without_L1"].get<double>(), j["constants"]["with_L1"].get<double>());
    expect_schema(d / "compare.csv");
}

TEST(Cli, CompareSquareCaseWithRatioTolerance) {
    auto d = scratch("cmp_square");
    auto cfg = write_config(d, slurp(kFixtures / "hyperboloid_p3.cfg"));
    auto r = qdelta_run("compare --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"", d);
    ASSERT_EQ(r.code, 0) << r.err;
    json j = json::parse(slurp(d / "report.json"));
    EXPECT_EQ(j["main_term_form"], "I*S*sqrtN*log(sqrtN)");
    EXPECT_EQ(j["rows"].size(), 5u);
    EXPECT_EQ(j["tracked_candidate"], "single");
}

TEST(CsvSchema, RejectsMalformedTables) {
    const auto& s = csv_schemas().at("expsum.csv");
    EXPECT_TRUE(check_csv("q,q1,q2,c1,c2,c3,re,im,abs,class\n1,1,1,0,0,0,1,0,1,zero\n", s).empty());
    EXPECT_FALSE(check_csv("q,q1,q2,c1,c2,c3,re,im,abs\n", s).empty());
    EXPECT_FALSE(check_csv("q,q1,q2,c1,c2,c3,re,im,abs,class\n1,1,1,0,0,0,1,0,1,weird\n", s).empty());
    EXPECT_FALSE(check_csv("q,q1,q2,c1,c2,c3,re,im,abs,class\n1.5,1,1,0,0,0,1,0,1,zero\n", s).empty());
    EXPECT_FALSE(check_csv("q,q1,q2,c1,c2,c3,re,im,abs,class\n1,1,1,0,0,0,1,0,zero\n", s).empty());
    EXPECT_FALSE(check_csv("q,q1,q2,c1,c2,c3,re,im,abs,class\n1,1,1,0,0,0,nan,0,1,zero\n", s).empty());
}

TEST(ConfigFile, ParseEchoHash) {
    auto c = Config::parse("# comment\n b = 2 \na = 1 # trailing\n\n");
    EXPECT_EQ(c.integer("a"), 1);
    EXPECT_EQ(c.echo(), "a = 1\nb = 2\n");
    EXPECT_EQ(Config::parse(c.echo()).hash(), c.hash());
    EXPECT_NE(Config::parse("a = 1\nb = 3\n").hash(), c.hash());
    EXPECT_THROW(Config::parse("a = 1\na = 2\n"), ConfigError);
    try {
        c.integer("missing");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field, "missing");
    }
}

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"

using namespace fedpg;
using namespace fedpg::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fedpg_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

int call(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "fedpg_lab");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return rc;
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

int fields(const std::string& line) { return static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1; }

Config tiny_run(const fs::path& dir) {
  Config c = default_config("run");
  c.instance.m = 3;
  c.instance.n_states = 3;
  c.instance.n_actions = 2;
  c.algorithm.rounds = 4;
  c.algorithm.batch = 3;
  c.algorithm.horizon = 10;
  c.algorithm.eta = 0.1;
  c.run.out = dir.string();
  return c;
}

}  // namespace

TEST(Config, RoundTripIsIdentity) {
  for (const char* cmd : {"run", "speedup", "compare-baseline", "verify"}) {
    Config c = default_config(cmd);
    c.algorithm.eta = 0.25;
    c.instance.gamma = 0.8;
    c.run.m_list = {1, 4};
    EXPECT_EQ(parse_config(serialize_config(c)), c) << cmd;
  }
  EXPECT_EQ(default_config("speedup").run.seeds, 4);
}

TEST(Config, PartialTextKeepsBase) {
  const Config base = default_config("run");
  const Config c = parse_config(R"({"algorithm": {"rounds": 7, "eta": "auto"}})", base);
  EXPECT_EQ(c.algorithm.rounds, 7);
  EXPECT_FALSE(c.algorithm.eta.has_value());
  EXPECT_EQ(c.instance, base.instance);
}

TEST(Config, ErrorsNameTheKey) {
  try {
    parse_config(R"({"algorithm": {"rounds": 7, "sped": 1}})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigParseError);
    EXPECT_NE(std::string(e.what()).find("algorithm.sped"), std::string::npos);
  }
  try {
    parse_config(R"({"run": {"seeds": "many"}})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("run.seeds"), std::string::npos);
  }
  EXPECT_THROW(parse_config("{not json"), Error);
  EXPECT_THROW(parse_config(R"({"bogus": {}})"), Error);
  EXPECT_THROW(parse_config(R"({"algorithm": {"variant": "X"}})"), Error);
}

TEST(Csv, HeaderAndRowArity) {
  RoundMetrics m;
  m.round = 3;
  const std::string row = format_metrics_row(m, "RS", 10, AlgorithmSpec{}, 0.1, 0.05);
  EXPECT_EQ(fields(row), fields(kCsvHeader));
  EXPECT_EQ(row.substr(0, 6), "3,RS,1");
}

TEST(Run, WritesRowsManifestAndReruns) {
  const fs::path dir = scratch("run");
  const Config c = tiny_run(dir);
  std::ostringstream log;
  ASSERT_EQ(cmd_run(c, log), kOk);
  const auto rows = lines_of(slurp(dir / "metrics.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], kCsvHeader);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(fields(rows[i]), fields(kCsvHeader));
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["command"], "run");
  EXPECT_TRUE(manifest.contains("instance_hash"));

  const fs::path again = scratch("run_again");
  Config re = load_config((dir / "manifest.json").string(), default_config("run"));
  EXPECT_EQ(re.algorithm, c.algorithm);
  re.run.out = again.string();
  ASSERT_EQ(cmd_run(re, log), kOk);
  EXPECT_EQ(slurp(again / "metrics.csv"), slurp(dir / "metrics.csv"));
}

TEST(Run, MultipleSeedsAndFedQ) {
  const fs::path dir = scratch("seeds");
  Config c = tiny_run(dir);
  c.run.seeds = 2;
  std::ostringstream log;
  ASSERT_EQ(cmd_run(c, log), kOk);
  EXPECT_TRUE(fs::exists(dir / "metrics_seed0.csv"));
  EXPECT_TRUE(fs::exists(dir / "metrics_seed1.csv"));
  EXPECT_NE(slurp(dir / "metrics_seed0.csv"), slurp(dir / "metrics_seed1.csv"));

  const fs::path qdir = scratch("fedq");
  Config q = tiny_run(qdir);
  q.algorithm.name = "fedq";
  ASSERT_EQ(cmd_run(q, log), kOk);
  const auto rows = lines_of(slurp(qdir / "metrics.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_NE(rows[1].find(",FedQ,"), std::string::npos);
}

TEST(Speedup, VariantFilterAndSummaryMeans) {
  const fs::path dir = scratch("speedup");
  Config c = default_config("speedup");
  c.instance.n_states = 3;
  c.instance.n_actions = 2;
  c.algorithm.rounds = 3;
  c.algorithm.batch = 2;
  c.algorithm.horizon = 8;
  c.algorithm.eta = 0.1;
  c.run.m_list = {1, 2};
  c.run.seeds = 3;
  c.run.out = dir.string();
  Overrides ov;
  ov.variant = "RS";
  apply_overrides(c, ov);
  std::ostringstream log;
  ASSERT_EQ(cmd_speedup(c, log), kOk);
  const auto rows = lines_of(slurp(dir / "speedup.csv"));
  ASSERT_EQ(rows.size(), 1u + 3u * 2u * 3u);
  // Recompute the round-3 mean for M=2 from the tidy CSV.
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::vector<std::string> f;
    std::istringstream in(rows[i]);
    for (std::string x; std::getline(in, x, ',');) f.push_back(x);
    EXPECT_EQ(f[2], "RS");
    if (f[1] == "3" && f[3] == "2") {
      sum += std::stod(f[12]);
      ++n;
    }
  }
  ASSERT_EQ(n, 3);
  double found = 0.0;
  for (const auto& l : lines_of(slurp(dir / "speedup_final.dat"))) {
    if (l.rfind("RS 2 ", 0) == 0) found = std::stod(l.substr(5));
  }
  EXPECT_NEAR(found, sum / 3, 1e-9);
}

TEST(Overrides, EnvironmentThreadsWins) {
  Config c = default_config("run");
  Overrides ov;
  ov.threads = 2;
  setenv("FEDPG_LAB_THREADS", "3", 1);
  apply_overrides(c, ov);
  EXPECT_EQ(c.run.threads, 3);
  setenv("FEDPG_LAB_THREADS", "zero", 1);
  EXPECT_THROW(apply_overrides(c, ov), Error);
  unsetenv("FEDPG_LAB_THREADS");
  apply_overrides(c, ov);
  EXPECT_EQ(c.run.threads, 2);
  ov.seeds = 0;
  EXPECT_THROW(apply_overrides(c, ov), Error);
}

TEST(ExitCodes, ThroughEntryPoint) {
  const fs::path dir = scratch("exit");
  std::string out, err;
  EXPECT_EQ(call({}, &out, &err), kUsage);
  EXPECT_EQ(call({"frobnicate"}), kUsage);
  spit(dir / "bad.json", R"({"instance": {"mm": 3}})");
  EXPECT_EQ(call({"run", "--config", (dir / "bad.json").string()}, &out, &err), kUsage);
  EXPECT_NE(err.find("instance.mm"), std::string::npos);
  EXPECT_EQ(call({"run", "--config", (dir / "missing.json").string()}), kRuntime);
  spit(dir / "ok.json", serialize_config(tiny_run(dir / "ok")));
  EXPECT_EQ(call({"run", "--config", (dir / "ok.json").string(), "--variant", "bRS"}), kOk);
  EXPECT_TRUE(fs::exists(dir / "ok" / "metrics.csv"));
}

TEST(Verify, PassesAndDetectsBrokenProjection) {
  const fs::path dir = scratch("verify");
  std::string out;
  EXPECT_EQ(call({"verify", "--out", (dir / "good").string()}, &out), kOk);
  const auto report = nlohmann::json::parse(slurp(dir / "good" / "verify_report.json"));
  EXPECT_TRUE(report["passed"].get<bool>());
  for (const char* key : {"separations", "bit_equivalence", "landscape", "lojasiewicz", "hyperplane"})
    EXPECT_TRUE(report.contains(key)) << key;
  EXPECT_EQ(call({"verify", "--out", (dir / "bad").string(), "--break-projection"}, &out), kCertification);
  EXPECT_NE(out.find("hyperplane invariant violated"), std::string::npos);
}

TEST(Eval, ObjectiveAndGradient) {
  const fs::path dir = scratch("eval");
  Config c = tiny_run(dir);
  c.algorithm.variant = "RS";
  spit(dir / "cfg.json", serialize_config(c));
  spit(dir / "theta.json", theta_to_json(Theta::Zero(3, 2)));
  std::string out;
  ASSERT_EQ(call({"eval", "--config", (dir / "cfg.json").string(), "--theta", (dir / "theta.json").string()}, &out),
            kOk);
  const auto j = nlohmann::json::parse(out);
  const FrlInstance inst = build_instance(c.instance);
  EXPECT_NEAR(j["objective"].get<double>(), objective(inst, Theta::Zero(3, 2), Variant::r(0.05)), 1e-12);
  EXPECT_NEAR(j["grad_norm"].get<double>(), exact_gradient(inst, Theta::Zero(3, 2), Variant::r(0.05)).norm(), 1e-12);
  spit(dir / "wrong.json", theta_to_json(Theta::Zero(4, 2)));
  EXPECT_EQ(call({"eval", "--config", (dir / "cfg.json").string(), "--theta", (dir / "wrong.json").string()}),
            kRuntime);
  EXPECT_EQ(call({"eval"}), kUsage);
}

TEST(Config, ShippedExamplesParse) {
  const fs::path dir = fs::path(FEDPG_SOURCE_DIR) / "configs";
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(e.path().string(), default_config("run"))) << e.path();
    ++n;
  }
  EXPECT_GE(n, 3);
}

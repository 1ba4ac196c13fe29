#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fedpg/fed_optimizer.hpp"
#include "fedpg/mdp.hpp"

namespace fedpg::cli {

enum Exit : int { kOk = 0, kUsage = 1, kRuntime = 2, kCertification = 3 };

struct InstanceSpec {
  std::string kind = "synthetic";  // synthetic, synthetic_extreme, gridworld, gridworld_extreme, counterexample, file
  int m = 10;
  int n_states = 5;
  int n_actions = 4;
  double eps = 0.3;
  std::uint64_t seed = 0;
  std::optional<double> gamma;  // builder default when empty
  std::string which = "fig2";
  std::string path;

  bool operator==(const InstanceSpec&) const = default;
};

struct AlgorithmSpec {
  std::string name = "fedpg";  // fedpg or fedq
  std::string variant = "S";
  double lambda = 0.05;
  int rounds = 200;
  int local_steps = 5;
  int batch = 10;
  int horizon = 50;
  std::optional<double> eta;  // empty means auto
  std::string projection = "default";
  std::optional<double> radius;
  double learning_rate = 0.1;
  std::optional<int> samples_per_step;  // defaults to batch * horizon

  bool operator==(const AlgorithmSpec&) const = default;
};

struct RunSpec {
  std::uint64_t seed = 0;
  int seeds = 1;  // speedup and compare-baseline default to 4
  std::vector<int> m_list{2, 10, 50};
  std::vector<std::string> variants{"S", "RS", "bRS"};
  int threads = 1;
  bool timing = false;
  std::string out = "out";

  bool operator==(const RunSpec&) const = default;
};

struct Config {
  InstanceSpec instance;
  AlgorithmSpec algorithm;
  RunSpec run;

  bool operator==(const Config&) const = default;
};

// Built-in defaults for a subcommand (run, speedup, compare-baseline, verify, eval).
Config default_config(const std::string& command);

// Keys absent from `text` keep their value from `base`. Throws
// Error(ConfigParseError) naming the offending key. A run manifest is
// accepted and its config snapshot is used.
Config parse_config(const std::string& text, const Config& base = {});
std::string serialize_config(const Config& cfg);
Config load_config(const std::string& path, const Config& base = {});

FrlInstance build_instance(const InstanceSpec& spec);
FedPgConfig fedpg_config(const Config& cfg, std::uint64_t seed);
FedQConfig fedq_config(const Config& cfg, std::uint64_t seed);

extern const char* const kCsvHeader;
extern const char* const kVersion;

std::string format_metrics_row(const RoundMetrics& m, const std::string& variant, int agents,
                               const AlgorithmSpec& alg, double eta, double lambda);

struct Overrides {
  std::optional<std::string> out;
  std::optional<int> seeds;
  std::optional<std::string> variant;
  std::optional<int> threads;
};

// Applies CLI overrides; FEDPG_LAB_THREADS takes precedence over --threads.
void apply_overrides(Config& cfg, const Overrides& ov);

struct VerifyOptions {
  bool break_projection = false;  // fault injection for tests
  int random_cases = 20;
};

struct BaselineCurve {
  std::string instance;   // synthetic_extreme or gridworld_extreme
  std::string algorithm;  // S, RS, bRS or FedQ
  int seed = 0;
  double eta = 0.0;
  std::vector<RoundMetrics> metrics;
};

// FedPG variants from run.variants plus Fed-Q on both extreme instances.
std::vector<BaselineCurve> compare_baseline(const Config& cfg);

int cmd_run(const Config& cfg, std::ostream& log);
int cmd_speedup(const Config& cfg, std::ostream& log);
int cmd_compare_baseline(const Config& cfg, std::ostream& log);
int cmd_verify(const Config& cfg, const VerifyOptions& opts, std::ostream& log);
int cmd_eval(const Config& cfg, const std::string& theta_path, std::ostream& out);

// Entry point used by main; returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace fedpg::cli

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedpg/exact_eval.hpp"
#include "fedpg/mdp.hpp"
#include "fedpg/policy.hpp"
#include "fedpg/rng.hpp"

namespace fedpg {

enum class PgVariant { S, RS, BRS };

const char* variant_name(PgVariant v);
PgVariant variant_from_name(const std::string& name);

enum class ProjectionKind { None, Ball };

struct FedPgConfig {
  PgVariant variant = PgVariant::S;
  double lambda = 0.05;
  int rounds = 200;
  int local_steps = 5;
  int batch = 10;
  int horizon = 50;
  std::optional<double> eta;  // empty means auto
  // Empty picks the variant default: ball for bRS, none otherwise.
  std::optional<ProjectionKind> projection;
  std::optional<double> radius;  // overrides the ball radius
  std::uint64_t master_seed = 0;
  int threads = 1;
  bool timing = false;  // wall_ms stays 0 unless set, keeping CSV output reproducible

  void validate() const;
  ProjectionKind effective_projection() const;
};

struct RoundMetrics {
  int round = 0;
  double objective = 0.0;
  double raw_return = 0.0;
  double grad_norm = 0.0;
  double subopt = 0.0;
  double mu_diag = 0.0;
  double theta_linf = 0.0;
  double wall_ms = 0.0;
};

// Optional overrides used by tests.
struct FedPgHooks {
  // Replaces the stochastic estimator: (agent index, local theta) -> gradient.
  std::function<Matrix(int, const Theta&)> gradient;
  // Collapses the agent index in stream keys so all agents draw the same samples.
  bool shared_agent_streams = false;
  // Applied to the server parameter after averaging and projection.
  std::function<void(Theta&)> post_server;
  // Called with every server parameter and whether projection changed it.
  std::function<void(int round, const Theta& before, const Theta& after)> on_server;
};

struct FedPgResult {
  std::vector<RoundMetrics> metrics;
  Theta theta;
  double eta = 0.0;
  double j_star = 0.0;
};

double auto_step_size(const FrlInstance& inst, const FedPgConfig& cfg);
double smoothness_constant(const FrlInstance& inst, const FedPgConfig& cfg);

FedPgResult run_fedpg(const FrlInstance& inst, const FedPgConfig& cfg,
                      const FedPgHooks& hooks = {});

struct FedQConfig {
  int rounds = 200;
  int local_steps = 5;
  int samples_per_step = 500;
  double learning_rate = 0.1;
  std::uint64_t master_seed = 0;
  int threads = 1;
  bool timing = false;

  void validate() const;
};

struct FedQResult {
  std::vector<RoundMetrics> metrics;
  Matrix q;
  Policy greedy;
  double j_star = 0.0;
};

Policy greedy_policy(const Matrix& q);
FedQResult run_fed_q(const FrlInstance& inst, const FedQConfig& cfg);

struct SpeedupSpec {
  int n_states = 5;
  int n_actions = 4;
  double eps = 0.3;
  double gamma = 0.9;
  std::vector<int> m_list{2, 10, 50};
  std::vector<PgVariant> variants{PgVariant::S, PgVariant::RS, PgVariant::BRS};
  int seeds = 4;
  std::uint64_t base_seed = 0;
  FedPgConfig cfg;
};

struct SpeedupCurve {
  PgVariant variant;
  int m;
  int seed;
  double eta;
  std::vector<RoundMetrics> metrics;
};

std::vector<SpeedupCurve> speedup_experiment(const SpeedupSpec& spec);

// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace fedpg

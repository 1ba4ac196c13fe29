#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fedpg/builders.hpp"
#include "fedpg/exact_eval.hpp"
#include "fedpg/extended.hpp"
#include "fedpg/mdp.hpp"
#include "fedpg/policy.hpp"

namespace fedpg {

struct PolicyValue {
  Policy policy;
  double value = 0.0;
};

PolicyValue best_deterministic(const FrlInstance& inst);
PolicyValue best_stationary(const FrlInstance& inst, int grid = 201);

// Closed forms for the stationary value along the single free row.
double fig3_stationary_closed_form(double p, double gamma);   // p = pi(a0 | s3)
double fig4_stationary_closed_form(double p, double gamma);   // p = pi(a0 | s2)
double fig3_v2_closed_form(double p, double gamma);           // agent 2 value from s0

// Exact value of a time-varying Markov policy: prefix[t] used at step t,
// tail used from step prefix.size() onward.
Vector eval_time_varying(const Mdp& mdp, const std::vector<Policy>& prefix, const Policy& tail);

// Best value over policies that see only their own history, found by exact
// value iteration on the reachable belief space over agent identity.
double best_local_history_value(const FrlInstance& inst, int max_beliefs = 100000);

struct ScriptedValues {
  double scripted = 0.0;    // value of the witness policy
  double reference = 0.0;   // best value of the competing class
  std::string method;
};

ScriptedValues scripted_class_values(Counterexample which);

enum class SeparationKind { DetLtSta, StaLtLocal, LocalLtGlobal };
const char* separation_name(SeparationKind k);

struct SeparationCertificate {
  SeparationKind which;
  double lhs_value = 0.0;
  double rhs_value = 0.0;
  double margin = 0.0;
  std::string method;
  bool passed = false;
};

// Throws CertificationFailure when any margin is not positive.
std::vector<SeparationCertificate> certify_separations();
std::vector<SeparationCertificate> compute_separations();

double verify_bit_equivalence(const FrlInstance& padded, const Theta& theta, double lambda);

struct LandscapeScan {
  std::vector<double> theta;
  std::vector<double> closed_form;   // averaged objective
  std::vector<double> pipeline;      // averaged objective
  std::vector<std::vector<double>> agent_pipeline;
  double max_deviation = 0.0;
  int interior_min_index = -1;
  double interior_min_depth = 0.0;
  std::vector<int> agent_interior_mins;  // count per agent
};

struct LojaSweep {
  int checks = 0;
  int violations_sm = 0;
  int violations_r = 0;
  double min_slack_sm = std::numeric_limits<double>::infinity();  // |grad|^2 - 2 mu gap^2
  double min_slack_r = std::numeric_limits<double>::infinity();   // |grad|^2 - 2 mu gap
};

// Per-agent check of both inequalities at n_theta random parameters with
// entries uniform in [-scale, scale]. Counts violations beyond `slack`.
LojaSweep loja_sweep(const FrlInstance& inst, double lambda, int n_theta, std::uint64_t seed,
                     double scale = 3.0, double slack = 1e-9);

double fig5_closed_form(double theta, double p, double q, double gamma, double lambda);
LandscapeScan landscape_scan_fig5(const Fig5Params& params = {}, int points = 2001,
                                  double lo = -10.0, double hi = 10.0);
Theta fig5_theta(double t);

// Indices whose value is below both neighbours by more than depth.
std::vector<int> strict_interior_minima(const std::vector<double>& values, double depth);

}  // namespace fedpg

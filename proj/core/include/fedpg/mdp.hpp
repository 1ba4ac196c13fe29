#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fedpg/error.hpp"

namespace fedpg {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Tabular discounted MDP. Kernel rows are indexed by s * n_actions + a.
struct Mdp {
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.0;
  Matrix kernel;  // (S*A) x S
  Matrix reward;  // S x A
  Vector rho;     // S

  int row(int s, int a) const { return s * n_actions + a; }
  double p(int s, int a, int next) const { return kernel(row(s, a), next); }

  // Checks shapes, simplex rows, finite rewards, gamma in [0,1).
  void validate() const;
};

bool rewards_in_unit_interval(const Mdp& mdp);

// Set of agents sharing states, actions, gamma, reward and rho.
struct FrlInstance {
  std::vector<Mdp> agents;

  int m() const { return static_cast<int>(agents.size()); }
  const Mdp& front() const { return agents.front(); }
  int n_states() const { return front().n_states; }
  int n_actions() const { return front().n_actions; }
  double gamma() const { return front().gamma; }
  const Matrix& reward() const { return front().reward; }
  const Vector& rho() const { return front().rho; }
};

struct HeterogeneityReport {
  double epsilon_p = 0.0;
  int agent_a = 0;
  int agent_b = 0;
  int state = 0;
  int action = 0;
};

inline constexpr double kSimplexTol = 1e-12;

FrlInstance new_frl_instance(std::vector<Mdp> mdps);
HeterogeneityReport heterogeneity(const FrlInstance& inst);
Matrix mixture_kernel(const Matrix& common, const Matrix& individual, double eps);

// Discounted kernel under a policy: P_pi(s, s') = sum_a pi(a|s) P(s'|s,a).
Matrix policy_kernel(const Mdp& mdp, const Matrix& pi);

std::string instance_to_json(const FrlInstance& inst, int indent = -1);
FrlInstance instance_from_json(const std::string& text);

// FNV-1a over the canonical JSON encoding.
std::string instance_hash(const FrlInstance& inst);

}  // namespace fedpg

#pragma once

#include <vector>

#include "fedpg/mdp.hpp"
#include "fedpg/policy.hpp"

namespace fedpg {

struct ValueBundle {
  Vector v;
  Matrix q;
  Matrix adv;
};

// Objective selector: plain return, entropy-regularized, or bit-level.
struct Variant {
  enum class Kind { Sm, R, B };
  Kind kind = Kind::Sm;
  double lambda = 0.0;

  static Variant sm() { return {Kind::Sm, 0.0}; }
  static Variant r(double lambda) { return {Kind::R, lambda}; }
  static Variant b(double lambda) { return {Kind::B, lambda}; }
};

// Solves (I - gamma P_pi) V = r_pi with reward table `reward`.
Vector solve_values(const Mdp& mdp, const Policy& pi, const Matrix& reward);

ValueBundle policy_eval(const Mdp& mdp, const Policy& pi);
Vector occupancy(const Mdp& mdp, const Policy& pi, const Vector& start);
ValueBundle reg_policy_eval(const Mdp& mdp, const Policy& pi, double lambda);
// Same as above but with log pi supplied directly (no log of probabilities).
ValueBundle reg_policy_eval_log(const Mdp& mdp, const Policy& pi, const Matrix& log_pi,
                                double lambda);

// Phi(s,a) = -sum_p gbar^p log pibar(bit_p | (s, prefix_p)).
Matrix bit_entropy_term(const Theta& theta, const BitCodec& codec, double gamma);
ValueBundle bit_reg_policy_eval(const Mdp& mdp, const Theta& theta, const BitCodec& codec,
                                double lambda);

double objective(const FrlInstance& inst, const Theta& theta, const Variant& variant);
std::vector<double> agent_objectives(const FrlInstance& inst, const Theta& theta,
                                     const Variant& variant);

struct Optima {
  std::vector<Vector> values;
  std::vector<Policy> policies;
  std::vector<double> f;  // rho . V*_c
  double j_star = 0.0;    // average of f
};

// Variant Sm: value iteration with greedy policies. Variant R: soft value iteration.
Optima optimal_values(const FrlInstance& inst, const Variant& variant);

Matrix agent_gradient(const Mdp& mdp, const Theta& theta, const Variant& variant);
Matrix exact_gradient(const FrlInstance& inst, const Theta& theta, const Variant& variant);

struct LojaDiagnostics {
  double mu_sm = 0.0;
  double mu_r = 0.0;
  double mu_b_lower = 0.0;
  double log_mu_b_lower = 0.0;
  double log_mu_sm = 0.0;  // same quantities in log space, finite where the above underflow
  double log_mu_r = 0.0;
  std::vector<double> per_agent_sm;
  std::vector<double> per_agent_r;
};

double mu_b_lower_bound(double gamma, double lambda, int n_states, int n_actions, double min_rho,
                        double* log_value = nullptr);

// Reusable pieces of the diagnostics that depend on the instance only.
struct LojaReference {
  std::vector<Policy> det_opt;    // greedy optimal policies
  std::vector<Vector> det_occ;    // their occupancies
  std::vector<Vector> soft_occ;   // occupancies of the soft optima at lambda
  double lambda = 0.0;
};

LojaReference loja_reference(const FrlInstance& inst, double lambda);
LojaDiagnostics loja_diagnostics(const FrlInstance& inst, const Theta& theta, double lambda);
LojaDiagnostics loja_diagnostics(const FrlInstance& inst, const Theta& theta,
                                 const LojaReference& ref);

}  // namespace fedpg

#include "fedpg/exact_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedpg/extended.hpp"

namespace fedpg {

namespace {

Matrix q_from_values(const Mdp& mdp, const Vector& v) {
  Vector kv = mdp.kernel * v;
  Matrix q(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) q(s, a) = mdp.reward(s, a) + mdp.gamma * kv(mdp.row(s, a));
  return q;
}

Vector solve_system(const Matrix& a, const Vector& b) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Vector x = lu.solve(b);
  if (!x.allFinite()) throw Error(ErrorCode::SolveFailure, "linear system produced non-finite values");
  return x;
}

double row_dot(const Vector& rho, const Vector& v) { return rho.dot(v); }

}  // namespace

namespace {

// adv(s,a) = sum_b pi(b|s) (x(s,a) - x(s,b)), which stays accurate when one
// action carries almost all the mass.
Matrix centered_advantage(const Policy& pi, const Matrix& x) {
  Matrix adv(x.rows(), x.cols());
  for (int s = 0; s < x.rows(); ++s)
    for (int a = 0; a < x.cols(); ++a) {
      double acc = 0.0;
      for (int b = 0; b < x.cols(); ++b) acc += pi(s, b) * (x(s, a) - x(s, b));
      adv(s, a) = acc;
    }
  return adv;
}

}  // namespace

Vector solve_values(const Mdp& mdp, const Policy& pi, const Matrix& reward) {
  const int ns = mdp.n_states;
  if (pi.rows() != ns || pi.cols() != mdp.n_actions) {
    throw Error(ErrorCode::ShapeMismatch, "policy shape does not match the MDP");
  }
  Matrix a = Matrix::Identity(ns, ns) - mdp.gamma * policy_kernel(mdp, pi);
  Vector r = pi.cwiseProduct(reward).rowwise().sum();
  return solve_system(a, r);
}

ValueBundle policy_eval(const Mdp& mdp, const Policy& pi) {
  ValueBundle vb;
  vb.v = solve_values(mdp, pi, mdp.reward);
  vb.q = q_from_values(mdp, vb.v);
  vb.adv = centered_advantage(pi, vb.q);
  return vb;
}

Vector occupancy(const Mdp& mdp, const Policy& pi, const Vector& start) {
  const int ns = mdp.n_states;
  Matrix a = Matrix::Identity(ns, ns) - mdp.gamma * policy_kernel(mdp, pi).transpose();
  return solve_system(a, (1.0 - mdp.gamma) * start);
}

ValueBundle reg_policy_eval_log(const Mdp& mdp, const Policy& pi, const Matrix& log_pi,
                                double lambda) {
  if (lambda == 0.0) return policy_eval(mdp, pi);
  ValueBundle vb;
  vb.v = solve_values(mdp, pi, mdp.reward - lambda * log_pi);
  vb.q = q_from_values(mdp, vb.v);
  vb.adv = centered_advantage(pi, vb.q - lambda * log_pi);
  return vb;
}

ValueBundle reg_policy_eval(const Mdp& mdp, const Policy& pi, double lambda) {
  if (lambda > 0.0 && (pi.array() <= 0.0).any()) {
    throw Error(ErrorCode::DegeneratePolicy, "regularized evaluation needs a strictly positive policy");
  }
  return reg_policy_eval_log(mdp, pi, pi.array().log().matrix(), lambda);
}

Matrix bit_entropy_term(const Theta& theta, const BitCodec& codec, double gamma) {
  const Matrix lbar = log_softmax(theta);
  const int ns = static_cast<int>(theta.rows()) / codec.n_nodes();
  const double gbar = std::pow(gamma, 1.0 / codec.k());
  Matrix phi = Matrix::Zero(ns, codec.n_actions());
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < codec.n_actions(); ++a) {
      double acc = 0.0;
      double w = 1.0;
      for (int p = 0; p < codec.k(); ++p) {
        acc -= w * lbar(codec.ext_state(s, codec.prefix_node(a, p)), codec.bit(a, p));
        w *= gbar;
      }
      phi(s, a) = acc;
    }
  }
  return phi;
}

ValueBundle bit_reg_policy_eval(const Mdp& mdp, const Theta& theta, const BitCodec& codec,
                                double lambda) {
  if (mdp.n_actions != codec.n_actions()) {
    throw Error(ErrorCode::CodecMismatch, "MDP action count does not match the codec");
  }
  if (theta.rows() != codec.ext_rows(mdp.n_states) || theta.cols() != 2) {
    throw Error(ErrorCode::CodecMismatch, "bit-level theta has the wrong shape");
  }
  const Policy pi = bit_policy(theta, codec);
  const Matrix phi = bit_entropy_term(theta, codec, mdp.gamma);
  ValueBundle vb;
  vb.v = solve_values(mdp, pi, mdp.reward + lambda * phi);
  vb.q = q_from_values(mdp, vb.v);
  vb.adv = centered_advantage(pi, vb.q + lambda * phi);
  return vb;
}

namespace {

double agent_objective(const Mdp& mdp, const Theta& theta, const Variant& variant) {
  switch (variant.kind) {
    case Variant::Kind::Sm:
      return row_dot(mdp.rho, policy_eval(mdp, softmax_policy(theta)).v);
    case Variant::Kind::R:
      return row_dot(mdp.rho, reg_policy_eval_log(mdp, softmax_policy(theta), log_softmax(theta),
                                                  variant.lambda).v);
    case Variant::Kind::B: {
      const BitCodec codec = BitCodec::for_actions(mdp.n_actions);
      return row_dot(mdp.rho, bit_reg_policy_eval(mdp, theta, codec, variant.lambda).v);
    }
  }
  return 0.0;
}

void check_theta(const FrlInstance& inst, const Theta& theta, const Variant& variant) {
  if (variant.kind == Variant::Kind::B) return;  // checked in bit_reg_policy_eval
  if (theta.rows() != inst.n_states() || theta.cols() != inst.n_actions()) {
    throw Error(ErrorCode::ShapeMismatch, "theta shape does not match S x A");
  }
}

}  // namespace

std::vector<double> agent_objectives(const FrlInstance& inst, const Theta& theta,
                                     const Variant& variant) {
  check_theta(inst, theta, variant);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(inst.m()));
  for (const Mdp& m : inst.agents) out.push_back(agent_objective(m, theta, variant));
  return out;
}

double objective(const FrlInstance& inst, const Theta& theta, const Variant& variant) {
  const auto f = agent_objectives(inst, theta, variant);
  double acc = 0.0;
  for (double x : f) acc += x;
  return acc / static_cast<double>(f.size());
}

namespace {

constexpr long kMaxIterations = 1000000;

Vector value_iteration(const Mdp& mdp, Policy* greedy) {
  Vector v = Vector::Zero(mdp.n_states);
  const double tol = 1e-10 * (1.0 - mdp.gamma);
  for (long it = 0; it < kMaxIterations; ++it) {
    const Matrix q = q_from_values(mdp, v);
    const Vector nv = q.rowwise().maxCoeff();
    const double delta = (nv - v).cwiseAbs().maxCoeff();
    v = nv;
    if (delta <= tol) {
      const Matrix qf = q_from_values(mdp, v);
      *greedy = Policy::Zero(mdp.n_states, mdp.n_actions);
      for (int s = 0; s < mdp.n_states; ++s) {
        int best = 0;
        for (int a = 1; a < mdp.n_actions; ++a)
          if (qf(s, a) > qf(s, best)) best = a;
        (*greedy)(s, best) = 1.0;
      }
      return v;
    }
  }
  throw Error(ErrorCode::NonConvergence, "value iteration hit the iteration cap");
}

Vector soft_value_iteration(const Mdp& mdp, double lambda, Policy* boltzmann) {
  Vector v = Vector::Zero(mdp.n_states);
  const double tol = 1e-10 * (1.0 - mdp.gamma);
  auto backup = [&](const Matrix& q) {
    Vector out(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
      const double mx = q.row(s).maxCoeff();
      double z = 0.0;
      for (int a = 0; a < mdp.n_actions; ++a) z += std::exp((q(s, a) - mx) / lambda);
      out(s) = mx + lambda * std::log(z);
    }
    return out;
  };
  for (long it = 0; it < kMaxIterations; ++it) {
    const Vector nv = backup(q_from_values(mdp, v));
    const double delta = (nv - v).cwiseAbs().maxCoeff();
    v = nv;
    if (delta <= tol) {
      const Matrix q = q_from_values(mdp, v);
      const Vector vv = backup(q);
      *boltzmann = Policy(mdp.n_states, mdp.n_actions);
      for (int s = 0; s < mdp.n_states; ++s) {
        double z = 0.0;
        for (int a = 0; a < mdp.n_actions; ++a) {
          (*boltzmann)(s, a) = std::exp((q(s, a) - vv(s)) / lambda);
          z += (*boltzmann)(s, a);
        }
        boltzmann->row(s) /= z;
      }
      return vv;
    }
  }
  throw Error(ErrorCode::NonConvergence, "soft value iteration hit the iteration cap");
}

}  // namespace

Optima optimal_values(const FrlInstance& inst, const Variant& variant) {
  if (variant.kind == Variant::Kind::B) {
    throw Error(ErrorCode::ConfigError, "bit-level optima are computed on the extended instance");
  }
  Optima out;
  for (const Mdp& m : inst.agents) {
    Policy pol;
    Vector v = (variant.kind == Variant::Kind::R && variant.lambda > 0.0)
                   ? soft_value_iteration(m, variant.lambda, &pol)
                   : value_iteration(m, &pol);
    out.f.push_back(row_dot(m.rho, v));
    out.values.push_back(std::move(v));
    out.policies.push_back(std::move(pol));
  }
  double acc = 0.0;
  for (double x : out.f) acc += x;
  out.j_star = acc / static_cast<double>(out.f.size());
  return out;
}

namespace {

Matrix softmax_gradient(const Mdp& mdp, const Theta& theta, double lambda) {
  const Policy pi = softmax_policy(theta);
  const ValueBundle vb = lambda > 0.0 ? reg_policy_eval_log(mdp, pi, log_softmax(theta), lambda)
                                      : policy_eval(mdp, pi);
  const Vector d = occupancy(mdp, pi, mdp.rho);
  Matrix g(theta.rows(), theta.cols());
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) g(s, a) = d(s) * pi(s, a) * vb.adv(s, a);
  return g / (1.0 - mdp.gamma);
}

}  // namespace

Matrix agent_gradient(const Mdp& mdp, const Theta& theta, const Variant& variant) {
  switch (variant.kind) {
    case Variant::Kind::Sm: return softmax_gradient(mdp, theta, 0.0);
    case Variant::Kind::R: return softmax_gradient(mdp, theta, variant.lambda);
    case Variant::Kind::B: {
      FrlInstance single;
      single.agents.push_back(mdp);
      const FrlInstance ext = extended_instance(single, BitCodec::for_actions(mdp.n_actions));
      return softmax_gradient(ext.front(), theta, variant.lambda);
    }
  }
  return {};
}

Matrix exact_gradient(const FrlInstance& inst, const Theta& theta, const Variant& variant) {
  check_theta(inst, theta, variant);
  const FrlInstance* target = &inst;
  FrlInstance ext;
  double lambda = variant.lambda;
  if (variant.kind == Variant::Kind::B) {
    ext = extended_instance(inst, BitCodec::for_actions(inst.n_actions()));
    if (theta.rows() != ext.n_states() || theta.cols() != 2) {
      throw Error(ErrorCode::CodecMismatch, "bit-level theta has the wrong shape");
    }
    target = &ext;
  } else if (variant.kind == Variant::Kind::Sm) {
    lambda = 0.0;
  }
  Matrix g = Matrix::Zero(theta.rows(), theta.cols());
  for (const Mdp& m : target->agents) g += softmax_gradient(m, theta, lambda);
  return g / static_cast<double>(target->m());
}

double mu_b_lower_bound(double gamma, double lambda, int n_states, int n_actions, double min_rho,
                        double* log_value) {
  int k = 1;
  while ((1 << k) < n_actions) ++k;
  if (!(lambda > 0.0) || !(min_rho > 0.0)) {
    if (log_value) *log_value = -std::numeric_limits<double>::infinity();
    return 0.0;
  }
  const double gbar = std::pow(gamma, 1.0 / k);
  const double lg = 3.0 * std::log(gamma) + std::log(lambda) + std::log1p(-gbar) -
                    k * std::log(4.0) - std::log(static_cast<double>(n_states)) +
                    2.0 * std::log(min_rho) -
                    4.0 * k * (1.0 + lambda * std::log(2.0)) / (lambda * (1.0 - gbar));
  if (log_value) *log_value = lg;
  return std::exp(lg);
}

LojaReference loja_reference(const FrlInstance& inst, double lambda) {
  LojaReference ref;
  ref.lambda = lambda;
  const Optima det = optimal_values(inst, Variant::sm());
  ref.det_opt = det.policies;
  for (int c = 0; c < inst.m(); ++c) {
    ref.det_occ.push_back(occupancy(inst.agents[c], det.policies[c], inst.rho()));
  }
  if (lambda > 0.0) {
    const Optima soft = optimal_values(inst, Variant::r(lambda));
    for (int c = 0; c < inst.m(); ++c) {
      ref.soft_occ.push_back(occupancy(inst.agents[c], soft.policies[c], inst.rho()));
    }
  }
  return ref;
}

namespace {

// max_s num(s) / den(s), with 0/0 read as 0.
double ratio_sup(const Vector& num, const Vector& den) {
  double out = 0.0;
  for (int s = 0; s < num.size(); ++s) {
    if (num(s) <= 0.0) continue;
    if (den(s) <= 0.0) return std::numeric_limits<double>::infinity();
    out = std::max(out, num(s) / den(s));
  }
  return out;
}

}  // namespace

LojaDiagnostics loja_diagnostics(const FrlInstance& inst, const Theta& theta,
                                 const LojaReference& ref) {
  check_theta(inst, theta, Variant::sm());
  LojaDiagnostics out;
  const int ns = inst.n_states();
  const Policy pi = softmax_policy(theta);
  const Matrix logpi = log_softmax(theta);
  const double min_pi = pi.minCoeff();
  const double log_min_pi = logpi.minCoeff();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  out.mu_sm = kInf;
  out.mu_r = kInf;
  out.log_mu_sm = kInf;
  out.log_mu_r = kInf;
  for (int c = 0; c < inst.m(); ++c) {
    const Mdp& m = inst.agents[c];
    const Vector d = occupancy(m, pi, m.rho);
    double min_star = 1.0;
    double log_min_star = 0.0;
    for (int s = 0; s < ns; ++s) {
      int astar = 0;
      for (int a = 1; a < m.n_actions; ++a)
        if (ref.det_opt[c](s, a) > ref.det_opt[c](s, astar)) astar = a;
      min_star = std::min(min_star, pi(s, astar));
      log_min_star = std::min(log_min_star, logpi(s, astar));
    }
    const double rs = ratio_sup(ref.det_occ[c], d);
    const double mu_sm = std::isinf(rs) ? 0.0 : min_star * min_star / (2.0 * ns * rs * rs);
    const double log_mu_sm = std::isinf(rs) ? -kInf
                                            : 2.0 * log_min_star - std::log(2.0 * ns) - 2.0 * std::log(rs);
    double mu_r = 0.0;
    double log_mu_r = -kInf;
    if (ref.lambda > 0.0) {
      const double rr = ratio_sup(ref.soft_occ[c], d);
      if (!std::isinf(rr)) {
        mu_r = ref.lambda * d.minCoeff() * min_pi * min_pi / (ns * (1.0 - m.gamma)) / rr;
        log_mu_r = std::log(ref.lambda) + std::log(d.minCoeff()) + 2.0 * log_min_pi -
                   std::log(ns * (1.0 - m.gamma)) - std::log(rr);
      }
    }
    out.log_mu_sm = std::min(out.log_mu_sm, log_mu_sm);
    out.log_mu_r = std::min(out.log_mu_r, log_mu_r);
    out.per_agent_sm.push_back(mu_sm);
    out.per_agent_r.push_back(mu_r);
    out.mu_sm = std::min(out.mu_sm, mu_sm);
    out.mu_r = std::min(out.mu_r, mu_r);
  }
  out.mu_b_lower = mu_b_lower_bound(inst.gamma(), ref.lambda, ns, inst.n_actions(),
                                    inst.rho().minCoeff(), &out.log_mu_b_lower);
  return out;
}

LojaDiagnostics loja_diagnostics(const FrlInstance& inst, const Theta& theta, double lambda) {
  return loja_diagnostics(inst, theta, loja_reference(inst, lambda));
}

}  // namespace fedpg

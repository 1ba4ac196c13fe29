#include "fedpg/sampling.hpp"

#include <cmath>

namespace fedpg {

Trajectory sample_trajectory(const Mdp& mdp, const Policy& pi, int horizon, Engine& eng) {
  if (horizon < 1) throw Error(ErrorCode::ConfigError, "horizon must be >= 1");
  Trajectory tr;
  tr.states.resize(static_cast<std::size_t>(horizon));
  tr.actions.resize(static_cast<std::size_t>(horizon));
  int s = draw_index(mdp.rho.data(), mdp.n_states, 1, eng);
  for (int t = 0; t < horizon; ++t) {
    const int a = draw_index(pi.row(s).data(), mdp.n_actions, 1, eng);
    tr.states[static_cast<std::size_t>(t)] = s;
    tr.actions[static_cast<std::size_t>(t)] = a;
    if (t + 1 < horizon) s = draw_index(mdp.kernel.row(mdp.row(s, a)).data(), mdp.n_states, 1, eng);
  }
  return tr;
}

namespace {

void check_batch(int batch, int horizon) {
  if (batch < 1 || horizon < 1) throw Error(ErrorCode::ConfigError, "batch and horizon must be >= 1");
}

// Contribution sum_t g^t (sum_{l<=t} score_l) R_t = sum_l score_l * sum_{t>=l} g^t R_t,
// added into `out`. rows[l] and cols[l] locate the score row and chosen column.
void add_contribution(const std::vector<int>& rows, const std::vector<int>& cols,
                      const std::vector<double>& rewards, double discount, const Policy& probs,
                      std::vector<double>& tail, Matrix& out) {
  const std::size_t n = rows.size();
  tail.resize(n);
  double w = 1.0;
  for (std::size_t t = 0; t < n; ++t) {
    tail[t] = w * rewards[t];
    w *= discount;
  }
  for (std::size_t t = n - 1; t-- > 0;) tail[t] += tail[t + 1];
  for (std::size_t l = 0; l < n; ++l) {
    const int r = rows[l];
    const double g = tail[l];
    for (int b = 0; b < probs.cols(); ++b) out(r, b) -= g * probs(r, b);
    out(r, cols[l]) += g;
  }
}

GradSample softmax_estimator(const Mdp& mdp, const Theta& theta, int batch, int horizon,
                             double lambda, const StreamKey& key, const SampleObserver* observer) {
  check_batch(batch, horizon);
  if (theta.rows() != mdp.n_states || theta.cols() != mdp.n_actions) {
    throw Error(ErrorCode::ShapeMismatch, "theta shape does not match S x A");
  }
  const Policy pi = softmax_policy(theta);
  const Matrix logpi = log_softmax(theta);
  GradSample out{Matrix::Zero(theta.rows(), theta.cols()), batch, horizon};
  Matrix single;
  std::vector<double> rewards(static_cast<std::size_t>(horizon));
  std::vector<double> tail;
  for (int b = 0; b < batch; ++b) {
    Engine eng = make_engine(key, static_cast<std::uint64_t>(b));
    const Trajectory tr = sample_trajectory(mdp, pi, horizon, eng);
    for (int t = 0; t < horizon; ++t) {
      const int s = tr.states[static_cast<std::size_t>(t)];
      const int a = tr.actions[static_cast<std::size_t>(t)];
      rewards[static_cast<std::size_t>(t)] = mdp.reward(s, a) - lambda * logpi(s, a);
    }
    if (observer) {
      single = Matrix::Zero(theta.rows(), theta.cols());
      add_contribution(tr.states, tr.actions, rewards, mdp.gamma, pi, tail, single);
      (*observer)(single);
      out.grad += single;
    } else {
      add_contribution(tr.states, tr.actions, rewards, mdp.gamma, pi, tail, out.grad);
    }
  }
  out.grad /= static_cast<double>(batch);
  return out;
}

}  // namespace

GradSample reinforce_grad_sm(const Mdp& mdp, const Theta& theta, int batch, int horizon,
                             const StreamKey& key, const SampleObserver* observer) {
  return softmax_estimator(mdp, theta, batch, horizon, 0.0, key, observer);
}

GradSample reinforce_grad_reg(const Mdp& mdp, const Theta& theta, int batch, int horizon,
                              double lambda, const StreamKey& key, const SampleObserver* observer) {
  return softmax_estimator(mdp, theta, batch, horizon, lambda, key, observer);
}

GradSample reinforce_grad_bit(const Mdp& mdp, const Theta& theta, const BitCodec& codec, int batch,
                              int horizon, double lambda, const StreamKey& key,
                              const SampleObserver* observer) {
  check_batch(batch, horizon);
  if (mdp.n_actions != codec.n_actions()) {
    throw Error(ErrorCode::CodecMismatch, "MDP action count does not match the codec");
  }
  if (theta.rows() != codec.ext_rows(mdp.n_states) || theta.cols() != 2) {
    throw Error(ErrorCode::CodecMismatch, "bit-level theta has the wrong shape");
  }
  const int k = codec.k();
  const Policy pibar = softmax_policy(theta);
  const Matrix logbar = log_softmax(theta);
  const Policy pi = bit_policy(theta, codec);
  const double gbar = std::pow(mdp.gamma, 1.0 / k);
  const double leaf_scale = std::pow(gbar, -(k - 1));
  const std::size_t steps = static_cast<std::size_t>(horizon) * static_cast<std::size_t>(k);

  GradSample out{Matrix::Zero(theta.rows(), 2), batch, horizon};
  std::vector<int> rows(steps), cols(steps);
  std::vector<double> rewards(steps), tail;
  Matrix single;
  for (int b = 0; b < batch; ++b) {
    Engine eng = make_engine(key, static_cast<std::uint64_t>(b));
    const Trajectory tr = sample_trajectory(mdp, pi, horizon, eng);
    std::size_t tau = 0;
    for (int t = 0; t < horizon; ++t) {
      const int s = tr.states[static_cast<std::size_t>(t)];
      const int a = tr.actions[static_cast<std::size_t>(t)];
      for (int p = 0; p < k; ++p, ++tau) {
        const int e = codec.ext_state(s, codec.prefix_node(a, p));
        const int bit = codec.bit(a, p);
        rows[tau] = e;
        cols[tau] = bit;
        rewards[tau] = (p == k - 1 ? leaf_scale * mdp.reward(s, a) : 0.0) - lambda * logbar(e, bit);
      }
    }
    if (observer) {
      single = Matrix::Zero(theta.rows(), 2);
      add_contribution(rows, cols, rewards, gbar, pibar, tail, single);
      (*observer)(single);
      out.grad += single;
    } else {
      add_contribution(rows, cols, rewards, gbar, pibar, tail, out.grad);
    }
  }
  out.grad /= static_cast<double>(batch);
  return out;
}

GradSample reinforce_grad(const Mdp& mdp, const Theta& theta, const Variant& variant, int batch,
                          int horizon, const StreamKey& key, const SampleObserver* observer) {
  switch (variant.kind) {
    case Variant::Kind::Sm: return reinforce_grad_sm(mdp, theta, batch, horizon, key, observer);
    case Variant::Kind::R:
      return reinforce_grad_reg(mdp, theta, batch, horizon, variant.lambda, key, observer);
    case Variant::Kind::B:
      return reinforce_grad_bit(mdp, theta, BitCodec::for_actions(mdp.n_actions), batch, horizon,
                                variant.lambda, key, observer);
  }
  return {};
}

EstimatorBounds estimator_bounds(const Variant& variant, double gamma, int n_actions, int batch,
                                 int horizon) {
  EstimatorBounds b;
  double g = gamma;
  double h = horizon;
  double ent = 0.0;
  if (variant.kind == Variant::Kind::R) {
    ent = variant.lambda * std::log(static_cast<double>(n_actions));
  } else if (variant.kind == Variant::Kind::B) {
    int k = 1;
    while ((1 << k) < n_actions) ++k;
    g = std::pow(gamma, 1.0 / k);
    h = static_cast<double>(k) * horizon;
    ent = variant.lambda * std::log(2.0);
  }
  const double om = 1.0 - g;
  b.bias = 2.0 * (1.0 + ent) * std::pow(g, h) / om * (h + 1.0 / om);
  b.variance = (12.0 + 24.0 * ent * ent) / (batch * std::pow(om, 4));
  b.fourth = (1120.0 + 4480.0 * std::pow(ent, 4)) / (static_cast<double>(batch) * batch * std::pow(om, 8));
  return b;
}

ProbeResult estimator_probe(const FrlInstance& inst, const Theta& theta, const Variant& variant,
                            int batch, int horizon, int n_reps, std::uint64_t seed) {
  if (n_reps < 2) throw Error(ErrorCode::ConfigError, "estimator probe needs at least 2 repetitions");
  ProbeResult res;
  res.exact = exact_gradient(inst, theta, variant);
  std::vector<Matrix> draws;
  draws.reserve(static_cast<std::size_t>(n_reps));
  res.mean = Matrix::Zero(theta.rows(), theta.cols());
  for (int i = 0; i < n_reps; ++i) {
    Matrix g = Matrix::Zero(theta.rows(), theta.cols());
    for (int c = 0; c < inst.m(); ++c) {
      StreamKey key{seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(c), 0};
      g += reinforce_grad(inst.agents[c], theta, variant, batch, horizon, key).grad;
    }
    g /= static_cast<double>(inst.m());
    res.mean += g;
    draws.push_back(std::move(g));
  }
  res.mean /= static_cast<double>(n_reps);
  double m2 = 0.0, m4 = 0.0;
  for (const Matrix& g : draws) {
    const double sq = (g - res.mean).squaredNorm();
    m2 += sq;
    m4 += sq * sq;
  }
  res.emp_variance = m2 / (n_reps - 1);
  res.emp_fourth_moment = m4 / n_reps;
  res.mean_se = std::sqrt(res.emp_variance / n_reps);
  res.bias_norm = (res.mean - res.exact).norm();
  res.bounds = estimator_bounds(variant, inst.gamma(), inst.n_actions(), batch, horizon);
  return res;
}

}  // namespace fedpg

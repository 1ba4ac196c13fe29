#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "fedpg/builders.hpp"
#include "fedpg/exact_eval.hpp"
#include "fedpg/mdp.hpp"
#include "fedpg/policy.hpp"

namespace fedpg::testing {

inline Theta random_theta(int rows, int cols, std::mt19937_64& rng, double scale = 2.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Theta th(rows, cols);
  for (int i = 0; i < th.size(); ++i) th.data()[i] = u(rng);
  return th;
}

// Random parameter with zero row sums.
inline Theta random_hyperplane_theta(int rows, int cols, std::mt19937_64& rng, double scale = 2.0) {
  Theta th = random_theta(rows, cols, rng, scale);
  for (int s = 0; s < rows; ++s) th.row(s).array() -= th.row(s).mean();
  return th;
}

inline Matrix fd_gradient(const std::function<double(const Theta&)>& f, const Theta& theta,
                          double h = 1e-5) {
  Matrix g(theta.rows(), theta.cols());
  Theta t = theta;
  for (int i = 0; i < theta.size(); ++i) {
    const double x = t.data()[i];
    t.data()[i] = x + h;
    const double up = f(t);
    t.data()[i] = x - h;
    const double dn = f(t);
    t.data()[i] = x;
    g.data()[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

// rho^T sum_t gamma^t P^t (1 - gamma), truncated at n terms.
inline Vector series_occupancy(const Mdp& mdp, const Policy& pi, int n) {
  Matrix p = Matrix::Zero(mdp.n_states, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) p.row(s) += pi(s, a) * mdp.kernel.row(mdp.row(s, a));
  Eigen::RowVectorXd row = mdp.rho.transpose();
  Vector acc = Vector::Zero(mdp.n_states);
  double w = 1.0;
  for (int t = 0; t < n; ++t) {
    acc += w * row.transpose();
    row = row * p;
    w *= mdp.gamma;
  }
  return (1.0 - mdp.gamma) * acc;
}

// Value by fixed-point iteration, independent of the linear solve.
inline Vector iterate_values(const Mdp& mdp, const Policy& pi, const Matrix& reward, int iters = 2000) {
  Vector v = Vector::Zero(mdp.n_states);
  for (int it = 0; it < iters; ++it) {
    Vector next(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
      double acc = 0.0;
      for (int a = 0; a < mdp.n_actions; ++a) {
        acc += pi(s, a) * (reward(s, a) + mdp.gamma * mdp.kernel.row(mdp.row(s, a)).dot(v));
      }
      next(s) = acc;
    }
    v = next;
  }
  return v;
}

// Exact expectation of the T-truncated REINFORCE estimator for a single
// agent, by enumerating every (s_0, a_0, ..., s_{T-1}, a_{T-1}) path.
// reward_fn(s, a) gives the per-step reward used by the estimator.
inline Matrix truncated_gradient_oracle(const Mdp& mdp, const Theta& theta, int horizon,
                                        const std::function<double(int, int)>& reward_fn) {
  const Policy pi = softmax_policy(theta);
  Matrix out = Matrix::Zero(theta.rows(), theta.cols());
  std::vector<int> st(static_cast<std::size_t>(horizon)), ac(static_cast<std::size_t>(horizon));
  std::function<void(int, int, double)> rec = [&](int t, int s, double prob) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double pa = prob * pi(s, a);
      if (pa == 0.0) continue;
      st[static_cast<std::size_t>(t)] = s;
      ac[static_cast<std::size_t>(t)] = a;
      if (t + 1 == horizon) {
        // Full path: sum_t g^t R_t * sum_{l<=t} score_l.
        Matrix score = Matrix::Zero(theta.rows(), theta.cols());
        double w = 1.0;
        for (int u = 0; u < horizon; ++u) {
          const int su = st[static_cast<std::size_t>(u)], au = ac[static_cast<std::size_t>(u)];
          score.row(su) -= pi.row(su);
          score(su, au) += 1.0;
          out += pa * w * reward_fn(su, au) * score;
          w *= mdp.gamma;
        }
      } else {
        for (int n = 0; n < mdp.n_states; ++n) {
          const double pn = mdp.p(s, a, n);
          if (pn > 0.0) rec(t + 1, n, pa * pn);
        }
      }
    }
  };
  for (int s = 0; s < mdp.n_states; ++s)
    if (mdp.rho(s) > 0.0) rec(0, s, mdp.rho(s));
  return out;
}

inline double rel_err(const Matrix& a, const Matrix& b, double floor = 1e-3) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

}  // namespace fedpg::testing

#include "fedpg/policy.hpp"

#include <cmath>

namespace fedpg {

Matrix log_softmax(const Theta& theta) {
  Matrix out(theta.rows(), theta.cols());
  for (int s = 0; s < theta.rows(); ++s) {
    const double mx = theta.row(s).maxCoeff();
    double z = 0.0;
    for (int a = 0; a < theta.cols(); ++a) z += std::exp(theta(s, a) - mx);
    const double lz = std::log(z);
    for (int a = 0; a < theta.cols(); ++a) out(s, a) = theta(s, a) - mx - lz;
  }
  return out;
}

Policy softmax_policy(const Theta& theta) {
  Policy pi(theta.rows(), theta.cols());
  for (int s = 0; s < theta.rows(); ++s) {
    const double mx = theta.row(s).maxCoeff();
    double z = 0.0;
    for (int a = 0; a < theta.cols(); ++a) {
      pi(s, a) = std::exp(theta(s, a) - mx);
      z += pi(s, a);
    }
    pi.row(s) /= z;
  }
  return pi;
}

Matrix grad_log_policy(const Theta& theta, int s, int a) {
  Matrix g = Matrix::Zero(theta.rows(), theta.cols());
  const Policy row = softmax_policy(theta.row(s));
  for (int b = 0; b < theta.cols(); ++b) g(s, b) = (b == a ? 1.0 : 0.0) - row(0, b);
  return g;
}

BitCodec::BitCodec(int k) : k_(k) {
  if (k < 1 || k > 20) throw Error(ErrorCode::CodecMismatch, "bit width must lie in [1, 20]");
}

BitCodec BitCodec::for_actions(int n_actions) {
  if (n_actions < 2 || (n_actions & (n_actions - 1)) != 0) {
    throw Error(ErrorCode::CodecMismatch,
                "action count " + std::to_string(n_actions) + " is not a power of two >= 2");
  }
  int k = 0;
  while ((1 << k) < n_actions) ++k;
  return BitCodec(k);
}

int BitCodec::depth(int node) {
  int d = 0;
  while (node >= (1 << (d + 1)) - 1) ++d;
  return d;
}

Matrix bit_log_policy(const Theta& theta, const BitCodec& codec) {
  if (theta.cols() != 2 || theta.rows() % codec.n_nodes() != 0) {
    throw Error(ErrorCode::CodecMismatch, "bit-level theta must have 2 columns and S*(2^k-1) rows");
  }
  const int ns = static_cast<int>(theta.rows()) / codec.n_nodes();
  const Matrix lbar = log_softmax(theta);
  Matrix out = Matrix::Zero(ns, codec.n_actions());
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < codec.n_actions(); ++a) {
      double acc = 0.0;
      for (int p = 0; p < codec.k(); ++p) {
        acc += lbar(codec.ext_state(s, codec.prefix_node(a, p)), codec.bit(a, p));
      }
      out(s, a) = acc;
    }
  }
  return out;
}

Policy bit_policy(const Theta& theta, const BitCodec& codec) {
  return bit_log_policy(theta, codec).array().exp().matrix();
}

ProjectionBall ProjectionBall::for_lambda(double lambda, double gamma) {
  if (!(lambda > 0.0)) throw Error(ErrorCode::ConfigError, "projection ball needs lambda > 0");
  return {(1.0 + lambda * std::log(2.0)) / (lambda * (1.0 - gamma))};
}

ProjectionBall ProjectionBall::for_bits(double lambda, double gamma, int k) {
  return for_lambda(lambda, std::pow(gamma, 1.0 / k));
}

Theta project_linf(const Theta& theta, const ProjectionBall& ball) {
  return theta.cwiseMax(-ball.radius).cwiseMin(ball.radius);
}

bool in_hyperplane(const Theta& theta, double tol) {
  for (int s = 0; s < theta.rows(); ++s) {
    if (std::abs(theta.row(s).sum()) > tol) return false;
  }
  return true;
}

PaddedInstance pad_actions(const FrlInstance& inst) {
  const int na = inst.n_actions();
  int target = 2;
  while (target < na) target *= 2;
  if (target == na) return {inst, BitCodec::for_actions(na), na};
  std::vector<Mdp> agents;
  for (const Mdp& m : inst.agents) {
    Mdp p;
    p.n_states = m.n_states;
    p.n_actions = target;
    p.gamma = m.gamma;
    p.rho = m.rho;
    p.reward = Matrix(m.n_states, target);
    p.kernel = Matrix(m.n_states * target, m.n_states);
    for (int s = 0; s < m.n_states; ++s) {
      for (int a = 0; a < target; ++a) {
        const int src = a < na ? a : 0;
        p.reward(s, a) = m.reward(s, src);
        p.kernel.row(s * target + a) = m.kernel.row(m.row(s, src));
      }
    }
    agents.push_back(std::move(p));
  }
  return {new_frl_instance(std::move(agents)), BitCodec::for_actions(target), na};
}

}  // namespace fedpg

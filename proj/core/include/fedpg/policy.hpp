#pragma once

#include <utility>

#include "fedpg/mdp.hpp"

namespace fedpg {

using Theta = Matrix;
using Policy = Matrix;

Policy softmax_policy(const Theta& theta);
Matrix log_softmax(const Theta& theta);

// Score of log pi(a|s) with respect to every entry of theta.
Matrix grad_log_policy(const Theta& theta, int s, int a);

// Actions as big-endian k-bit words. Prefix words of length p < k are nodes
// of a complete binary tree with heap index (2^p - 1) + value.
class BitCodec {
public:
  explicit BitCodec(int k);
  static BitCodec for_actions(int n_actions);  // CodecMismatch unless a power of two

  int k() const { return k_; }
  int n_actions() const { return 1 << k_; }
  int n_nodes() const { return (1 << k_) - 1; }

  int bit(int action, int p) const { return (action >> (k_ - 1 - p)) & 1; }
  int prefix_node(int action, int p) const { return (1 << p) - 1 + (action >> (k_ - p)); }
  static int child(int node, int bit) { return 2 * node + 1 + bit; }
  static int depth(int node);

  int ext_state(int s, int node) const { return s * n_nodes() + node; }
  int ext_rows(int n_states) const { return n_states * n_nodes(); }

private:
  int k_;
};

Policy bit_policy(const Theta& theta, const BitCodec& codec);
Matrix bit_log_policy(const Theta& theta, const BitCodec& codec);

struct ProjectionBall {
  double radius = 0.0;

  static ProjectionBall for_lambda(double lambda, double gamma);
  static ProjectionBall for_bits(double lambda, double gamma, int k);
};

Theta project_linf(const Theta& theta, const ProjectionBall& ball);

// True when every row of theta sums to zero within tol.
bool in_hyperplane(const Theta& theta, double tol);

struct PaddedInstance {
  FrlInstance inst;
  BitCodec codec;
  int original_actions;
};
PaddedInstance pad_actions(const FrlInstance& inst);

std::string theta_to_json(const Theta& theta, int k = 0, int n_states = 0);
Theta theta_from_json(const std::string& text, int* k = nullptr, int* n_states = nullptr);

}  // namespace fedpg

#pragma once

#include <cstdint>

#include "fedpg/mdp.hpp"

namespace fedpg {

// Rewards U[0,1], simplex-uniform common and per-agent kernel rows, uniform rho.
// Agent c's individual kernel depends only on (seed, c), so the first m agents
// of a larger instance coincide with a smaller one built from the same seed.
FrlInstance build_synthetic(int m, int n_states, int n_actions, double eps, std::uint64_t seed,
                            double gamma = 0.9);

// Five random states plus two absorbing +1 states. Even agents are type 1,
// odd agents type 2.
struct ExtremeLayout {
  static constexpr int kBaseStates = 5;
  static constexpr int kRewardState1 = 5;
  static constexpr int kRewardState2 = 6;
  static constexpr int kGate1 = 0;  // reaches kRewardState1 for type 1
  static constexpr int kGate2 = 1;  // reaches kRewardState2 for type 2
};
FrlInstance build_synthetic_extreme(std::uint64_t seed, int m = 10, double gamma = 0.9);

// 3x3 grid, wall at (1,1), goal at (2,2). Actions: 0 up, 1 right, 2 down, 3 left.
struct GridLayout {
  static constexpr int kSide = 3;
  static constexpr int kCells = 8;
  static constexpr int kStateA = 8;  // extreme variant, type-1 reward state
  static constexpr int kStateB = 9;  // extreme variant, type-2 reward state
  static int state_of(int row, int col);  // -1 for the wall
  static int row_of(int state);
  static int col_of(int state);
  static int goal() { return state_of(2, 2); }
};
FrlInstance build_gridworld(int m, double eps, std::uint64_t seed, bool extreme,
                            double gamma = 0.95);

enum class Counterexample { Fig2, Fig3, Fig4, Fig5 };

struct Fig5Params {
  double p1 = 0.0;
  double q1 = 1.0;
  double p2 = 0.99;
  double q2 = 0.01;
  double gamma = 0.999;
  double lambda = 1.0;
};

// Fig5 layout: s0 start, s1 reward 1, s2 relay, s3 sink whose reward
// -lambda*log 2 offsets the entropy collected under a uniform row.
FrlInstance build_counterexample(Counterexample which, const Fig5Params& fig5 = {});

Counterexample counterexample_from_name(const std::string& name);

}  // namespace fedpg

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fedpg/builders.hpp"
#include "fedpg/mdp.hpp"

using namespace fedpg;

namespace {

Mdp two_state(double r0 = 0.0) {
  Mdp m;
  m.n_states = 2;
  m.n_actions = 2;
  m.gamma = 0.9;
  m.kernel = Matrix::Zero(4, 2);
  m.kernel << 1, 0, 0, 1, 0.5, 0.5, 0, 1;
  m.reward = Matrix::Zero(2, 2);
  m.reward(0, 0) = r0;
  m.rho = Vector::Constant(2, 0.5);
  return m;
}

// Brute force over every pair of agents, state and action.
double brute_heterogeneity(const FrlInstance& inst) {
  double best = 0.0;
  for (int c = 0; c < inst.m(); ++c)
    for (int d = 0; d < inst.m(); ++d)
      for (int r = 0; r < inst.front().kernel.rows(); ++r)
        best = std::max(best, (inst.agents[c].kernel.row(r) - inst.agents[d].kernel.row(r)).lpNorm<1>());
  return best;
}

void expect_error(ErrorCode code, const std::function<void()>& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << error_code_name(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(MdpCore, HomogeneousPairBuildsInstance) {
  const FrlInstance inst = new_frl_instance({two_state(), two_state()});
  EXPECT_EQ(inst.m(), 2);
  EXPECT_EQ(heterogeneity(inst).epsilon_p, 0.0);
}

TEST(MdpCore, RejectsDifferentRewards) {
  expect_error(ErrorCode::SharedComponentMismatch, [] { new_frl_instance({two_state(0.0), two_state(1.0)}); });
}

TEST(MdpCore, RejectsDimensionMismatch) {
  Mdp big = two_state();
  big.n_actions = 3;
  big.kernel = Matrix::Constant(6, 2, 0.5);
  big.reward = Matrix::Zero(2, 3);
  expect_error(ErrorCode::DimensionMismatch, [&] { new_frl_instance({two_state(), big}); });
}

TEST(MdpCore, RejectsNonStochasticRow) {
  Mdp bad = two_state();
  bad.kernel(1, 1) = 0.9;
  expect_error(ErrorCode::StochasticityViolation, [&] { new_frl_instance({bad}); });
  Mdp neg = two_state();
  neg.kernel.row(2) << 1.5, -0.5;
  expect_error(ErrorCode::StochasticityViolation, [&] { new_frl_instance({neg}); });
}

TEST(MdpCore, RejectsBadRho) {
  Mdp bad = two_state();
  bad.rho << 0.7, 0.7;
  expect_error(ErrorCode::StochasticityViolation, [&] { bad.validate(); });
}

TEST(MdpCore, HeterogeneityMaximalRows) {
  Mdp a = two_state(), b = two_state();
  a.kernel.row(0) << 1, 0;
  b.kernel.row(0) << 0, 1;
  const auto rep = heterogeneity(new_frl_instance({a, b}));
  EXPECT_DOUBLE_EQ(rep.epsilon_p, 2.0);
  EXPECT_EQ(rep.state, 0);
  EXPECT_EQ(rep.action, 0);
}

TEST(MdpCore, HeterogeneitySymmetricUnderAgentOrder) {
  FrlInstance inst = build_synthetic(4, 3, 2, 0.6, 5);
  const double fwd = heterogeneity(inst).epsilon_p;
  std::reverse(inst.agents.begin(), inst.agents.end());
  EXPECT_DOUBLE_EQ(heterogeneity(inst).epsilon_p, fwd);
  EXPECT_DOUBLE_EQ(fwd, brute_heterogeneity(inst));
}

TEST(MdpCore, MixtureKernelEndpointsAndArithmetic) {
  Matrix common(1, 2), indiv(1, 2);
  common << 1, 0;
  indiv << 0, 1;
  EXPECT_EQ(mixture_kernel(common, indiv, 0.0), common);
  EXPECT_EQ(mixture_kernel(common, indiv, 1.0), indiv);
  const Matrix mix = mixture_kernel(common, indiv, 0.3);
  EXPECT_NEAR(mix(0, 0), 0.7, 1e-15);
  EXPECT_NEAR(mix(0, 1), 0.3, 1e-15);
  expect_error(ErrorCode::ShapeMismatch, [&] { mixture_kernel(common, Matrix::Zero(2, 2), 0.5); });
}

TEST(MdpCore, PolicyKernelRowsStochastic) {
  const Mdp m = two_state();
  Matrix pi(2, 2);
  pi << 0.25, 0.75, 1.0, 0.0;
  const Matrix p = policy_kernel(m, pi);
  EXPECT_NEAR(p(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(p(1, 0), 0.5, 1e-15);
  for (int s = 0; s < 2; ++s) EXPECT_NEAR(p.row(s).sum(), 1.0, 1e-15);
}

TEST(MdpCore, JsonRoundTripAndHash) {
  const FrlInstance inst = build_synthetic(3, 4, 3, 0.3, 12);
  const FrlInstance back = instance_from_json(instance_to_json(inst));
  ASSERT_EQ(back.m(), inst.m());
  for (int c = 0; c < inst.m(); ++c) {
    EXPECT_EQ(back.agents[c].kernel, inst.agents[c].kernel);
    EXPECT_EQ(back.agents[c].reward, inst.agents[c].reward);
    EXPECT_EQ(back.agents[c].rho, inst.agents[c].rho);
    EXPECT_EQ(back.agents[c].gamma, inst.agents[c].gamma);
  }
  EXPECT_EQ(instance_hash(back), instance_hash(inst));
  EXPECT_NE(instance_hash(build_synthetic(3, 4, 3, 0.3, 13)), instance_hash(inst));
}

TEST(MdpCore, JsonRejectsUnknownKey) {
  std::string text = instance_to_json(build_synthetic(1, 2, 2, 0.0, 1));
  text.insert(1, "\"bogus\":1,");
  EXPECT_THROW(instance_from_json(text), Error);
}

TEST(Builders, SyntheticHeterogeneityBound) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (double eps : {0.0, 0.1, 0.3, 0.7}) {
      const FrlInstance inst = build_synthetic(5, 5, 4, eps, seed);
      EXPECT_LE(brute_heterogeneity(inst), 2.0 * eps + 1e-12);
    }
  }
  EXPECT_LE(heterogeneity(build_synthetic(2, 5, 4, 0.3, 7)).epsilon_p, 0.6 + 1e-12);
}

TEST(Builders, SyntheticDeterministicAndNested) {
  const FrlInstance a = build_synthetic(10, 5, 4, 0.3, 3);
  const FrlInstance b = build_synthetic(10, 5, 4, 0.3, 3);
  const FrlInstance small = build_synthetic(2, 5, 4, 0.3, 3);
  EXPECT_EQ(instance_hash(a), instance_hash(b));
  for (int c = 0; c < 2; ++c) EXPECT_EQ(small.agents[c].kernel, a.agents[c].kernel);
  EXPECT_EQ(heterogeneity(build_synthetic(6, 5, 4, 0.0, 3)).epsilon_p, 0.0);
}

TEST(Builders, EveryBuilderPassesValidation) {
  std::vector<FrlInstance> all{build_synthetic(3, 5, 4, 0.3, 1), build_synthetic_extreme(1),
                               build_gridworld(4, 0.3, 1, false), build_gridworld(4, 0.0, 1, true)};
  for (auto w : {Counterexample::Fig2, Counterexample::Fig3, Counterexample::Fig4, Counterexample::Fig5}) {
    all.push_back(build_counterexample(w));
  }
  for (const auto& inst : all) {
    for (const auto& m : inst.agents) {
      EXPECT_NO_THROW(m.validate());
      for (int r = 0; r < m.kernel.rows(); ++r) EXPECT_NEAR(m.kernel.row(r).sum(), 1.0, 1e-12);
    }
  }
}

TEST(Builders, SyntheticExtremeGates) {
  using L = ExtremeLayout;
  const FrlInstance inst = build_synthetic_extreme(4);
  const Mdp& t1 = inst.agents[0];
  const Mdp& t2 = inst.agents[1];
  EXPECT_EQ(t1.p(L::kGate1, 0, L::kRewardState1), 1.0);
  EXPECT_EQ(t2.p(L::kGate1, 0, L::kGate1), 1.0);
  EXPECT_EQ(t2.p(L::kGate2, 3, L::kRewardState2), 1.0);
  EXPECT_EQ(t1.p(L::kGate2, 3, L::kGate2), 1.0);
  for (int rs : {L::kRewardState1, L::kRewardState2})
    for (int a = 0; a < 4; ++a) {
      EXPECT_EQ(t1.reward(rs, a), 1.0);
      EXPECT_EQ(t1.p(rs, a, rs), 1.0);
      EXPECT_EQ(t2.p(rs, a, rs), 1.0);
    }
  EXPECT_GT(heterogeneity(inst).epsilon_p, 1.9);
}

TEST(Builders, GridworldMoveRight) {
  const FrlInstance inst = build_gridworld(3, 0.0, 2, false);
  const Mdp& m = inst.front();
  const int origin = GridLayout::state_of(0, 0);
  const int right = GridLayout::state_of(0, 1);
  const int down = GridLayout::state_of(1, 0);
  // (0,0) has two valid neighbours.
  EXPECT_NEAR(m.p(origin, 1, right), 0.8 + 0.2 / 2, 1e-12);
  EXPECT_NEAR(m.p(origin, 1, down), 0.2 / 2, 1e-12);
  EXPECT_EQ(GridLayout::state_of(1, 1), -1);
  EXPECT_EQ(m.n_states, GridLayout::kCells);
  const int goal = GridLayout::goal();
  // Right from (2,1) and down from (1,2) enter the goal.
  EXPECT_EQ(m.reward(GridLayout::state_of(2, 1), 1), 1.0);
  EXPECT_EQ(m.reward(GridLayout::state_of(1, 2), 2), 1.0);
  EXPECT_EQ(m.reward(GridLayout::state_of(0, 0), 1), 0.0);
  for (int a = 0; a < 4; ++a) EXPECT_EQ(m.p(goal, a, goal), 1.0);
  EXPECT_EQ(m.rho(goal), 0.0);
}

TEST(Builders, CounterexampleShapes) {
  const FrlInstance f2 = build_counterexample(Counterexample::Fig2);
  EXPECT_EQ(f2.m(), 2);
  EXPECT_DOUBLE_EQ(f2.gamma(), 0.9);
  const FrlInstance f3 = build_counterexample(Counterexample::Fig3);
  EXPECT_EQ(f3.rho()(0), 1.0);
  EXPECT_EQ(f3.rho().sum(), 1.0);
  const FrlInstance f5 = build_counterexample(Counterexample::Fig5);
  EXPECT_EQ(f5.m(), 2);
  EXPECT_EQ(counterexample_from_name("fig4"), Counterexample::Fig4);
  EXPECT_THROW(counterexample_from_name("fig9"), Error);
}

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fedpg/exact_eval.hpp"
#include "fedpg/extended.hpp"
#include "fedpg/verification.hpp"
#include "support.hpp"

using namespace fedpg;
using fedpg::testing::fd_gradient;
using fedpg::testing::random_theta;

namespace {

Mdp bandit(double gamma, std::vector<double> rewards) {
  Mdp m;
  m.n_states = 1;
  m.n_actions = static_cast<int>(rewards.size());
  m.gamma = gamma;
  m.kernel = Matrix::Ones(m.n_actions, 1);
  m.reward = Matrix(1, m.n_actions);
  for (int a = 0; a < m.n_actions; ++a) m.reward(0, a) = rewards[static_cast<std::size_t>(a)];
  m.rho = Vector::Ones(1);
  return m;
}

}  // namespace

TEST(PolicyEval, GeometricSeries) {
  const Mdp m = bandit(0.5, {1.0});
  EXPECT_NEAR(policy_eval(m, Policy::Ones(1, 1)).v(0), 2.0, 1e-14);
}

TEST(PolicyEval, ZeroDiscount) {
  const FrlInstance inst = build_synthetic(1, 3, 2, 0.0, 4, 0.0);
  std::mt19937_64 rng(1);
  const Policy pi = softmax_policy(random_theta(3, 2, rng));
  const Vector v = policy_eval(inst.front(), pi).v;
  for (int s = 0; s < 3; ++s) EXPECT_NEAR(v(s), pi.row(s).dot(inst.reward().row(s)), 1e-15);
}

TEST(PolicyEval, MatchesFixedPointIteration) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i) {
    const FrlInstance inst = build_synthetic(1, 4, 3, 0.0, 30 + i);
    const Policy pi = softmax_policy(random_theta(4, 3, rng));
    const Vector a = policy_eval(inst.front(), pi).v;
    const Vector b = fedpg::testing::iterate_values(inst.front(), pi, inst.reward(), 3000);
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(PolicyEval, Fig3ScriptedStationary) {
  const FrlInstance inst = build_counterexample(Counterexample::Fig3);
  const double g = 0.9, p = 0.5;
  Policy pi = Policy::Constant(inst.n_states(), inst.n_actions(), 1.0 / inst.n_actions());
  pi.row(3).setZero();
  pi(3, 0) = p;
  pi(3, 1) = 1.0 - p;
  const double closed = (g * p / (1 - g)) * (1 / p + 1 / (1 - g + p * g) - 2 * g / (1 - g + p * g));
  EXPECT_NEAR(fig3_v2_closed_form(p, g), closed, 1e-12);
  EXPECT_NEAR(policy_eval(inst.agents[1], pi).v(0), closed, 1e-9);
}

TEST(Occupancy, DegenerateCases) {
  const FrlInstance inst = build_synthetic(1, 3, 2, 0.0, 5, 0.0);
  const Vector start = (Vector(3) << 0.2, 0.3, 0.5).finished();
  EXPECT_LE((occupancy(inst.front(), Policy::Constant(3, 2, 0.5), start) - start).norm(), 1e-15);
  const Mdp single = bandit(0.9, {0.3, 0.7});
  EXPECT_NEAR(occupancy(single, Policy::Constant(1, 2, 0.5), single.rho)(0), 1.0, 1e-15);
}

TEST(Occupancy, MatchesSeries) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const double gamma = i % 2 ? 0.95 : 0.9;
    const FrlInstance inst = build_synthetic(1, 2 + i % 4, 2 + i % 3, 0.0, 60 + i, gamma);
    const Policy pi = softmax_policy(random_theta(inst.n_states(), inst.n_actions(), rng));
    const Vector a = occupancy(inst.front(), pi, inst.rho());
    const Vector b = fedpg::testing::series_occupancy(inst.front(), pi, 500);
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(a.sum(), 1.0, 1e-12);
  }
}

TEST(RegEval, ReductionAndEntropySeries) {
  const FrlInstance inst = build_synthetic(1, 3, 3, 0.0, 7);
  std::mt19937_64 rng(4);
  const Policy pi = softmax_policy(random_theta(3, 3, rng));
  EXPECT_LE((reg_policy_eval(inst.front(), pi, 0.0).v - policy_eval(inst.front(), pi).v).norm(), 1e-14);
  const Mdp zero = bandit(0.5, {0.0, 0.0, 0.0, 0.0});
  EXPECT_NEAR(reg_policy_eval(zero, Policy::Constant(1, 4, 0.25), 1.0).v(0), 2.0 * std::log(4.0), 1e-13);
  Policy det = Policy::Zero(1, 4);
  det(0, 0) = 1.0;
  EXPECT_THROW(reg_policy_eval(zero, det, 0.1), Error);
}

TEST(RegEval, AdvantageAveragesToZeroAndBellman) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const FrlInstance inst = build_synthetic(1, 3, 3, 0.0, 80 + i);
    const Mdp& m = inst.front();
    const Theta th = random_theta(3, 3, rng, 3.0);
    const Policy pi = softmax_policy(th);
    const Matrix lp = log_softmax(th);
    const double lambda = 0.3;
    const ValueBundle vb = reg_policy_eval_log(m, pi, lp, lambda);
    for (int s = 0; s < 3; ++s) {
      EXPECT_LE(std::abs(pi.row(s).dot(vb.adv.row(s))), 1e-9);
      double rhs = 0.0;
      for (int a = 0; a < 3; ++a) {
        rhs += pi(s, a) * (m.reward(s, a) - lambda * lp(s, a) + m.gamma * m.kernel.row(m.row(s, a)).dot(vb.v));
      }
      EXPECT_LE(std::abs(vb.v(s) - rhs), 1e-9);
    }
  }
}

TEST(BitEval, ReductionsAndExtendedEquivalence) {
  std::mt19937_64 rng(6);
  const FrlInstance two = build_synthetic(1, 3, 2, 0.0, 9);
  const Theta th = random_theta(3, 2, rng);
  const BitCodec c1(1);
  EXPECT_LE((bit_reg_policy_eval(two.front(), th, c1, 0.4).v -
             reg_policy_eval_log(two.front(), softmax_policy(th), log_softmax(th), 0.4).v).norm(), 1e-12);

  const FrlInstance four = build_synthetic(2, 3, 4, 0.3, 9, 0.95);
  const BitCodec c2(2);
  const Theta tb = random_theta(c2.ext_rows(3), 2, rng);
  EXPECT_LE((bit_reg_policy_eval(four.front(), tb, c2, 0.0).v -
             policy_eval(four.front(), bit_policy(tb, c2)).v).norm(), 1e-12);
  EXPECT_LE(verify_bit_equivalence(four, tb, 0.05), 1e-8);
}

TEST(Extended, SizesAndValidity) {
  const FrlInstance inst = build_synthetic(2, 2, 4, 0.3, 2);
  const BitCodec c(2);
  const auto ext = build_extended_mdp(inst, c);
  ASSERT_EQ(ext.size(), 2u);
  EXPECT_EQ(ext[0].mdp.n_states, 6);
  EXPECT_EQ(ext[0].mdp.n_actions, 2);
  for (const auto& e : ext) EXPECT_NO_THROW(e.mdp.validate());
  EXPECT_THROW(build_extended_mdp(build_synthetic(1, 2, 3, 0, 1), c), Error);

  const FrlInstance two = build_synthetic(1, 3, 2, 0.0, 1);
  const auto iso = build_extended_mdp(two, BitCodec(1));
  EXPECT_EQ(iso[0].mdp.kernel, two.front().kernel);
  EXPECT_EQ(iso[0].mdp.reward, two.front().reward);
}

TEST(Objective, SingleAgentAndHomogeneousAndFig2) {
  const FrlInstance one = build_synthetic(1, 3, 2, 0.0, 3);
  std::mt19937_64 rng(7);
  const Theta th = random_theta(3, 2, rng);
  EXPECT_NEAR(objective(one, th, Variant::sm()), one.rho().dot(policy_eval(one.front(), softmax_policy(th)).v), 1e-14);
  const FrlInstance homo = build_synthetic(4, 3, 2, 0.0, 3);
  EXPECT_NEAR(objective(homo, th, Variant::r(0.1)), objective(one, th, Variant::r(0.1)), 1e-12);

  const FrlInstance f2 = build_counterexample(Counterexample::Fig2);
  const Theta t2 = random_theta(f2.n_states(), f2.n_actions(), rng);
  const Policy pi = softmax_policy(t2);
  const double avg = 0.5 * (f2.rho().dot(policy_eval(f2.agents[0], pi).v) + f2.rho().dot(policy_eval(f2.agents[1], pi).v));
  EXPECT_NEAR(objective(f2, t2, Variant::sm()), avg, 1e-12);
}

TEST(Optima, HandSeriesAndSoftLimit) {
  // Start state 0 with rewards (0.2, 0.5); action 1 moves to an absorbing +1 state.
  Mdp m;
  m.n_states = 2;
  m.n_actions = 2;
  m.gamma = 0.9;
  m.kernel = Matrix::Zero(4, 2);
  m.kernel << 1, 0, 0, 1, 0, 1, 0, 1;
  m.reward = Matrix(2, 2);
  m.reward << 0.2, 0.5, 1, 1;
  m.rho = Vector::Unit(2, 0);
  const Optima o = optimal_values(new_frl_instance({m}), Variant::sm());
  EXPECT_NEAR(o.values[0](0), 0.9 / 0.1 + 0.5, 1e-8);

  for (int i = 0; i < 5; ++i) {
    const FrlInstance inst = build_synthetic(1, 3, 3, 0.0, 40 + i);
    EXPECT_NEAR(optimal_values(inst, Variant::r(1e-6)).j_star, optimal_values(inst, Variant::sm()).j_star, 1e-3);
  }
  const FrlInstance homo = build_synthetic(3, 3, 2, 0.0, 1);
  const Optima h = optimal_values(homo, Variant::sm());
  EXPECT_NEAR(h.f[0], h.f[2], 1e-10);
}

TEST(Optima, MatchesBestDeterministic) {
  for (int i = 0; i < 5; ++i) {
    const FrlInstance inst = build_synthetic(1, 3, 3, 0.0, 100 + i);
    EXPECT_NEAR(optimal_values(inst, Variant::sm()).j_star, best_deterministic(inst).value, 1e-9);
  }
}

TEST(Gradient, BanditExample) {
  const FrlInstance inst = new_frl_instance({bandit(0.5, {1.0, 0.0})});
  const Matrix g = exact_gradient(inst, Theta::Zero(1, 2), Variant::sm());
  EXPECT_NEAR(g(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(g(0, 1), -0.5, 1e-14);
}

TEST(Gradient, NearDeterministicOptimumIsStationary) {
  const FrlInstance inst = build_synthetic(1, 3, 2, 0.0, 11);
  const Optima o = optimal_values(inst, Variant::sm());
  Theta th = 20.0 * o.policies[0];
  EXPECT_LT(exact_gradient(inst, th, Variant::sm()).norm(), 1e-3);
}

TEST(Gradient, FiniteDifferencesAllVariants) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    const FrlInstance inst = build_synthetic(1 + i % 3, 3, 2 + i % 3, 0.4, 120 + i);
    const Theta th = random_theta(3, inst.n_actions(), rng);
    for (const Variant v : {Variant::sm(), Variant::r(0.2)}) {
      const Matrix fd = fd_gradient([&](const Theta& t) { return objective(inst, t, v); }, th);
      EXPECT_LE(fedpg::testing::rel_err(exact_gradient(inst, th, v), fd), 1e-6);
    }
    const PaddedInstance p = pad_actions(inst);
    const Theta tb = random_theta(p.codec.ext_rows(3), 2, rng);
    const Matrix fd = fd_gradient([&](const Theta& t) { return objective(p.inst, t, Variant::b(0.2)); }, tb);
    EXPECT_LE(fedpg::testing::rel_err(exact_gradient(p.inst, tb, Variant::b(0.2)), fd), 1e-6);
  }
}

TEST(Gradient, GradientRowsSumToZero) {
  std::mt19937_64 rng(9);
  const FrlInstance inst = build_synthetic(2, 4, 3, 0.3, 13);
  const Matrix g = exact_gradient(inst, random_theta(4, 3, rng), Variant::r(0.1));
  EXPECT_LE(g.rowwise().sum().cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Loja, UniformHomogeneousFormula) {
  const FrlInstance inst = build_synthetic(2, 4, 3, 0.0, 17);
  const Theta th = Theta::Zero(4, 3);
  const LojaDiagnostics ld = loja_diagnostics(inst, th, 0.1);
  const Optima o = optimal_values(inst, Variant::sm());
  const Vector dstar = occupancy(inst.front(), o.policies[0], inst.rho());
  const Vector d = occupancy(inst.front(), softmax_policy(th), inst.rho());
  const double ratio = dstar.cwiseQuotient(d).maxCoeff();
  const double expect = 1.0 / (2.0 * 4) / 9.0 / (ratio * ratio);
  EXPECT_NEAR(ld.mu_sm, expect, 1e-12 * expect);
  EXPECT_GT(ld.mu_r, 0.0);
  EXPECT_NEAR(ld.log_mu_r, std::log(ld.mu_r), 1e-9);
  EXPECT_NEAR(ld.log_mu_sm, std::log(ld.mu_sm), 1e-9);
}

TEST(Loja, InequalitiesHoldOnRandomInstances) {
  for (int i = 0; i < 4; ++i) {
    const FrlInstance inst = build_synthetic(1 + i % 2, 3, 2 + i % 2, 0.4, 140 + i);
    const LojaSweep s = loja_sweep(inst, 0.1, 50, i);
    EXPECT_EQ(s.violations_sm, 0) << s.min_slack_sm;
    EXPECT_EQ(s.violations_r, 0) << s.min_slack_r;
  }
}

TEST(Loja, BitLowerBoundBelowExtendedMu) {
  std::mt19937_64 rng(10);
  const FrlInstance inst = build_synthetic(2, 2, 4, 0.3, 3);
  const PaddedInstance p = pad_actions(inst);
  const FrlInstance ext = extended_instance(p.inst, p.codec);
  const Theta th = fedpg::testing::random_hyperplane_theta(ext.n_states(), 2, rng, 2.0);
  const LojaDiagnostics ld = loja_diagnostics(ext, th, 0.5);
  double log_lb = 0.0;
  mu_b_lower_bound(0.9, 0.5, 2, 4, 0.5, &log_lb);
  EXPECT_LE(log_lb, ld.log_mu_r);
}

#pragma once

#include <functional>
#include <vector>

#include "fedpg/exact_eval.hpp"
#include "fedpg/mdp.hpp"
#include "fedpg/policy.hpp"
#include "fedpg/rng.hpp"

namespace fedpg {

struct Trajectory {
  std::vector<int> states;
  std::vector<int> actions;
};

Trajectory sample_trajectory(const Mdp& mdp, const Policy& pi, int horizon, Engine& eng);

struct GradSample {
  Matrix grad;
  int batch = 0;
  int horizon = 0;
};

// Receives each single-trajectory contribution before it is averaged.
using SampleObserver = std::function<void(const Matrix&)>;

GradSample reinforce_grad_sm(const Mdp& mdp, const Theta& theta, int batch, int horizon,
                             const StreamKey& key, const SampleObserver* observer = nullptr);
GradSample reinforce_grad_reg(const Mdp& mdp, const Theta& theta, int batch, int horizon,
                              double lambda, const StreamKey& key,
                              const SampleObserver* observer = nullptr);
// Theta in extended coordinates; trajectories are drawn on the original MDP
// and expanded into k bit-steps each.
GradSample reinforce_grad_bit(const Mdp& mdp, const Theta& theta, const BitCodec& codec, int batch,
                              int horizon, double lambda, const StreamKey& key,
                              const SampleObserver* observer = nullptr);

// Dispatches on the variant; for B the mdp must have a power-of-two action count.
GradSample reinforce_grad(const Mdp& mdp, const Theta& theta, const Variant& variant, int batch,
                          int horizon, const StreamKey& key,
                          const SampleObserver* observer = nullptr);

struct EstimatorBounds {
  double bias = 0.0;
  double variance = 0.0;
  double fourth = 0.0;
};

// Closed-form bias, variance and fourth central moment bounds.
EstimatorBounds estimator_bounds(const Variant& variant, double gamma, int n_actions, int batch,
                                 int horizon);

struct ProbeResult {
  double bias_norm = 0.0;
  double emp_variance = 0.0;
  double emp_fourth_moment = 0.0;
  double mean_se = 0.0;  // standard error of the mean, Frobenius
  Matrix mean;
  Matrix exact;
  EstimatorBounds bounds;
};

ProbeResult estimator_probe(const FrlInstance& inst, const Theta& theta, const Variant& variant,
                            int batch, int horizon, int n_reps, std::uint64_t seed);

}  // namespace fedpg

#include "fedpg/builders.hpp"

#include <array>
#include <cmath>

#include "fedpg/rng.hpp"

namespace fedpg {

namespace {

constexpr std::uint64_t kTagShared = 1;
constexpr std::uint64_t kTagAgent = 2;

void simplex_row(Engine& eng, double* out, int n) {
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double u = uniform01(eng);
    out[i] = -std::log1p(-u);
    sum += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= sum;
}

Matrix random_kernel(Engine& eng, int n_states, int n_actions) {
  Matrix k(n_states * n_actions, n_states);
  for (int r = 0; r < k.rows(); ++r) simplex_row(eng, k.row(r).data(), n_states);
  return k;
}

Mdp make_mdp(int ns, int na, double gamma, Matrix kernel, Matrix reward, Vector rho) {
  Mdp m;
  m.n_states = ns;
  m.n_actions = na;
  m.gamma = gamma;
  m.kernel = std::move(kernel);
  m.reward = std::move(reward);
  m.rho = std::move(rho);
  return m;
}

void set_row_to(Matrix& kernel, int row, int target) {
  kernel.row(row).setZero();
  kernel(row, target) = 1.0;
}

}  // namespace

FrlInstance build_synthetic(int m, int n_states, int n_actions, double eps, std::uint64_t seed,
                            double gamma) {
  if (m < 1 || n_states < 1 || n_actions < 1) {
    throw Error(ErrorCode::ConfigError, "synthetic builder needs positive m, n_states, n_actions");
  }
  Engine shared = make_engine(seed, kTagShared);
  Matrix reward(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) reward(s, a) = uniform01(shared);
  const Matrix common = random_kernel(shared, n_states, n_actions);
  const Vector rho = Vector::Constant(n_states, 1.0 / n_states);

  std::vector<Mdp> agents;
  agents.reserve(static_cast<std::size_t>(m));
  for (int c = 0; c < m; ++c) {
    Engine own = make_engine(seed, kTagAgent, static_cast<std::uint64_t>(c));
    const Matrix individual = random_kernel(own, n_states, n_actions);
    agents.push_back(make_mdp(n_states, n_actions, gamma, mixture_kernel(common, individual, eps),
                              reward, rho));
  }
  return new_frl_instance(std::move(agents));
}

FrlInstance build_synthetic_extreme(std::uint64_t seed, int m, double gamma) {
  using L = ExtremeLayout;
  constexpr int na = 4;
  constexpr int ns = L::kBaseStates + 2;
  if (m < 1) throw Error(ErrorCode::ConfigError, "extreme builder needs m >= 1");

  Engine shared = make_engine(seed, kTagShared);
  Matrix reward = Matrix::Zero(ns, na);
  for (int s = 0; s < L::kBaseStates; ++s)
    for (int a = 0; a < na; ++a) reward(s, a) = uniform01(shared);
  reward.row(L::kRewardState1).setOnes();
  reward.row(L::kRewardState2).setOnes();

  Matrix base = Matrix::Zero(ns * na, ns);
  std::array<double, L::kBaseStates> buf{};
  for (int s = 0; s < L::kBaseStates; ++s) {
    for (int a = 0; a < na; ++a) {
      simplex_row(shared, buf.data(), L::kBaseStates);
      for (int t = 0; t < L::kBaseStates; ++t) base(s * na + a, t) = buf[static_cast<std::size_t>(t)];
    }
  }
  for (int a = 0; a < na; ++a) {
    set_row_to(base, L::kRewardState1 * na + a, L::kRewardState1);
    set_row_to(base, L::kRewardState2 * na + a, L::kRewardState2);
  }

  Matrix type1 = base;
  Matrix type2 = base;
  for (int a = 0; a < na; ++a) {
    const bool low = a < 2;
    // Type 1: low actions at gate 1 reach its reward state, high actions at either gate stall.
    if (low) set_row_to(type1, L::kGate1 * na + a, L::kRewardState1);
    else {
      set_row_to(type1, L::kGate1 * na + a, L::kGate1);
      set_row_to(type1, L::kGate2 * na + a, L::kGate2);
    }
    // Type 2: the mapping is reversed.
    if (low) {
      set_row_to(type2, L::kGate1 * na + a, L::kGate1);
      set_row_to(type2, L::kGate2 * na + a, L::kGate2);
    } else {
      set_row_to(type2, L::kGate2 * na + a, L::kRewardState2);
    }
  }

  Vector rho = Vector::Zero(ns);
  rho.head(L::kBaseStates).setConstant(1.0 / L::kBaseStates);
  std::vector<Mdp> agents;
  for (int c = 0; c < m; ++c) {
    agents.push_back(make_mdp(ns, na, gamma, c % 2 == 0 ? type1 : type2, reward, rho));
  }
  return new_frl_instance(std::move(agents));
}

int GridLayout::state_of(int row, int col) {
  if (row < 0 || row >= kSide || col < 0 || col >= kSide) return -1;
  if (row == 1 && col == 1) return -1;
  int idx = row * kSide + col;
  return idx > 4 ? idx - 1 : idx;
}

int GridLayout::row_of(int state) {
  int idx = state >= 4 ? state + 1 : state;
  return idx / kSide;
}

int GridLayout::col_of(int state) {
  int idx = state >= 4 ? state + 1 : state;
  return idx % kSide;
}

namespace {

constexpr std::array<int, 4> kDr{-1, 0, 1, 0};
constexpr std::array<int, 4> kDc{0, 1, 0, -1};

bool edge_blocked(int from, int to, bool extreme) {
  if (!extreme) return false;
  const int a = GridLayout::state_of(1, 2);
  const int b = GridLayout::goal();
  return (from == a && to == b) || (from == b && to == a);
}

int step_target(int s, int dir, bool extreme) {
  int t = GridLayout::state_of(GridLayout::row_of(s) + kDr[static_cast<std::size_t>(dir)],
                               GridLayout::col_of(s) + kDc[static_cast<std::size_t>(dir)]);
  if (t < 0 || edge_blocked(s, t, extreme)) return s;
  return t;
}

std::vector<int> neighbours(int s, bool extreme) {
  std::vector<int> out;
  for (int d = 0; d < 4; ++d) {
    int t = step_target(s, d, extreme);
    if (t != s) out.push_back(t);
  }
  return out;
}

}  // namespace

FrlInstance build_gridworld(int m, double eps, std::uint64_t seed, bool extreme, double gamma) {
  using G = GridLayout;
  if (m < 1) throw Error(ErrorCode::ConfigError, "gridworld builder needs m >= 1");
  constexpr int na = 4;
  const int ns = extreme ? G::kCells + 2 : G::kCells;
  const int goal = G::goal();

  Matrix reward = Matrix::Zero(ns, na);
  if (extreme) {
    reward.row(G::kStateA).setOnes();
    reward.row(G::kStateB).setOnes();
  } else {
    for (int s = 0; s < G::kCells; ++s) {
      if (s == goal) continue;
      for (int a = 0; a < na; ++a)
        if (step_target(s, a, extreme) == goal) reward(s, a) = 1.0;
    }
  }

  Matrix common = Matrix::Zero(ns * na, ns);
  for (int s = 0; s < G::kCells; ++s) {
    const auto nb = neighbours(s, extreme);
    for (int a = 0; a < na; ++a) {
      const int r = s * na + a;
      if (s == goal) {
        set_row_to(common, r, goal);
        continue;
      }
      common(r, step_target(s, a, extreme)) += 0.8;
      if (nb.empty()) {
        common(r, s) += 0.2;
      } else {
        for (int t : nb) common(r, t) += 0.2 / static_cast<double>(nb.size());
      }
    }
  }
  if (extreme) {
    for (int a = 0; a < na; ++a) {
      set_row_to(common, G::kStateA * na + a, G::kStateA);
      set_row_to(common, G::kStateB * na + a, G::kStateB);
    }
  }

  Vector rho = Vector::Zero(ns);
  for (int s = 0; s < G::kCells; ++s)
    if (s != goal) rho(s) = 1.0 / (G::kCells - 1);

  std::vector<Mdp> agents;
  for (int c = 0; c < m; ++c) {
    Engine own = make_engine(seed, kTagAgent, static_cast<std::uint64_t>(c));
    Matrix individual = common;
    std::vector<double> w;
    for (int s = 0; s < G::kCells; ++s) {
      if (s == goal) continue;
      const auto nb = neighbours(s, extreme);
      if (nb.empty()) continue;
      w.assign(nb.size(), 0.0);
      for (int a = 0; a < na; ++a) {
        simplex_row(own, w.data(), static_cast<int>(nb.size()));
        const int r = s * na + a;
        individual.row(r).setZero();
        for (std::size_t i = 0; i < nb.size(); ++i) individual(r, nb[i]) += w[i];
      }
    }
    Matrix kernel = mixture_kernel(common, individual, eps);
    if (extreme) {
      const bool type1 = c % 2 == 0;
      for (int a = 0; a < na; ++a) {
        const bool low = a < 2;
        int target = goal;
        if (type1 && low) target = G::kStateA;
        if (!type1 && !low) target = G::kStateB;
        set_row_to(kernel, goal * na + a, target);
      }
    }
    agents.push_back(make_mdp(ns, na, gamma, std::move(kernel), reward, rho));
  }
  return new_frl_instance(std::move(agents));
}

namespace {

FrlInstance fig2() {
  constexpr int ns = 2, na = 2;
  Matrix reward(ns, na);
  reward << 1.0, 1.0, 0.0, -1.0;
  Vector rho(ns);
  rho << 0.5, 0.5;
  Matrix k1 = Matrix::Zero(ns * na, ns);
  set_row_to(k1, 0, 0);
  set_row_to(k1, 1, 0);
  Matrix k2 = k1;
  set_row_to(k1, 2, 0);  // agent 1: a0 leaves s1
  set_row_to(k1, 3, 1);
  set_row_to(k2, 2, 1);  // agent 2: a1 leaves s1
  set_row_to(k2, 3, 0);
  return new_frl_instance({make_mdp(ns, na, 0.9, k1, reward, rho), make_mdp(ns, na, 0.9, k2, reward, rho)});
}

FrlInstance fig3() {
  constexpr int ns = 4, na = 2;
  Matrix reward = Matrix::Zero(ns, na);
  reward(3, 0) = 1.0;
  reward(3, 1) = 2.0;
  Vector rho = Vector::Zero(ns);
  rho(0) = 1.0;
  Matrix k1 = Matrix::Zero(ns * na, ns);
  Matrix k2 = Matrix::Zero(ns * na, ns);
  for (int a = 0; a < na; ++a) {
    set_row_to(k1, 0 * na + a, 1);
    set_row_to(k2, 0 * na + a, 3);
    set_row_to(k1, 1 * na + a, 3);
    set_row_to(k2, 1 * na + a, 3);
    set_row_to(k1, 2 * na + a, 2);
    set_row_to(k2, 2 * na + a, 2);
    set_row_to(k1, 3 * na + a, 3);
  }
  set_row_to(k2, 3 * na + 0, 3);
  set_row_to(k2, 3 * na + 1, 2);
  return new_frl_instance({make_mdp(ns, na, 0.9, k1, reward, rho), make_mdp(ns, na, 0.9, k2, reward, rho)});
}

FrlInstance fig4() {
  constexpr int ns = 3, na = 2;
  Matrix reward = Matrix::Zero(ns, na);
  reward.row(0).setConstant(10.0);
  reward.row(1).setConstant(10.0);
  Vector rho = Vector::Zero(ns);
  rho(2) = 1.0;
  Matrix k1 = Matrix::Zero(ns * na, ns);
  for (int a = 0; a < na; ++a) {
    set_row_to(k1, 0 * na + a, 0);
    set_row_to(k1, 1 * na + a, 1);
  }
  Matrix k2 = k1;
  set_row_to(k1, 2 * na + 0, 2);
  set_row_to(k1, 2 * na + 1, 1);
  set_row_to(k2, 2 * na + 0, 0);
  set_row_to(k2, 2 * na + 1, 2);
  return new_frl_instance({make_mdp(ns, na, 0.9, k1, reward, rho), make_mdp(ns, na, 0.9, k2, reward, rho)});
}

FrlInstance fig5(const Fig5Params& prm) {
  constexpr int ns = 4, na = 2;
  Matrix reward = Matrix::Zero(ns, na);
  reward.row(1).setOnes();
  reward.row(3).setConstant(-prm.lambda * std::log(2.0));
  Vector rho = Vector::Zero(ns);
  rho(0) = 1.0;
  auto agent = [&](double p, double q) {
    Matrix k = Matrix::Zero(ns * na, ns);
    k(0, 1) = p;
    k(0, 0) = 1.0 - p;
    k(1, 1) = q;
    k(1, 0) = 1.0 - q;
    for (int a = 0; a < na; ++a) {
      set_row_to(k, 1 * na + a, 2);
      set_row_to(k, 2 * na + a, 3);
      set_row_to(k, 3 * na + a, 3);
    }
    return make_mdp(ns, na, prm.gamma, k, reward, rho);
  };
  return new_frl_instance({agent(prm.p1, prm.q1), agent(prm.p2, prm.q2)});
}

}  // namespace

FrlInstance build_counterexample(Counterexample which, const Fig5Params& fig5_params) {
  switch (which) {
    case Counterexample::Fig2: return fig2();
    case Counterexample::Fig3: return fig3();
    case Counterexample::Fig4: return fig4();
    case Counterexample::Fig5: return fig5(fig5_params);
  }
  throw Error(ErrorCode::ConfigError, "unknown counterexample");
}

Counterexample counterexample_from_name(const std::string& name) {
  if (name == "fig2") return Counterexample::Fig2;
  if (name == "fig3") return Counterexample::Fig3;
  if (name == "fig4") return Counterexample::Fig4;
  if (name == "fig5") return Counterexample::Fig5;
  throw Error(ErrorCode::ConfigError, "unknown counterexample '" + name + "'");
}

}  // namespace fedpg

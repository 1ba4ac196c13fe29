#include "fedpg/fed_optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "fedpg/builders.hpp"
#include "fedpg/extended.hpp"
#include "fedpg/sampling.hpp"

namespace fedpg {

const char* variant_name(PgVariant v) {
  switch (v) {
    case PgVariant::S: return "S";
    case PgVariant::RS: return "RS";
    case PgVariant::BRS: return "bRS";
  }
  return "?";
}

PgVariant variant_from_name(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
  if (n == "s" || n == "s-fedpg") return PgVariant::S;
  if (n == "rs" || n == "rs-fedpg") return PgVariant::RS;
  if (n == "brs" || n == "b-rs" || n == "b-rs-fedpg") return PgVariant::BRS;
  throw Error(ErrorCode::ConfigError, "unknown variant '" + name + "'");
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        if (failed) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void FedPgConfig::validate() const {
  if (rounds < 1 || local_steps < 1 || batch < 1 || horizon < 1) {
    throw Error(ErrorCode::ConfigError, "rounds, local_steps, batch and horizon must be >= 1");
  }
  if (eta && !(*eta >= 0.0)) throw Error(ErrorCode::ConfigError, "eta must be non-negative");
  if (variant != PgVariant::S && !(lambda >= 0.0)) {
    throw Error(ErrorCode::ConfigError, "lambda must be non-negative");
  }
  if (effective_projection() == ProjectionKind::Ball && !radius && !(lambda > 0.0)) {
    throw Error(ErrorCode::ConfigError, "ball projection needs lambda > 0 or an explicit radius");
  }
  if (radius && !(*radius > 0.0)) throw Error(ErrorCode::ConfigError, "radius must be positive");
  if (threads < 1) throw Error(ErrorCode::ConfigError, "threads must be >= 1");
}

ProjectionKind FedPgConfig::effective_projection() const {
  if (projection) return *projection;
  return variant == PgVariant::BRS ? ProjectionKind::Ball : ProjectionKind::None;
}

namespace {

int bits_for(int n_actions) {
  int k = 1;
  while ((1 << k) < n_actions) ++k;
  return k;
}

}  // namespace

double auto_step_size(const FrlInstance& inst, const FedPgConfig& cfg) {
  const double h = cfg.local_steps;
  const double g = inst.gamma();
  switch (cfg.variant) {
    case PgVariant::S: return std::pow(1.0 - g, 3) / (592.0 * h);
    case PgVariant::RS:
      return std::pow(1.0 - g, 3) /
             (888.0 * (1.0 + cfg.lambda * std::log(static_cast<double>(inst.n_actions()))) * h);
    case PgVariant::BRS: {
      const double gbar = std::pow(g, 1.0 / bits_for(inst.n_actions()));
      return std::pow(1.0 - gbar, 3) / (888.0 * (1.0 + cfg.lambda * std::log(2.0)) * h);
    }
  }
  return 0.0;
}

double smoothness_constant(const FrlInstance& inst, const FedPgConfig& cfg) {
  const double g = inst.gamma();
  switch (cfg.variant) {
    case PgVariant::S: return 8.0 / std::pow(1.0 - g, 3);
    case PgVariant::RS: {
      const double la = std::log(static_cast<double>(inst.n_actions()));
      return (8.0 + cfg.lambda * (4.0 + 8.0 * la)) / std::pow(1.0 - g, 3);
    }
    case PgVariant::BRS: {
      const double gbar = std::pow(g, 1.0 / bits_for(inst.n_actions()));
      return (8.0 + cfg.lambda * (4.0 + 8.0 * std::log(2.0))) / std::pow(1.0 - gbar, 3);
    }
  }
  return 0.0;
}

namespace {

using Clock = std::chrono::steady_clock;

double linf(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Exact-evaluation context shared by every round of one run.
struct PgContext {
  const FrlInstance* work = nullptr;  // instance the estimator runs on
  FrlInstance padded;
  FrlInstance extended;
  Variant variant;
  double j_star = 0.0;
  LojaReference loja;
  bool bits = false;

  RoundMetrics evaluate(const Theta& theta) const {
    RoundMetrics m;
    if (bits) {
      m.objective = objective(padded, theta, variant);
      m.raw_return = objective(padded, theta, Variant::b(0.0));
      m.mu_diag = loja_diagnostics(extended, theta, loja).mu_r;
    } else {
      m.objective = objective(*work, theta, variant);
      m.raw_return = variant.kind == Variant::Kind::Sm ? m.objective
                                                       : objective(*work, theta, Variant::sm());
      const LojaDiagnostics ld = loja_diagnostics(*work, theta, loja);
      m.mu_diag = variant.kind == Variant::Kind::Sm ? ld.mu_sm : ld.mu_r;
    }
    m.grad_norm = exact_gradient(*work, theta, variant).norm();
    m.subopt = j_star - m.objective;
    m.theta_linf = linf(theta);
    return m;
  }
};

}  // namespace

FedPgResult run_fedpg(const FrlInstance& inst, const FedPgConfig& cfg, const FedPgHooks& hooks) {
  cfg.validate();
  PgContext ctx;
  Theta theta;
  ProjectionBall ball{0.0};
  const bool project = cfg.effective_projection() == ProjectionKind::Ball;
  int gamma_bits = 1;

  switch (cfg.variant) {
    case PgVariant::S:
      ctx.variant = Variant::sm();
      ctx.work = &inst;
      ctx.j_star = optimal_values(inst, ctx.variant).j_star;
      ctx.loja = loja_reference(inst, 0.0);
      theta = Theta::Zero(inst.n_states(), inst.n_actions());
      break;
    case PgVariant::RS:
      ctx.variant = Variant::r(cfg.lambda);
      ctx.work = &inst;
      ctx.j_star = optimal_values(inst, ctx.variant).j_star;
      ctx.loja = loja_reference(inst, cfg.lambda);
      theta = Theta::Zero(inst.n_states(), inst.n_actions());
      break;
    case PgVariant::BRS: {
      PaddedInstance p = pad_actions(inst);
      ctx.bits = true;
      ctx.padded = std::move(p.inst);
      ctx.extended = extended_instance(ctx.padded, p.codec);
      ctx.variant = Variant::b(cfg.lambda);
      ctx.work = &ctx.padded;
      ctx.j_star = optimal_values(ctx.extended, Variant::r(cfg.lambda)).j_star;
      ctx.loja = loja_reference(ctx.extended, cfg.lambda);
      theta = Theta::Zero(p.codec.ext_rows(inst.n_states()), 2);
      gamma_bits = p.codec.k();
      break;
    }
  }
  if (project) {
    ball = cfg.radius ? ProjectionBall{*cfg.radius}
                      : ProjectionBall::for_bits(cfg.lambda, inst.gamma(), gamma_bits);
  }

  FedPgResult res;
  res.eta = cfg.eta ? *cfg.eta : auto_step_size(inst, cfg);
  res.j_star = ctx.j_star;
  const FrlInstance& work = *ctx.work;
  const int m = work.m();
  std::vector<Theta> local(static_cast<std::size_t>(m));

  for (int r = 0; r < cfg.rounds; ++r) {
    const auto t0 = Clock::now();
    parallel_for(m, cfg.threads, [&](int c) {
      Theta th = theta;
      for (int h = 0; h < cfg.local_steps; ++h) {
        Matrix g;
        if (hooks.gradient) {
          g = hooks.gradient(c, th);
        } else {
          const StreamKey key{cfg.master_seed, static_cast<std::uint64_t>(r),
                              hooks.shared_agent_streams ? 0u : static_cast<std::uint64_t>(c),
                              static_cast<std::uint64_t>(h)};
          g = reinforce_grad(work.agents[static_cast<std::size_t>(c)], th, ctx.variant, cfg.batch,
                             cfg.horizon, key)
                  .grad;
        }
        th += res.eta * g;
      }
      local[static_cast<std::size_t>(c)] = std::move(th);
    });
    Theta avg = Theta::Zero(theta.rows(), theta.cols());
    for (const Theta& th : local) avg += th;
    avg /= static_cast<double>(m);
    Theta next = project ? project_linf(avg, ball) : avg;
    if (hooks.on_server) hooks.on_server(r + 1, avg, next);
    if (hooks.post_server) hooks.post_server(next);
    theta = std::move(next);

    RoundMetrics met = ctx.evaluate(theta);
    met.round = r + 1;
    if (cfg.timing) {
      met.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    }
    res.metrics.push_back(met);
  }
  res.theta = std::move(theta);
  return res;
}

void FedQConfig::validate() const {
  if (rounds < 1 || local_steps < 1 || samples_per_step < 0) {
    throw Error(ErrorCode::ConfigError, "rounds and local_steps must be >= 1, samples >= 0");
  }
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "learning_rate must lie in (0, 1]");
  }
  if (threads < 1) throw Error(ErrorCode::ConfigError, "threads must be >= 1");
}

Policy greedy_policy(const Matrix& q) {
  Policy pi = Policy::Zero(q.rows(), q.cols());
  for (int s = 0; s < q.rows(); ++s) {
    int best = 0;
    for (int a = 1; a < q.cols(); ++a)
      if (q(s, a) > q(s, best)) best = a;
    pi(s, best) = 1.0;
  }
  return pi;
}

namespace {

double policy_objective(const FrlInstance& inst, const Policy& pi) {
  double acc = 0.0;
  for (const Mdp& m : inst.agents) acc += m.rho.dot(policy_eval(m, pi).v);
  return acc / inst.m();
}

}  // namespace

FedQResult run_fed_q(const FrlInstance& inst, const FedQConfig& cfg) {
  cfg.validate();
  const int ns = inst.n_states();
  const int na = inst.n_actions();
  const int m = inst.m();
  FedQResult res;
  res.j_star = optimal_values(inst, Variant::sm()).j_star;
  Matrix q = Matrix::Zero(ns, na);
  std::vector<Matrix> local(static_cast<std::size_t>(m));
  const double alpha = cfg.learning_rate;

  for (int r = 0; r < cfg.rounds; ++r) {
    const auto t0 = Clock::now();
    parallel_for(m, cfg.threads, [&](int c) {
      const Mdp& mdp = inst.agents[static_cast<std::size_t>(c)];
      Matrix qc = q;
      for (int h = 0; h < cfg.local_steps; ++h) {
        Engine eng = make_engine(StreamKey{cfg.master_seed, static_cast<std::uint64_t>(r),
                                           static_cast<std::uint64_t>(c),
                                           static_cast<std::uint64_t>(h)},
                                 0);
        for (int i = 0; i < cfg.samples_per_step; ++i) {
          const int s = std::min(ns - 1, static_cast<int>(uniform01(eng) * ns));
          const int a = std::min(na - 1, static_cast<int>(uniform01(eng) * na));
          const int sn = draw_index(mdp.kernel.row(mdp.row(s, a)).data(), ns, 1, eng);
          const double target = mdp.reward(s, a) + mdp.gamma * qc.row(sn).maxCoeff();
          qc(s, a) = (1.0 - alpha) * qc(s, a) + alpha * target;
        }
      }
      local[static_cast<std::size_t>(c)] = std::move(qc);
    });
    Matrix avg = Matrix::Zero(ns, na);
    for (const Matrix& qc : local) avg += qc;
    q = avg / static_cast<double>(m);

    RoundMetrics met;
    met.round = r + 1;
    const Policy pi = greedy_policy(q);
    met.objective = policy_objective(inst, pi);
    met.raw_return = met.objective;
    met.subopt = res.j_star - met.objective;
    met.theta_linf = linf(q);
    if (cfg.timing) {
      met.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    }
    res.metrics.push_back(met);
  }
  res.q = q;
  res.greedy = greedy_policy(q);
  return res;
}

std::vector<SpeedupCurve> speedup_experiment(const SpeedupSpec& spec) {
  if (spec.m_list.empty()) throw Error(ErrorCode::ConfigError, "M list is empty");
  if (spec.seeds < 1) throw Error(ErrorCode::ConfigError, "seeds must be >= 1");
  struct Job {
    int seed;
    int m;
    PgVariant variant;
  };
  std::vector<Job> jobs;
  for (int sd = 0; sd < spec.seeds; ++sd)
    for (int m : spec.m_list)
      for (PgVariant v : spec.variants) jobs.push_back({sd, m, v});
  std::vector<SpeedupCurve> out(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), spec.cfg.threads, [&](int i) {
    const Job& j = jobs[static_cast<std::size_t>(i)];
    const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(j.seed);
    const FrlInstance inst =
        build_synthetic(j.m, spec.n_states, spec.n_actions, spec.eps, seed, spec.gamma);
    FedPgConfig cfg = spec.cfg;
    cfg.variant = j.variant;
    cfg.master_seed = seed;
    cfg.threads = 1;
    FedPgResult r = run_fedpg(inst, cfg);
    out[static_cast<std::size_t>(i)] = {j.variant, j.m, j.seed, r.eta, std::move(r.metrics)};
  });
  return out;
}

}  // namespace fedpg

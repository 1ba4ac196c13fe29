#include "fedpg/mdp.hpp"

#include <cmath>
#include <sstream>

namespace fedpg {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SharedComponentMismatch: return "SharedComponentMismatch";
    case ErrorCode::StochasticityViolation: return "StochasticityViolation";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::CodecMismatch: return "CodecMismatch";
    case ErrorCode::SolveFailure: return "SolveFailure";
    case ErrorCode::DegeneratePolicy: return "DegeneratePolicy";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::CertificationFailure: return "CertificationFailure";
    case ErrorCode::ConfigParseError: return "ConfigParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

void check_simplex(const double* row, int n, int stride, const std::string& what) {
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = row[static_cast<std::ptrdiff_t>(i) * stride];
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::StochasticityViolation, what + " has a negative or non-finite entry");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSimplexTol) {
    std::ostringstream os;
    os << what << " sums to " << sum;
    throw Error(ErrorCode::StochasticityViolation, os.str());
  }
}

}  // namespace

void Mdp::validate() const {
  if (n_states < 1 || n_actions < 1) {
    throw Error(ErrorCode::DimensionMismatch, "state and action counts must be positive");
  }
  if (kernel.rows() != n_states * n_actions || kernel.cols() != n_states) {
    throw Error(ErrorCode::DimensionMismatch, "kernel shape does not match (S*A) x S");
  }
  if (reward.rows() != n_states || reward.cols() != n_actions) {
    throw Error(ErrorCode::DimensionMismatch, "reward shape does not match S x A");
  }
  if (rho.size() != n_states) {
    throw Error(ErrorCode::DimensionMismatch, "rho length does not match S");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw Error(ErrorCode::ConfigError, "gamma must lie in [0, 1)");
  }
  if (!reward.allFinite()) {
    throw Error(ErrorCode::ConfigError, "reward table has non-finite entries");
  }
  for (int r = 0; r < kernel.rows(); ++r) {
    check_simplex(kernel.row(r).data(), n_states, 1,
                  "kernel row (" + std::to_string(r / n_actions) + "," +
                      std::to_string(r % n_actions) + ")");
  }
  check_simplex(rho.data(), n_states, 1, "rho");
}

bool rewards_in_unit_interval(const Mdp& mdp) {
  return mdp.reward.minCoeff() >= 0.0 && mdp.reward.maxCoeff() <= 1.0;
}

FrlInstance new_frl_instance(std::vector<Mdp> mdps) {
  if (mdps.empty()) throw Error(ErrorCode::DimensionMismatch, "instance needs at least one agent");
  for (const auto& m : mdps) m.validate();
  const Mdp& ref = mdps.front();
  for (std::size_t c = 1; c < mdps.size(); ++c) {
    const Mdp& m = mdps[c];
    if (m.n_states != ref.n_states || m.n_actions != ref.n_actions) {
      throw Error(ErrorCode::DimensionMismatch,
                  "agent " + std::to_string(c) + " disagrees on |S| or |A|");
    }
    if (m.gamma != ref.gamma) {
      throw Error(ErrorCode::SharedComponentMismatch, "agent " + std::to_string(c) + " gamma differs");
    }
    if (m.reward != ref.reward) {
      throw Error(ErrorCode::SharedComponentMismatch, "agent " + std::to_string(c) + " reward differs");
    }
    if (m.rho != ref.rho) {
      throw Error(ErrorCode::SharedComponentMismatch, "agent " + std::to_string(c) + " rho differs");
    }
  }
  FrlInstance inst;
  inst.agents = std::move(mdps);
  return inst;
}

HeterogeneityReport heterogeneity(const FrlInstance& inst) {
  HeterogeneityReport rep;
  const int rows = inst.n_states() * inst.n_actions();
  for (int c = 0; c < inst.m(); ++c) {
    for (int d = c + 1; d < inst.m(); ++d) {
      const Matrix diff = inst.agents[c].kernel - inst.agents[d].kernel;
      for (int r = 0; r < rows; ++r) {
        double l1 = diff.row(r).cwiseAbs().sum();
        if (l1 > rep.epsilon_p) {
          rep.epsilon_p = l1;
          rep.agent_a = c;
          rep.agent_b = d;
          rep.state = r / inst.n_actions();
          rep.action = r % inst.n_actions();
        }
      }
    }
  }
  return rep;
}

Matrix mixture_kernel(const Matrix& common, const Matrix& individual, double eps) {
  if (common.rows() != individual.rows() || common.cols() != individual.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "mixture components differ in shape");
  }
  if (!(eps >= 0.0 && eps <= 1.0)) throw Error(ErrorCode::ConfigError, "mixing weight outside [0,1]");
  if (eps == 0.0) return common;
  if (eps == 1.0) return individual;
  return (1.0 - eps) * common + eps * individual;
}

Matrix policy_kernel(const Mdp& mdp, const Matrix& pi) {
  Matrix p = Matrix::Zero(mdp.n_states, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      p.row(s) += pi(s, a) * mdp.kernel.row(mdp.row(s, a));
    }
  }
  return p;
}

}  // namespace fedpg

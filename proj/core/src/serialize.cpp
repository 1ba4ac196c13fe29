#include <cstdio>

#include <json.hpp>

#include "fedpg/mdp.hpp"
#include "fedpg/policy.hpp"

namespace fedpg {

using nlohmann::json;

namespace {

json matrix_rows(const Matrix& m) {
  json out = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::ConfigParseError, std::string("missing key '") + key + "'");
  return *it;
}

}  // namespace

std::string instance_to_json(const FrlInstance& inst, int indent) {
  json j;
  j["n_states"] = inst.n_states();
  j["n_actions"] = inst.n_actions();
  j["gamma"] = inst.gamma();
  j["reward"] = matrix_rows(inst.reward());
  json rho = json::array();
  for (int s = 0; s < inst.n_states(); ++s) rho.push_back(inst.rho()(s));
  j["rho"] = rho;
  json kernels = json::array();
  for (const Mdp& m : inst.agents) {
    json ks = json::array();
    for (int s = 0; s < m.n_states; ++s) {
      json ka = json::array();
      for (int a = 0; a < m.n_actions; ++a) {
        json row = json::array();
        for (int t = 0; t < m.n_states; ++t) row.push_back(m.p(s, a, t));
        ka.push_back(std::move(row));
      }
      ks.push_back(std::move(ka));
    }
    kernels.push_back(std::move(ks));
  }
  j["kernels"] = kernels;
  return j.dump(indent);
}

FrlInstance instance_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigParseError, std::string("instance JSON: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* known[] = {"n_states", "n_actions", "gamma", "reward", "rho", "kernels"};
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw Error(ErrorCode::ConfigParseError, "unknown key '" + it.key() + "'");
  }
  try {
    const int ns = field(j, "n_states").get<int>();
    const int na = field(j, "n_actions").get<int>();
    const double gamma = field(j, "gamma").get<double>();
    const json& rj = field(j, "reward");
    const json& pj = field(j, "rho");
    const json& kj = field(j, "kernels");
    if (ns < 1 || na < 1) throw Error(ErrorCode::DimensionMismatch, "non-positive dimensions");
    if (static_cast<int>(rj.size()) != ns || static_cast<int>(pj.size()) != ns) {
      throw Error(ErrorCode::DimensionMismatch, "reward/rho length does not match n_states");
    }
    Matrix reward(ns, na);
    Vector rho(ns);
    for (int s = 0; s < ns; ++s) {
      if (static_cast<int>(rj[s].size()) != na) {
        throw Error(ErrorCode::DimensionMismatch, "reward row length does not match n_actions");
      }
      for (int a = 0; a < na; ++a) reward(s, a) = rj[s][a].get<double>();
      rho(s) = pj[s].get<double>();
    }
    std::vector<Mdp> mdps;
    for (const json& kc : kj) {
      Mdp m;
      m.n_states = ns;
      m.n_actions = na;
      m.gamma = gamma;
      m.reward = reward;
      m.rho = rho;
      m.kernel = Matrix(ns * na, ns);
      if (static_cast<int>(kc.size()) != ns) throw Error(ErrorCode::DimensionMismatch, "kernel state count");
      for (int s = 0; s < ns; ++s) {
        if (static_cast<int>(kc[s].size()) != na) {
          throw Error(ErrorCode::DimensionMismatch, "kernel action count");
        }
        for (int a = 0; a < na; ++a) {
          if (static_cast<int>(kc[s][a].size()) != ns) {
            throw Error(ErrorCode::DimensionMismatch, "kernel row length");
          }
          for (int t = 0; t < ns; ++t) m.kernel(m.row(s, a), t) = kc[s][a][t].get<double>();
        }
      }
      mdps.push_back(std::move(m));
    }
    return new_frl_instance(std::move(mdps));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigParseError, std::string("instance JSON: ") + e.what());
  }
}

std::string instance_hash(const FrlInstance& inst) {
  const std::string text = instance_to_json(inst);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string theta_to_json(const Theta& theta, int k, int n_states) {
  json j;
  j["shape"] = {theta.rows(), theta.cols()};
  if (k > 0) {
    j["k"] = k;
    j["n_states"] = n_states;
  }
  j["data"] = matrix_rows(theta);
  return j.dump();
}

Theta theta_from_json(const std::string& text, int* k, int* n_states) {
  try {
    json j = json::parse(text);
    const json& shape = field(j, "shape");
    const int rows = shape.at(0).get<int>();
    const int cols = shape.at(1).get<int>();
    const json& data = field(j, "data");
    if (static_cast<int>(data.size()) != rows) throw Error(ErrorCode::ShapeMismatch, "theta row count");
    Theta t(rows, cols);
    for (int i = 0; i < rows; ++i) {
      if (static_cast<int>(data[i].size()) != cols) throw Error(ErrorCode::ShapeMismatch, "theta row length");
      for (int c = 0; c < cols; ++c) t(i, c) = data[i][c].get<double>();
    }
    if (k) *k = j.value("k", 0);
    if (n_states) *n_states = j.value("n_states", 0);
    if (!t.allFinite()) throw Error(ErrorCode::ConfigParseError, "theta has non-finite entries");
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigParseError, std::string("theta JSON: ") + e.what());
  }
}

}  // namespace fedpg

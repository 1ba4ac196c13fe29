#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedpg/builders.hpp"
#include "fedpg/exact_eval.hpp"
#include "fedpg/extended.hpp"
#include "fedpg/sampling.hpp"
#include "fedpg/verification.hpp"

#ifndef FEDPG_VERSION
#define FEDPG_VERSION "0.0.0"
#endif

namespace fedpg::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

const char* const kCsvHeader =
    "round,variant,M,H,B,T,eta,lambda,objective,raw_return,grad_norm,subopt,mu_diag,theta_linf,"
    "wall_ms";
const char* const kVersion = FEDPG_VERSION;

namespace {

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::ConfigParseError, "config key '" + key + "': " + why);
}

int get_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) bad_key(key, "expected an integer");
  return v.get<int>();
}

std::uint64_t get_u64(const json& v, const std::string& key) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
    bad_key(key, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double get_double(const json& v, const std::string& key) {
  if (!v.is_number()) bad_key(key, "expected a number");
  return v.get<double>();
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) bad_key(key, "expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) bad_key(key, "expected a boolean");
  return v.get<bool>();
}

std::optional<double> get_opt_double(const json& v, const std::string& key) {
  if (v.is_null()) return std::nullopt;
  return get_double(v, key);
}

using Setter = std::function<void(const json&, const std::string&)>;

void read_section(const json& sec, const std::string& name, const std::map<std::string, Setter>& setters) {
  if (!sec.is_object()) bad_key(name, "expected an object");
  for (auto it = sec.begin(); it != sec.end(); ++it) {
    const std::string key = name + "." + it.key();
    auto s = setters.find(it.key());
    if (s == setters.end()) bad_key(key, "unknown key");
    s->second(it.value(), key);
  }
}

const std::set<std::string> kKinds{"synthetic",         "synthetic_extreme", "gridworld",
                                   "gridworld_extreme", "counterexample",    "file"};

void check_config(const Config& c) {
  if (!kKinds.count(c.instance.kind)) bad_key("instance.kind", "unknown kind '" + c.instance.kind + "'");
  if (c.instance.m < 1) bad_key("instance.m", "must be >= 1");
  if (c.instance.n_states < 1) bad_key("instance.n_states", "must be >= 1");
  if (c.instance.n_actions < 1) bad_key("instance.n_actions", "must be >= 1");
  if (!(c.instance.eps >= 0.0 && c.instance.eps <= 1.0)) bad_key("instance.eps", "must lie in [0, 1]");
  if (c.instance.gamma && !(*c.instance.gamma >= 0.0 && *c.instance.gamma < 1.0)) {
    bad_key("instance.gamma", "must lie in [0, 1)");
  }
  if (c.instance.kind == "counterexample") {
    try {
      counterexample_from_name(c.instance.which);
    } catch (const Error&) {
      bad_key("instance.which", "unknown counterexample '" + c.instance.which + "'");
    }
  }
  if (c.instance.kind == "file" && c.instance.path.empty()) bad_key("instance.path", "required for kind 'file'");
  if (c.algorithm.name != "fedpg" && c.algorithm.name != "fedq") {
    bad_key("algorithm.name", "expected 'fedpg' or 'fedq'");
  }
  try {
    variant_from_name(c.algorithm.variant);
  } catch (const Error&) {
    bad_key("algorithm.variant", "unknown variant '" + c.algorithm.variant + "'");
  }
  for (const auto& v : c.run.variants) {
    try {
      variant_from_name(v);
    } catch (const Error&) {
      bad_key("run.variants", "unknown variant '" + v + "'");
    }
  }
  const auto& p = c.algorithm.projection;
  if (p != "default" && p != "none" && p != "ball") {
    bad_key("algorithm.projection", "expected 'default', 'none' or 'ball'");
  }
  if (c.algorithm.rounds < 1) bad_key("algorithm.rounds", "must be >= 1");
  if (c.algorithm.local_steps < 1) bad_key("algorithm.local_steps", "must be >= 1");
  if (c.algorithm.batch < 1) bad_key("algorithm.batch", "must be >= 1");
  if (c.algorithm.horizon < 1) bad_key("algorithm.horizon", "must be >= 1");
  if (!(c.algorithm.lambda >= 0.0)) bad_key("algorithm.lambda", "must be >= 0");
  if (c.algorithm.eta && !(*c.algorithm.eta >= 0.0)) bad_key("algorithm.eta", "must be >= 0");
  if (c.algorithm.radius && !(*c.algorithm.radius > 0.0)) bad_key("algorithm.radius", "must be > 0");
  if (!(c.algorithm.learning_rate > 0.0 && c.algorithm.learning_rate <= 1.0)) {
    bad_key("algorithm.learning_rate", "must lie in (0, 1]");
  }
  if (c.algorithm.samples_per_step && *c.algorithm.samples_per_step < 0) {
    bad_key("algorithm.samples_per_step", "must be >= 0");
  }
  if (c.run.seeds < 1) bad_key("run.seeds", "must be >= 1");
  if (c.run.threads < 1) bad_key("run.threads", "must be >= 1");
  if (c.run.m_list.empty()) bad_key("run.m_list", "must not be empty");
  for (int m : c.run.m_list)
    if (m < 1) bad_key("run.m_list", "entries must be >= 1");
  if (c.run.variants.empty()) bad_key("run.variants", "must not be empty");
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

fs::path prepare_out(const Config& cfg) {
  fs::path dir(cfg.run.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create '" + dir.string() + "': " + ec.message());
  return dir;
}

void write_manifest(const fs::path& dir, const std::string& command, const Config& cfg,
                    const std::vector<std::string>& hashes, const std::vector<std::uint64_t>& seeds,
                    const std::string& started, const std::vector<std::string>& outputs) {
  ojson m;
  m["command"] = command;
  m["version"] = kVersion;
  m["config"] = ojson::parse(serialize_config(cfg));
  m["instance_hash"] = hashes.size() == 1 ? ojson(hashes.front()) : ojson(hashes);
  m["seeds"] = seeds;
  m["started_at"] = started;
  m["finished_at"] = utc_now();
  m["outputs"] = outputs;
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

std::vector<PgVariant> run_variants(const Config& cfg) {
  std::vector<PgVariant> out;
  for (const auto& v : cfg.run.variants) out.push_back(variant_from_name(v));
  return out;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

std::string fedq_row(const RoundMetrics& m, int agents, const AlgorithmSpec& alg, int samples) {
  std::ostringstream os;
  os << m.round << ",FedQ," << agents << ',' << alg.local_steps << ',' << samples << ",1,"
     << fmt(alg.learning_rate) << ',' << fmt(0.0) << ',' << fmt(m.objective) << ','
     << fmt(m.raw_return) << ',' << fmt(m.grad_norm) << ',' << fmt(m.subopt) << ','
     << fmt(m.mu_diag) << ',' << fmt(m.theta_linf) << ',' << fmt(m.wall_ms);
  return os.str();
}

}  // namespace

Config default_config(const std::string& command) {
  Config c;
  if (command == "speedup") {
    c.run.seeds = 4;
  } else if (command == "compare-baseline") {
    c.run.seeds = 4;
    c.instance.m = 10;
    c.instance.eps = 0.0;
    c.algorithm.eta = 0.1;
  }
  return c;
}

Config parse_config(const std::string& text, const Config& base) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigParseError, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::ConfigParseError, "config must be a JSON object");
  if (doc.contains("config") && !doc.contains("instance")) {
    static const std::set<std::string> manifest_keys{"command", "version",    "config",
                                                     "instance_hash", "seeds", "started_at",
                                                     "finished_at",   "outputs"};
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      if (!manifest_keys.count(it.key())) bad_key(it.key(), "unknown manifest key");
    }
    return parse_config(doc["config"].dump(), base);
  }

  Config c = base;
  auto& in = c.instance;
  auto& al = c.algorithm;
  auto& rn = c.run;
  const std::map<std::string, Setter> inst_set{
      {"kind", [&](const json& v, const std::string& k) { in.kind = get_string(v, k); }},
      {"m", [&](const json& v, const std::string& k) { in.m = get_int(v, k); }},
      {"n_states", [&](const json& v, const std::string& k) { in.n_states = get_int(v, k); }},
      {"n_actions", [&](const json& v, const std::string& k) { in.n_actions = get_int(v, k); }},
      {"eps", [&](const json& v, const std::string& k) { in.eps = get_double(v, k); }},
      {"seed", [&](const json& v, const std::string& k) { in.seed = get_u64(v, k); }},
      {"gamma", [&](const json& v, const std::string& k) { in.gamma = get_opt_double(v, k); }},
      {"which", [&](const json& v, const std::string& k) { in.which = get_string(v, k); }},
      {"path", [&](const json& v, const std::string& k) { in.path = get_string(v, k); }},
  };
  const std::map<std::string, Setter> alg_set{
      {"name", [&](const json& v, const std::string& k) { al.name = get_string(v, k); }},
      {"variant", [&](const json& v, const std::string& k) { al.variant = get_string(v, k); }},
      {"lambda", [&](const json& v, const std::string& k) { al.lambda = get_double(v, k); }},
      {"rounds", [&](const json& v, const std::string& k) { al.rounds = get_int(v, k); }},
      {"local_steps", [&](const json& v, const std::string& k) { al.local_steps = get_int(v, k); }},
      {"batch", [&](const json& v, const std::string& k) { al.batch = get_int(v, k); }},
      {"horizon", [&](const json& v, const std::string& k) { al.horizon = get_int(v, k); }},
      {"eta",
       [&](const json& v, const std::string& k) {
         if (v.is_string()) {
           if (v.get<std::string>() != "auto") bad_key(k, "expected 'auto' or a number");
           al.eta.reset();
         } else {
           al.eta = get_double(v, k);
         }
       }},
      {"projection", [&](const json& v, const std::string& k) { al.projection = get_string(v, k); }},
      {"radius", [&](const json& v, const std::string& k) { al.radius = get_opt_double(v, k); }},
      {"learning_rate",
       [&](const json& v, const std::string& k) { al.learning_rate = get_double(v, k); }},
      {"samples_per_step",
       [&](const json& v, const std::string& k) {
         if (v.is_null()) {
           al.samples_per_step.reset();
         } else {
           al.samples_per_step = get_int(v, k);
         }
       }},
  };
  const std::map<std::string, Setter> run_set{
      {"seed", [&](const json& v, const std::string& k) { rn.seed = get_u64(v, k); }},
      {"seeds", [&](const json& v, const std::string& k) { rn.seeds = get_int(v, k); }},
      {"m_list",
       [&](const json& v, const std::string& k) {
         if (!v.is_array()) bad_key(k, "expected an array of integers");
         rn.m_list.clear();
         for (const auto& e : v) rn.m_list.push_back(get_int(e, k));
       }},
      {"variants",
       [&](const json& v, const std::string& k) {
         if (!v.is_array()) bad_key(k, "expected an array of strings");
         rn.variants.clear();
         for (const auto& e : v) rn.variants.push_back(get_string(e, k));
       }},
      {"threads", [&](const json& v, const std::string& k) { rn.threads = get_int(v, k); }},
      {"timing", [&](const json& v, const std::string& k) { rn.timing = get_bool(v, k); }},
      {"out", [&](const json& v, const std::string& k) { rn.out = get_string(v, k); }},
  };
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() == "instance") {
      read_section(it.value(), "instance", inst_set);
    } else if (it.key() == "algorithm") {
      read_section(it.value(), "algorithm", alg_set);
    } else if (it.key() == "run") {
      read_section(it.value(), "run", run_set);
    } else {
      bad_key(it.key(), "unknown key");
    }
  }
  check_config(c);
  return c;
}

std::string serialize_config(const Config& c) {
  ojson doc;
  ojson& in = doc["instance"];
  in["kind"] = c.instance.kind;
  in["m"] = c.instance.m;
  in["n_states"] = c.instance.n_states;
  in["n_actions"] = c.instance.n_actions;
  in["eps"] = c.instance.eps;
  in["seed"] = c.instance.seed;
  in["gamma"] = c.instance.gamma ? ojson(*c.instance.gamma) : ojson(nullptr);
  in["which"] = c.instance.which;
  in["path"] = c.instance.path;
  ojson& al = doc["algorithm"];
  al["name"] = c.algorithm.name;
  al["variant"] = c.algorithm.variant;
  al["lambda"] = c.algorithm.lambda;
  al["rounds"] = c.algorithm.rounds;
  al["local_steps"] = c.algorithm.local_steps;
  al["batch"] = c.algorithm.batch;
  al["horizon"] = c.algorithm.horizon;
  al["eta"] = c.algorithm.eta ? ojson(*c.algorithm.eta) : ojson("auto");
  al["projection"] = c.algorithm.projection;
  al["radius"] = c.algorithm.radius ? ojson(*c.algorithm.radius) : ojson(nullptr);
  al["learning_rate"] = c.algorithm.learning_rate;
  al["samples_per_step"] =
      c.algorithm.samples_per_step ? ojson(*c.algorithm.samples_per_step) : ojson(nullptr);
  ojson& rn = doc["run"];
  rn["seed"] = c.run.seed;
  rn["seeds"] = c.run.seeds;
  rn["m_list"] = c.run.m_list;
  rn["variants"] = c.run.variants;
  rn["threads"] = c.run.threads;
  rn["timing"] = c.run.timing;
  rn["out"] = c.run.out;
  return doc.dump(2);
}

Config load_config(const std::string& path, const Config& base) {
  return parse_config(read_file(path), base);
}

FrlInstance build_instance(const InstanceSpec& s) {
  if (s.kind == "synthetic") {
    return build_synthetic(s.m, s.n_states, s.n_actions, s.eps, s.seed, s.gamma.value_or(0.9));
  }
  if (s.kind == "synthetic_extreme") return build_synthetic_extreme(s.seed, s.m, s.gamma.value_or(0.9));
  if (s.kind == "gridworld") return build_gridworld(s.m, s.eps, s.seed, false, s.gamma.value_or(0.95));
  if (s.kind == "gridworld_extreme") {
    return build_gridworld(s.m, s.eps, s.seed, true, s.gamma.value_or(0.95));
  }
  if (s.kind == "counterexample") {
    Fig5Params p;
    if (s.gamma) p.gamma = *s.gamma;
    return build_counterexample(counterexample_from_name(s.which), p);
  }
  if (s.kind == "file") return instance_from_json(read_file(s.path));
  throw Error(ErrorCode::ConfigParseError, "config key 'instance.kind': unknown kind '" + s.kind + "'");
}

FedPgConfig fedpg_config(const Config& c, std::uint64_t seed) {
  FedPgConfig f;
  f.variant = variant_from_name(c.algorithm.variant);
  f.lambda = c.algorithm.lambda;
  f.rounds = c.algorithm.rounds;
  f.local_steps = c.algorithm.local_steps;
  f.batch = c.algorithm.batch;
  f.horizon = c.algorithm.horizon;
  f.eta = c.algorithm.eta;
  if (c.algorithm.projection == "none") f.projection = ProjectionKind::None;
  if (c.algorithm.projection == "ball") f.projection = ProjectionKind::Ball;
  f.radius = c.algorithm.radius;
  f.master_seed = seed;
  f.threads = c.run.threads;
  f.timing = c.run.timing;
  return f;
}

FedQConfig fedq_config(const Config& c, std::uint64_t seed) {
  FedQConfig f;
  f.rounds = c.algorithm.rounds;
  f.local_steps = c.algorithm.local_steps;
  f.samples_per_step = c.algorithm.samples_per_step.value_or(c.algorithm.batch * c.algorithm.horizon);
  f.learning_rate = c.algorithm.learning_rate;
  f.master_seed = seed;
  f.threads = c.run.threads;
  f.timing = c.run.timing;
  return f;
}

std::string format_metrics_row(const RoundMetrics& m, const std::string& variant, int agents,
                               const AlgorithmSpec& alg, double eta, double lambda) {
  std::ostringstream os;
  os << m.round << ',' << variant << ',' << agents << ',' << alg.local_steps << ',' << alg.batch
     << ',' << alg.horizon << ',' << fmt(eta) << ',' << fmt(lambda) << ',' << fmt(m.objective)
     << ',' << fmt(m.raw_return) << ',' << fmt(m.grad_norm) << ',' << fmt(m.subopt) << ','
     << fmt(m.mu_diag) << ',' << fmt(m.theta_linf) << ',' << fmt(m.wall_ms);
  return os.str();
}

void apply_overrides(Config& cfg, const Overrides& ov) {
  if (ov.out) cfg.run.out = *ov.out;
  if (ov.seeds) {
    if (*ov.seeds < 1) throw Error(ErrorCode::ConfigParseError, "--seeds must be >= 1");
    cfg.run.seeds = *ov.seeds;
  }
  if (ov.variant) {
    try {
      const PgVariant v = variant_from_name(*ov.variant);
      cfg.algorithm.variant = variant_name(v);
      cfg.run.variants = {variant_name(v)};
    } catch (const Error&) {
      throw Error(ErrorCode::ConfigParseError, "--variant: unknown variant '" + *ov.variant + "'");
    }
  }
  if (ov.threads) cfg.run.threads = *ov.threads;
  if (const char* env = std::getenv("FEDPG_LAB_THREADS"); env && *env) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) {
      throw Error(ErrorCode::ConfigParseError, "FEDPG_LAB_THREADS must be a positive integer");
    }
    cfg.run.threads = static_cast<int>(n);
  }
  if (cfg.run.threads < 1) throw Error(ErrorCode::ConfigParseError, "--threads must be >= 1");
}

int cmd_run(const Config& cfg, std::ostream& log) {
  const std::string started = utc_now();
  const fs::path dir = prepare_out(cfg);
  std::vector<std::string> hashes, outputs;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < cfg.run.seeds; ++i) {
    InstanceSpec is = cfg.instance;
    is.seed = cfg.instance.seed + static_cast<std::uint64_t>(i);
    const std::uint64_t seed = cfg.run.seed + static_cast<std::uint64_t>(i);
    const FrlInstance inst = build_instance(is);
    std::ostringstream csv;
    csv << kCsvHeader << '\n';
    double final_obj = 0.0;
    if (cfg.algorithm.name == "fedq") {
      const FedQConfig q = fedq_config(cfg, seed);
      const FedQResult r = run_fed_q(inst, q);
      for (const auto& m : r.metrics) csv << fedq_row(m, inst.m(), cfg.algorithm, q.samples_per_step) << '\n';
      final_obj = r.metrics.back().objective;
    } else {
      const FedPgConfig f = fedpg_config(cfg, seed);
      const FedPgResult r = run_fedpg(inst, f);
      const double lambda = f.variant == PgVariant::S ? 0.0 : f.lambda;
      for (const auto& m : r.metrics) {
        csv << format_metrics_row(m, variant_name(f.variant), inst.m(), cfg.algorithm, r.eta, lambda) << '\n';
      }
      final_obj = r.metrics.back().objective;
    }
    const std::string name = cfg.run.seeds == 1 ? "metrics.csv" : "metrics_seed" + std::to_string(i) + ".csv";
    write_file(dir / name, csv.str());
    outputs.push_back(name);
    hashes.push_back(instance_hash(inst));
    seeds.push_back(seed);
    log << name << ": final objective " << fmt(final_obj) << '\n';
  }
  outputs.push_back("manifest.json");
  write_manifest(dir, "run", cfg, hashes, seeds, started, outputs);
  return kOk;
}

int cmd_speedup(const Config& cfg, std::ostream& log) {
  const std::string started = utc_now();
  const fs::path dir = prepare_out(cfg);
  SpeedupSpec spec;
  spec.n_states = cfg.instance.n_states;
  spec.n_actions = cfg.instance.n_actions;
  spec.eps = cfg.instance.eps;
  spec.gamma = cfg.instance.gamma.value_or(0.9);
  spec.m_list = cfg.run.m_list;
  spec.variants = run_variants(cfg);
  spec.seeds = cfg.run.seeds;
  spec.base_seed = cfg.run.seed;
  spec.cfg = fedpg_config(cfg, cfg.run.seed);
  const auto curves = speedup_experiment(spec);

  std::ostringstream csv;
  csv << "seed," << kCsvHeader << '\n';
  for (const auto& c : curves) {
    const double lambda = c.variant == PgVariant::S ? 0.0 : spec.cfg.lambda;
    for (const auto& m : c.metrics) {
      csv << c.seed << ',' << format_metrics_row(m, variant_name(c.variant), c.m, cfg.algorithm, c.eta, lambda)
          << '\n';
    }
  }
  write_file(dir / "speedup.csv", csv.str());

  // One gnuplot index block per (variant, M).
  std::ostringstream dat;
  dat << "# variant M round subopt_mean subopt_std n_seeds\n";
  std::ostringstream fin;
  fin << "# variant M final_subopt_mean final_subopt_std n_seeds\n";
  bool first = true;
  for (PgVariant v : spec.variants) {
    for (int m : spec.m_list) {
      std::vector<const SpeedupCurve*> group;
      for (const auto& c : curves)
        if (c.variant == v && c.m == m) group.push_back(&c);
      if (!first) dat << "\n\n";
      first = false;
      dat << "# " << variant_name(v) << " M=" << m << '\n';
      for (int r = 0; r < spec.cfg.rounds; ++r) {
        std::vector<double> xs;
        for (const auto* c : group) xs.push_back(c->metrics[static_cast<std::size_t>(r)].subopt);
        dat << variant_name(v) << ' ' << m << ' ' << r + 1 << ' ' << fmt(mean_of(xs)) << ' '
            << fmt(std_of(xs)) << ' ' << xs.size() << '\n';
        if (r + 1 == spec.cfg.rounds) {
          fin << variant_name(v) << ' ' << m << ' ' << fmt(mean_of(xs)) << ' ' << fmt(std_of(xs))
              << ' ' << xs.size() << '\n';
          log << variant_name(v) << " M=" << m << ": final subopt " << fmt(mean_of(xs)) << " +- "
              << fmt(std_of(xs)) << '\n';
        }
      }
    }
  }
  write_file(dir / "speedup_summary.dat", dat.str());
  write_file(dir / "speedup_final.dat", fin.str());

  std::vector<std::string> hashes;
  std::vector<std::uint64_t> seeds;
  for (int sd = 0; sd < spec.seeds; ++sd) {
    const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(sd);
    seeds.push_back(seed);
    for (int m : spec.m_list) {
      hashes.push_back(instance_hash(build_synthetic(m, spec.n_states, spec.n_actions, spec.eps, seed, spec.gamma)));
    }
  }
  write_manifest(dir, "speedup", cfg, hashes, seeds, started,
                 {"speedup.csv", "speedup_summary.dat", "speedup_final.dat", "manifest.json"});
  return kOk;
}

std::vector<BaselineCurve> compare_baseline(const Config& cfg) {
  struct Job {
    int instance;  // 0 synthetic_extreme, 1 gridworld_extreme
    int algo;      // index into variants, or -1 for Fed-Q
    int seed;
  };
  const auto variants = run_variants(cfg);
  std::vector<Job> jobs;
  for (int sd = 0; sd < cfg.run.seeds; ++sd)
    for (int i = 0; i < 2; ++i) {
      for (int a = 0; a < static_cast<int>(variants.size()); ++a) jobs.push_back({i, a, sd});
      jobs.push_back({i, -1, sd});
    }
  std::vector<BaselineCurve> out(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), cfg.run.threads, [&](int j) {
    const Job& job = jobs[static_cast<std::size_t>(j)];
    const std::uint64_t seed = cfg.run.seed + static_cast<std::uint64_t>(job.seed);
    InstanceSpec is = cfg.instance;
    is.kind = job.instance == 0 ? "synthetic_extreme" : "gridworld_extreme";
    is.seed = cfg.instance.seed + static_cast<std::uint64_t>(job.seed);
    const FrlInstance inst = build_instance(is);
    BaselineCurve& c = out[static_cast<std::size_t>(j)];
    c.instance = is.kind;
    c.seed = job.seed;
    if (job.algo < 0) {
      FedQConfig q = fedq_config(cfg, seed);
      q.threads = 1;
      c.algorithm = "FedQ";
      c.eta = q.learning_rate;
      c.metrics = run_fed_q(inst, q).metrics;
    } else {
      FedPgConfig f = fedpg_config(cfg, seed);
      f.variant = variants[static_cast<std::size_t>(job.algo)];
      f.threads = 1;
      FedPgResult r = run_fedpg(inst, f);
      c.algorithm = variant_name(f.variant);
      c.eta = r.eta;
      c.metrics = std::move(r.metrics);
    }
  });
  return out;
}

int cmd_compare_baseline(const Config& cfg, std::ostream& log) {
  const std::string started = utc_now();
  const fs::path dir = prepare_out(cfg);
  const auto curves = compare_baseline(cfg);
  const int samples = fedq_config(cfg, 0).samples_per_step;

  std::ostringstream csv;
  csv << "instance,seed," << kCsvHeader << '\n';
  for (const auto& c : curves) {
    for (const auto& m : c.metrics) {
      csv << c.instance << ',' << c.seed << ',';
      if (c.algorithm == "FedQ") {
        csv << fedq_row(m, cfg.instance.m, cfg.algorithm, samples);
      } else {
        const double lambda = c.algorithm == "S" ? 0.0 : cfg.algorithm.lambda;
        csv << format_metrics_row(m, c.algorithm, cfg.instance.m, cfg.algorithm, c.eta, lambda);
      }
      csv << '\n';
    }
  }
  write_file(dir / "compare.csv", csv.str());

  // raw_return is the unregularized J for every algorithm.
  std::ostringstream dat;
  dat << "# instance algorithm round J_mean J_std n_seeds\n";
  std::ostringstream fin;
  fin << "# instance algorithm final_J_mean final_J_std n_seeds\n";
  std::vector<std::string> algos;
  for (const auto& v : cfg.run.variants) algos.push_back(variant_name(variant_from_name(v)));
  algos.push_back("FedQ");
  bool first = true;
  for (const std::string inst : {"synthetic_extreme", "gridworld_extreme"}) {
    std::map<std::string, double> finals;
    for (const auto& a : algos) {
      std::vector<const BaselineCurve*> group;
      for (const auto& c : curves)
        if (c.instance == inst && c.algorithm == a) group.push_back(&c);
      if (!first) dat << "\n\n";
      first = false;
      dat << "# " << inst << ' ' << a << '\n';
      for (int r = 0; r < cfg.algorithm.rounds; ++r) {
        std::vector<double> xs;
        for (const auto* c : group) xs.push_back(c->metrics[static_cast<std::size_t>(r)].raw_return);
        dat << inst << ' ' << a << ' ' << r + 1 << ' ' << fmt(mean_of(xs)) << ' ' << fmt(std_of(xs))
            << ' ' << xs.size() << '\n';
        if (r + 1 == cfg.algorithm.rounds) {
          finals[a] = mean_of(xs);
          fin << inst << ' ' << a << ' ' << fmt(mean_of(xs)) << ' ' << fmt(std_of(xs)) << ' '
              << xs.size() << '\n';
        }
      }
    }
    for (const auto& a : algos) log << inst << ' ' << a << ": final J " << fmt(finals[a]) << '\n';
  }
  write_file(dir / "compare_summary.dat", dat.str());
  write_file(dir / "compare_final.dat", fin.str());

  std::vector<std::string> hashes;
  std::vector<std::uint64_t> seeds;
  for (int sd = 0; sd < cfg.run.seeds; ++sd) {
    seeds.push_back(cfg.run.seed + static_cast<std::uint64_t>(sd));
    for (const char* kind : {"synthetic_extreme", "gridworld_extreme"}) {
      InstanceSpec is = cfg.instance;
      is.kind = kind;
      is.seed = cfg.instance.seed + static_cast<std::uint64_t>(sd);
      hashes.push_back(instance_hash(build_instance(is)));
    }
  }
  write_manifest(dir, "compare-baseline", cfg, hashes, seeds, started,
                 {"compare.csv", "compare_summary.dat", "compare_final.dat", "manifest.json"});
  return kOk;
}

namespace {

ojson check_hyperplane(PgVariant variant, bool broken, bool& ok) {
  const FrlInstance inst = build_synthetic(3, 4, 4, 0.3, 11);
  FedPgConfig f;
  f.variant = variant;
  f.rounds = 20;
  f.local_steps = 5;
  f.batch = 5;
  f.horizon = 20;
  f.eta = 0.1;
  f.projection = ProjectionKind::Ball;
  f.master_seed = 3;
  FedPgHooks hooks;
  double worst = 0.0;
  int bad_round = -1;
  int round = 0;
  hooks.on_server = [&](int r, const Theta&, const Theta&) { round = r; };
  hooks.post_server = [&](Theta& th) {
    if (broken) th(0, 0) += 1e-3;
    const double dev = th.rowwise().sum().cwiseAbs().maxCoeff();
    worst = std::max(worst, dev);
    if (dev > 1e-9 && bad_round < 0) bad_round = round;
  };
  run_fedpg(inst, f, hooks);
  ok = bad_round < 0;
  ojson j;
  j["variant"] = variant_name(variant);
  j["rounds"] = f.rounds;
  j["max_row_sum"] = worst;
  j["first_violation_round"] = bad_round;
  j["passed"] = ok;
  return j;
}

}  // namespace

int cmd_verify(const Config& cfg, const VerifyOptions& opts, std::ostream& log) {
  const fs::path dir = prepare_out(cfg);
  ojson report;
  bool all_ok = true;

  ojson seps = ojson::array();
  for (const auto& c : compute_separations()) {
    ojson j;
    j["which"] = separation_name(c.which);
    j["lhs"] = c.lhs_value;
    j["rhs"] = c.rhs_value;
    j["margin"] = c.margin;
    j["method"] = c.method;
    j["passed"] = c.passed;
    all_ok = all_ok && c.passed;
    log << "separation " << separation_name(c.which) << ": " << fmt(c.lhs_value) << " vs "
        << fmt(c.rhs_value) << " margin " << fmt(c.margin) << (c.passed ? " ok" : " FAIL") << '\n';
    seps.push_back(j);
  }
  report["separations"] = seps;

  {
    double worst = 0.0;
    int cases = 0;
    const int sizes[3] = {2, 4, 8};
    const double lambdas[3] = {0.0, 0.05, 1.0};
    for (int i = 0; i < opts.random_cases; ++i) {
      const int na = sizes[i % 3];
      const double lambda = lambdas[(i / 3) % 3];
      const FrlInstance inst = build_synthetic(2, 3, na, 0.5, 1000 + static_cast<std::uint64_t>(i));
      const BitCodec codec = BitCodec::for_actions(na);
      Engine eng = make_engine(77, static_cast<std::uint64_t>(i));
      Theta th(codec.ext_rows(inst.n_states()), 2);
      for (int e = 0; e < th.size(); ++e) th.data()[e] = 4.0 * uniform01(eng) - 2.0;
      worst = std::max(worst, verify_bit_equivalence(inst, th, lambda));
      ++cases;
    }
    const bool ok = worst <= 1e-8;
    all_ok = all_ok && ok;
    report["bit_equivalence"] = {{"cases", cases}, {"max_deviation", worst}, {"passed", ok}};
    log << "bit equivalence: max deviation " << fmt(worst) << (ok ? " ok" : " FAIL") << '\n';
  }

  {
    const LandscapeScan scan = landscape_scan_fig5();
    const bool agents_clean = std::all_of(scan.agent_interior_mins.begin(), scan.agent_interior_mins.end(),
                                          [](int n) { return n == 0; });
    const bool ok = scan.max_deviation <= 1e-8 && scan.interior_min_index >= 0 && agents_clean;
    all_ok = all_ok && ok;
    ojson j;
    j["max_deviation"] = scan.max_deviation;
    j["interior_min_index"] = scan.interior_min_index;
    j["interior_min_theta"] =
        scan.interior_min_index >= 0 ? scan.theta[static_cast<std::size_t>(scan.interior_min_index)] : 0.0;
    j["interior_min_depth"] = scan.interior_min_depth;
    j["agent_interior_mins"] = scan.agent_interior_mins;
    j["passed"] = ok;
    report["landscape"] = j;
    log << "landscape: deviation " << fmt(scan.max_deviation) << ", averaged minimum at index "
        << scan.interior_min_index << (ok ? " ok" : " FAIL") << '\n';
  }

  {
    ojson sweeps = ojson::array();
    bool ok = true;
    for (int i = 0; i < 5; ++i) {
      const FrlInstance inst = build_synthetic(1 + i % 3, 2 + i % 3, 2 + i % 3, 0.5, 200 + static_cast<std::uint64_t>(i));
      const LojaSweep s = loja_sweep(inst, 0.05, 40, static_cast<std::uint64_t>(i));
      const bool pass = s.violations_sm == 0 && s.violations_r == 0;
      ok = ok && pass;
      sweeps.push_back({{"checks", s.checks},
                        {"violations_sm", s.violations_sm},
                        {"violations_r", s.violations_r},
                        {"min_slack_sm", s.min_slack_sm},
                        {"min_slack_r", s.min_slack_r},
                        {"passed", pass}});
    }
    int bound_fail = 0;
    for (int i = 0; i < 5; ++i) {
      const FrlInstance inst = build_synthetic(2, 2, 2 << (i % 2), 0.3, 300 + static_cast<std::uint64_t>(i));
      const PaddedInstance p = pad_actions(inst);
      const FrlInstance ext = extended_instance(p.inst, p.codec);
      Engine eng = make_engine(91, static_cast<std::uint64_t>(i));
      Theta th(ext.n_states(), 2);
      for (int e = 0; e < th.size(); ++e) th.data()[e] = 2.0 * uniform01(eng) - 1.0;
      const LojaDiagnostics ld = loja_diagnostics(ext, th, 0.05);
      double log_lb = 0.0;
      mu_b_lower_bound(inst.gamma(), 0.05, inst.n_states(), p.inst.n_actions(), inst.rho().minCoeff(), &log_lb);
      if (!(log_lb <= ld.log_mu_r)) ++bound_fail;
    }
    ok = ok && bound_fail == 0;
    all_ok = all_ok && ok;
    report["lojasiewicz"] = {{"sweeps", sweeps}, {"mu_b_bound_failures", bound_fail}, {"passed", ok}};
    log << "lojasiewicz sweeps" << (ok ? " ok" : " FAIL") << '\n';
  }

  {
    bool ok_rs = false, ok_b = false;
    ojson rs = check_hyperplane(PgVariant::RS, opts.break_projection, ok_rs);
    ojson b = check_hyperplane(PgVariant::BRS, opts.break_projection, ok_b);
    const bool ok = ok_rs && ok_b;
    all_ok = all_ok && ok;
    report["hyperplane"] = {{"runs", ojson::array({rs, b})}, {"passed", ok}};
    log << "hyperplane invariant" << (ok ? " ok" : " FAIL: hyperplane invariant violated") << '\n';
  }

  report["passed"] = all_ok;
  write_file(dir / "verify_report.json", report.dump(2) + "\n");
  return all_ok ? kOk : kCertification;
}

int cmd_eval(const Config& cfg, const std::string& theta_path, std::ostream& out) {
  const FrlInstance inst = build_instance(cfg.instance);
  const Theta theta = theta_from_json(read_file(theta_path));
  const PgVariant v = variant_from_name(cfg.algorithm.variant);
  ojson j;
  j["variant"] = variant_name(v);
  j["instance_hash"] = instance_hash(inst);
  Matrix grad;
  if (v == PgVariant::BRS) {
    const PaddedInstance p = pad_actions(inst);
    if (theta.rows() != p.codec.ext_rows(inst.n_states()) || theta.cols() != 2) {
      throw Error(ErrorCode::ShapeMismatch, "bit-level theta must have shape (S*(2^k-1)) x 2");
    }
    j["objective"] = objective(p.inst, theta, Variant::b(cfg.algorithm.lambda));
    j["raw_return"] = objective(p.inst, theta, Variant::b(0.0));
    grad = exact_gradient(p.inst, theta, Variant::b(cfg.algorithm.lambda));
    j["gradient"] = ojson::parse(theta_to_json(grad, p.codec.k(), inst.n_states()));
  } else {
    if (theta.rows() != inst.n_states() || theta.cols() != inst.n_actions()) {
      throw Error(ErrorCode::ShapeMismatch, "theta must have shape S x A");
    }
    const Variant var = v == PgVariant::S ? Variant::sm() : Variant::r(cfg.algorithm.lambda);
    j["objective"] = objective(inst, theta, var);
    j["raw_return"] = objective(inst, theta, Variant::sm());
    grad = exact_gradient(inst, theta, var);
    j["gradient"] = ojson::parse(theta_to_json(grad));
  }
  j["grad_norm"] = grad.norm();
  out << j.dump(2) << '\n';
  return kOk;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated policy-gradient laboratory"};
  app.require_subcommand(1);
  std::string config_path;
  Overrides ov;
  std::string out_dir, variant, theta_path;
  int seeds = 0, threads = 0;
  bool break_projection = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config or run manifest");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seeds", seeds, "number of seeds");
    sub->add_option("--variant", variant, "S, RS or bRS");
    sub->add_option("--threads", threads, "worker threads (FEDPG_LAB_THREADS overrides)");
  };
  auto* run = app.add_subcommand("run", "single FedPG or Fed-Q run");
  auto* speedup = app.add_subcommand("speedup", "suboptimality against the number of agents");
  auto* compare = app.add_subcommand("compare-baseline", "FedPG variants against Fed-Q on extreme instances");
  auto* verify = app.add_subcommand("verify", "run the certification suite");
  auto* eval = app.add_subcommand("eval", "objective and gradient of a theta file");
  for (auto* s : {run, speedup, compare, verify, eval}) add_common(s);
  verify->add_flag("--break-projection", break_projection, "fault injection for tests")->group("");
  eval->add_option("--theta", theta_path, "theta JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    Config cfg = config_path.empty() ? default_config(name) : load_config(config_path, default_config(name));
    if (sub->count("--out")) ov.out = out_dir;
    if (sub->count("--seeds")) ov.seeds = seeds;
    if (sub->count("--variant")) ov.variant = variant;
    if (sub->count("--threads")) ov.threads = threads;
    apply_overrides(cfg, ov);
    if (name == "run") return cmd_run(cfg, out);
    if (name == "speedup") return cmd_speedup(cfg, out);
    if (name == "compare-baseline") return cmd_compare_baseline(cfg, out);
    if (name == "verify") {
      VerifyOptions vo;
      vo.break_projection = break_projection;
      return cmd_verify(cfg, vo, out);
    }
    return cmd_eval(cfg, theta_path, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    switch (e.code()) {
      case ErrorCode::ConfigParseError:
      case ErrorCode::ConfigError: return kUsage;
      case ErrorCode::CertificationFailure: return kCertification;
      default: return kRuntime;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace fedpg::cli

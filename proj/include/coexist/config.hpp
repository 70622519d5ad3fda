#pragma once

// Run configuration: one JSON document describes the mesh, the diffusion
// law, the parameters, and the per-command settings, so every output is
// reproducible from a single file. Parsing is strict: unknown keys and
// type mismatches are rejected with the offending field path.

#include "coexist/continuation.hpp"
#include "coexist/mesh.hpp"
#include "coexist/model.hpp"
#include "coexist/nonlinear.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace coexist {

using nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProbeConfig {
  int k = 20;
  double amp_lo = 0.1;
  double amp_hi = 10.0;
};

struct RunConfig {
  Mesh mesh;
  DiffusionLaw law = DiffusionLaw::constant(1.0);
  double b = 0.0;
  double rho = 0.0;
  double sigma = 1.0;
  std::optional<double> lambda;
  std::optional<std::pair<double, double>> lambda_range;
  NewtonSettings newton;
  ContinuationSettings continuation;
  ProbeConfig probe;
  std::vector<double> eps_schedule;
  std::uint64_t seed = 0;
  int threads = 0;

  // Parameters with lambda taken from the scalar field (throws if absent).
  ProblemParams params() const {
    if (!lambda)
      throw ConfigError("config.params.lambda: required for this command");
    return {*lambda, b, rho, sigma};
  }

  ProblemParams params_with_lambda(double lam) const {
    return {lam, b, rho, sigma};
  }
};

namespace detail {

inline void require_keys(const json& j, const std::string& path,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (key == a) {
        known = true;
        break;
      }
    if (!known) throw ConfigError(path + "." + key + ": unknown key");
  }
}

inline double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  return j.get<double>();
}

inline int get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
  return j.get<int>();
}

inline double field_number(const json& j, const char* key,
                           const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  return get_number(j.at(key), path + "." + key);
}

inline int field_int(const json& j, const char* key, const std::string& path,
                     int fallback) {
  if (!j.contains(key)) return fallback;
  return get_int(j.at(key), path + "." + key);
}

inline Mesh parse_mesh(const json& j) {
  require_keys(j, "config.mesh", {"dim", "extents", "n"});
  if (!j.contains("dim") || !j.contains("extents") || !j.contains("n"))
    throw ConfigError("config.mesh: dim, extents and n are required");
  const int dim = get_int(j.at("dim"), "config.mesh.dim");
  if (!j.at("extents").is_array() || !j.at("n").is_array())
    throw ConfigError("config.mesh.extents/n: expected arrays");
  std::vector<double> extents;
  for (std::size_t i = 0; i < j.at("extents").size(); ++i)
    extents.push_back(
        get_number(j.at("extents")[i], "config.mesh.extents[" + std::to_string(i) + "]"));
  std::vector<int> counts;
  for (std::size_t i = 0; i < j.at("n").size(); ++i)
    counts.push_back(get_int(j.at("n")[i], "config.mesh.n[" + std::to_string(i) + "]"));
  try {
    return build_mesh(dim, extents, counts);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config.mesh: ") + e.what());
  }
}

inline DiffusionLaw parse_law(const json& j) {
  require_keys(j, "config.law", {"family", "a0", "a1", "p"});
  if (!j.contains("family") || !j.at("family").is_string())
    throw ConfigError("config.law.family: expected a string");
  const std::string family = j.at("family").get<std::string>();
  const double a0 = field_number(j, "a0", "config.law", 0.0);
  const double a1 = field_number(j, "a1", "config.law", 0.0);
  try {
    if (family == "constant") return DiffusionLaw::constant(a0);
    if (family == "affine") return DiffusionLaw::affine(a0, a1);
    if (family == "power") {
      if (!j.contains("p")) throw ConfigError("config.law.p: required for power");
      return DiffusionLaw::power(a0, a1, get_number(j.at("p"), "config.law.p"));
    }
    if (family == "saturating") return DiffusionLaw::saturating(a0, a1);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config.law: ") + e.what());
  }
  throw ConfigError("config.law.family: unknown family '" + family + "'");
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  using detail::field_int;
  using detail::field_number;
  using detail::get_int;
  using detail::get_number;
  using detail::require_keys;

  require_keys(j, "config",
               {"schema", "mesh", "law", "params", "newton", "continuation",
                "probe", "epsilon", "seed", "threads"});
  if (j.contains("schema") &&
      get_int(j.at("schema"), "config.schema") != 1)
    throw ConfigError("config.schema: unsupported version");
  if (!j.contains("mesh") || !j.contains("law") || !j.contains("params"))
    throw ConfigError("config: mesh, law and params are required");

  RunConfig cfg;
  cfg.mesh = detail::parse_mesh(j.at("mesh"));
  cfg.law = detail::parse_law(j.at("law"));

  {
    const json& p = j.at("params");
    require_keys(p, "config.params", {"b", "rho", "sigma", "lambda", "lambda_range"});
    cfg.b = field_number(p, "b", "config.params", 0.0);
    cfg.rho = field_number(p, "rho", "config.params", 0.0);
    cfg.sigma = field_number(p, "sigma", "config.params", 1.0);
    if (p.contains("lambda"))
      cfg.lambda = get_number(p.at("lambda"), "config.params.lambda");
    if (p.contains("lambda_range")) {
      const json& r = p.at("lambda_range");
      if (!r.is_array() || r.size() != 2)
        throw ConfigError("config.params.lambda_range: expected [lo, hi]");
      const double lo = get_number(r[0], "config.params.lambda_range[0]");
      const double hi = get_number(r[1], "config.params.lambda_range[1]");
      if (!(hi > lo))
        throw ConfigError("config.params.lambda_range: hi must exceed lo");
      cfg.lambda_range = {lo, hi};
    }
    try {
      cfg.params_with_lambda(0.0).validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.params: ") + e.what());
    }
  }

  if (j.contains("newton")) {
    const json& n = j.at("newton");
    require_keys(n, "config.newton",
                 {"tol_residual", "tol_step", "max_iter", "damping"});
    cfg.newton.tol_residual =
        field_number(n, "tol_residual", "config.newton", cfg.newton.tol_residual);
    cfg.newton.tol_step =
        field_number(n, "tol_step", "config.newton", cfg.newton.tol_step);
    cfg.newton.max_iter = field_int(n, "max_iter", "config.newton", cfg.newton.max_iter);
    cfg.newton.damping = field_number(n, "damping", "config.newton", cfg.newton.damping);
    try {
      cfg.newton.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.newton: ") + e.what());
    }
  }
  cfg.continuation.newton = cfg.newton;

  if (j.contains("continuation")) {
    const json& c = j.at("continuation");
    require_keys(c, "config.continuation",
                 {"ds", "ds_min", "ds_max", "max_steps", "norm_max", "max_folds"});
    cfg.continuation.ds = field_number(c, "ds", "config.continuation", cfg.continuation.ds);
    cfg.continuation.ds_min =
        field_number(c, "ds_min", "config.continuation", cfg.continuation.ds_min);
    cfg.continuation.ds_max =
        field_number(c, "ds_max", "config.continuation", cfg.continuation.ds_max);
    cfg.continuation.max_steps =
        field_int(c, "max_steps", "config.continuation", cfg.continuation.max_steps);
    cfg.continuation.norm_max =
        field_number(c, "norm_max", "config.continuation", cfg.continuation.norm_max);
    cfg.continuation.max_folds =
        field_int(c, "max_folds", "config.continuation", cfg.continuation.max_folds);
  }

  if (j.contains("probe")) {
    const json& p = j.at("probe");
    require_keys(p, "config.probe", {"k", "amplitude"});
    cfg.probe.k = field_int(p, "k", "config.probe", cfg.probe.k);
    if (cfg.probe.k < 1) throw ConfigError("config.probe.k: must be >= 1");
    if (p.contains("amplitude")) {
      const json& a = p.at("amplitude");
      if (!a.is_array() || a.size() != 2)
        throw ConfigError("config.probe.amplitude: expected [lo, hi]");
      cfg.probe.amp_lo = get_number(a[0], "config.probe.amplitude[0]");
      cfg.probe.amp_hi = get_number(a[1], "config.probe.amplitude[1]");
      if (!(cfg.probe.amp_lo > 0.0) || !(cfg.probe.amp_hi >= cfg.probe.amp_lo))
        throw ConfigError("config.probe.amplitude: need 0 < lo <= hi");
    }
  }

  if (j.contains("epsilon")) {
    const json& e = j.at("epsilon");
    require_keys(e, "config.epsilon", {"schedule"});
    if (!e.contains("schedule") || !e.at("schedule").is_array())
      throw ConfigError("config.epsilon.schedule: expected an array");
    for (std::size_t i = 0; i < e.at("schedule").size(); ++i) {
      const double v = get_number(e.at("schedule")[i],
                                  "config.epsilon.schedule[" + std::to_string(i) + "]");
      if (!(v > 0.0))
        throw ConfigError("config.epsilon.schedule: entries must be positive");
      if (!cfg.eps_schedule.empty() && !(v < cfg.eps_schedule.back()))
        throw ConfigError("config.epsilon.schedule: must strictly decrease");
      cfg.eps_schedule.push_back(v);
    }
  }

  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
      throw ConfigError("config.seed: expected an unsigned integer");
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  cfg.threads = field_int(j, "threads", "config", 0);
  if (cfg.threads < 0) throw ConfigError("config.threads: must be >= 0");
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: invalid JSON in '" + path + "': " + e.what());
  }
  return parse_config(j);
}

}  // namespace coexist

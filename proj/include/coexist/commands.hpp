#pragma once

// Command implementations behind the CLI: eig | branch | probe | epsilon |
// verify. Each run_* function is pure compute returning strings/JSON (the
// unit under test); the cmd_* wrappers write files under an output
// directory. Outputs are deterministic given config + seed.

#include "coexist/config.hpp"
#include "coexist/continuation.hpp"
#include "coexist/mesh.hpp"
#include "coexist/model.hpp"
#include "coexist/nonlinear.hpp"
#include "coexist/numfmt.hpp"
#include "coexist/verify.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace coexist {

// Exit codes: 0 success, 2 config error, 3 solver failure, 4 verification
// failure.
struct CommandError : std::runtime_error {
  int exit_code;
  CommandError(int code, const std::string& msg)
      : std::runtime_error(msg), exit_code(code) {}
};

struct CmdOptions {
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

namespace detail {

inline void require_rho_positive(const RunConfig& cfg) {
  if (!(cfg.rho > 0.0))
    throw ConfigError("config.params.rho: must be positive for this command");
}

inline void write_file(const std::filesystem::path& path,
                       const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CommandError(3, "cannot open output file " + path.string());
  out << contents;
}

inline json report_check(const CheckResult& c) {
  json j;
  j["name"] = c.name;
  j["applicable"] = c.applicable;
  j["passed"] = c.passed;
  j["worst_violation"] = c.worst_violation;
  j["slack"] = c.slack;
  return j;
}

}  // namespace detail

// --- eig -------------------------------------------------------------------

inline std::string run_eig(const RunConfig& cfg) {
  detail::require_rho_positive(cfg);
  const ProblemParams params = cfg.params_with_lambda(0.0);
  const KernelBasis kb = kernel_basis(params, cfg.mesh);
  const double lambda_star = cfg.law(0.0) * kb.lambda1;
  const DirectionResult dir = classify_direction(cfg.law, params, cfg.mesh);

  std::ostringstream out;
  out << "lambda1 = " << format_double(kb.lambda1) << "\n";
  out << "lambda_star = " << format_double(lambda_star) << "\n";
  out << "K = " << format_double(kb.K) << "\n";
  out << "threshold_T = " << format_double(dir.threshold) << "\n";
  out << "a_prime0 = " << format_double(dir.a_prime0) << "\n";
  if (cfg.law(0.0) > 0.0) {
    out << "rho1 = " << format_double(dir.rho1) << "\n";
    out << "direction = " << to_string(dir.label) << "\n";
  } else {
    out << "note = lambda_star is 0 because a(0) = 0; trace this law with the "
           "epsilon command\n";
  }
  return out.str();
}

inline void cmd_eig(const RunConfig& cfg, const CmdOptions&, std::ostream& os) {
  os << run_eig(cfg);
}

// --- branch ------------------------------------------------------------------

struct BranchRun {
  Branch branch;
  std::string csv;
  json report;
  bool verified = true;
};

inline BranchRun run_branch(const RunConfig& cfg) {
  detail::require_rho_positive(cfg);
  if (!cfg.lambda_range)
    throw ConfigError("config.params.lambda_range: required for branch");
  if (!(cfg.law(0.0) > 0.0))
    throw ConfigError(
        "config.law: branch requires a(0) > 0; use the epsilon command");

  ContinuationSettings cs = cfg.continuation;
  cs.newton = cfg.newton;
  cs.lambda_min = cfg.lambda_range->first;
  cs.lambda_max = cfg.lambda_range->second;

  BranchRun run;
  const ProblemParams base = cfg.params_with_lambda(0.0);
  run.branch = continue_branch(cfg.law, base, cs, cfg.mesh);
  const Branch& br = run.branch;

  std::ostringstream csv;
  csv << "step,lambda,arc,sup_u,sup_v,mass_v,fold_count\n";
  json failures = json::array();
  int coexistence_points = 0;
  int in_window = 0;
  int folds_so_far = 0;
  for (std::size_t i = 0; i < br.points.size(); ++i) {
    const BranchPoint& p = br.points[i];
    if (i >= 2) {
      const double d1 = br.points[i - 1].lambda - br.points[i - 2].lambda;
      const double d2 = p.lambda - br.points[i - 1].lambda;
      if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) ++folds_so_far;
    }
    csv << i << ',' << format_double(p.lambda) << ',' << format_double(p.arc)
        << ',' << format_double(p.sup_u) << ',' << format_double(p.sup_v)
        << ',' << format_double(p.mass_v) << ',' << folds_so_far << '\n';
    if (i == 0) continue;  // anchor

    const ProblemParams pp = cfg.params_with_lambda(p.lambda);
    const VerifyReport vr = check_all(p.state, pp, cfg.law, cfg.mesh);
    const bool coexist =
        classify(p.state, 1e-8 * (1.0 + std::abs(p.lambda))) ==
        SolutionClass::coexistence;
    if (coexist) {
      ++coexistence_points;
      if (p.lambda >= cfg.lambda_range->first &&
          p.lambda <= cfg.lambda_range->second)
        ++in_window;
    }
    if (!vr.overall) {
      run.verified = false;
      for (const CheckResult& c : vr.checks)
        if (c.applicable && !c.passed) {
          json f;
          f["step"] = i;
          f["lambda"] = p.lambda;
          f["check"] = c.name;
          f["worst_violation"] = c.worst_violation;
          failures.push_back(std::move(f));
        }
    }
  }
  run.csv = csv.str();

  json rep;
  rep["schema"] = 1;
  rep["command"] = "branch";
  rep["lambda_star"] = br.points.front().lambda;
  rep["termination"] = to_string(br.termination);
  rep["fold_count"] = br.fold_count;
  rep["points"] = br.points.size();
  rep["coexistence_points"] = coexistence_points;
  rep["window"] = {cfg.lambda_range->first, cfg.lambda_range->second};
  rep["coexistence_points_in_window"] = in_window;
  rep["min_lambda"] = br.min_lambda;
  rep["verify"] = {{"all_passed", run.verified}, {"failures", failures}};
  run.report = std::move(rep);
  return run;
}

inline void cmd_branch(const RunConfig& cfg, const CmdOptions& opt,
                       std::ostream& os) {
  const BranchRun run = run_branch(cfg);
  std::filesystem::create_directories(opt.out_dir);
  detail::write_file(opt.out_dir / "branch.csv", run.csv);
  detail::write_file(opt.out_dir / "report.json", run.report.dump(2) + "\n");
  os << "branch: " << run.branch.points.size() << " points, termination "
     << to_string(run.branch.termination) << ", folds "
     << run.branch.fold_count << "\n";
  os << "wrote " << (opt.out_dir / "branch.csv").string() << "\n";
  os << "wrote " << (opt.out_dir / "report.json").string() << "\n";
  if (!run.verified)
    throw CommandError(4, "branch: some points failed verification; see report");
}

// --- probe -------------------------------------------------------------------

inline json run_probe(const RunConfig& cfg, std::uint64_t seed, int threads) {
  detail::require_rho_positive(cfg);
  const ProblemParams params = cfg.params();
  const ProbeResult pr =
      multistart_probe(params, cfg.law, cfg.probe.k, seed, cfg.probe.amp_lo,
                       cfg.probe.amp_hi, cfg.newton, cfg.mesh, threads);

  json starts = json::array();
  for (const ProbeStart& s : pr.starts) {
    json e;
    e["index"] = s.index;
    e["alpha"] = s.alpha;
    if (s.outcome) {
      e["outcome"] = to_string(s.outcome->converged_to);
      e["iterations"] = s.outcome->iterations;
      e["final_residual"] = s.outcome->final_residual;
      if (s.distinct_id >= 0) e["distinct_id"] = s.distinct_id;
    } else {
      e["outcome"] = "failed";
      e["error"] = s.error;
    }
    starts.push_back(std::move(e));
  }
  json distinct = json::array();
  bool all_verified = true;
  for (std::size_t d = 0; d < pr.distinct_coexistence.size(); ++d) {
    const State& st = pr.distinct_coexistence[d].state;
    const VerifyReport vr = check_all(st, params, cfg.law, cfg.mesh);
    all_verified = all_verified && vr.overall;
    json e;
    e["id"] = d;
    e["sup_u"] = st.u.sup_norm();
    e["sup_v"] = st.v.sup_norm();
    e["mass_v"] = integrate(cfg.mesh, st.v);
    e["verified"] = vr.overall;
    distinct.push_back(std::move(e));
  }

  json out;
  out["schema"] = 1;
  out["command"] = "probe";
  out["lambda"] = params.lambda;
  out["k"] = cfg.probe.k;
  out["seed"] = seed;
  out["distinct_coexistence_count"] = pr.distinct_coexistence.size();
  out["all_verified"] = all_verified;
  out["starts"] = std::move(starts);
  out["distinct"] = std::move(distinct);
  return out;
}

inline void cmd_probe(const RunConfig& cfg, const CmdOptions& opt,
                      std::ostream& os) {
  const std::uint64_t seed = opt.seed.value_or(cfg.seed);
  const int threads = opt.threads.value_or(cfg.threads);
  const json out = run_probe(cfg, seed, threads);
  std::filesystem::create_directories(opt.out_dir);
  detail::write_file(opt.out_dir / "probe.json", out.dump(2) + "\n");
  os << "probe: " << out["distinct_coexistence_count"]
     << " distinct coexistence state(s) from " << cfg.probe.k << " starts\n";
  os << "wrote " << (opt.out_dir / "probe.json").string() << "\n";
  if (!out.at("all_verified").get<bool>())
    throw CommandError(4, "probe: a distinct state failed verification");
}

// --- epsilon -----------------------------------------------------------------

struct EpsilonRun {
  HomotopyResult homotopy;
  std::string csv;
  bool verified = true;  // each stage against the law it solved, a + eps
};

inline EpsilonRun run_epsilon(const RunConfig& cfg) {
  detail::require_rho_positive(cfg);
  if (cfg.eps_schedule.empty())
    throw ConfigError("config.epsilon.schedule: required for epsilon");
  if (cfg.law(0.0) != 0.0)
    throw ConfigError(
        "config.law: epsilon requires a(0) = 0; use the branch command");
  const ProblemParams params = cfg.params();
  if (!(params.lambda > 0.0))
    throw ConfigError("config.params.lambda: epsilon requires lambda > 0");

  ContinuationSettings cs = cfg.continuation;
  cs.newton = cfg.newton;
  cs.lambda_max = params.lambda;  // reset by the homotopy; validated here
  EpsilonRun run;
  run.homotopy = epsilon_homotopy(cfg.law, params, cfg.eps_schedule, cs, cfg.mesh);

  std::ostringstream csv;
  csv << "eps,sup_u,sup_v,cauchy_gap\n";
  for (std::size_t i = 0; i < run.homotopy.steps.size(); ++i) {
    const HomotopyStep& s = run.homotopy.steps[i];
    const ProblemParams pp = cfg.params_with_lambda(params.lambda);
    run.verified = run.verified &&
                   check_all(s.state, pp, cfg.law.with_offset(s.eps), cfg.mesh)
                       .overall;
    csv << format_double(s.eps) << ',' << format_double(s.sup_u) << ','
        << format_double(s.sup_v) << ',';
    if (i > 0) {
      const HomotopyStep& prev = run.homotopy.steps[i - 1];
      const double gu = (s.state.u.values() - prev.state.u.values())
                            .lpNorm<Eigen::Infinity>();
      const double gv = (s.state.v.values() - prev.state.v.values())
                            .lpNorm<Eigen::Infinity>();
      csv << format_double(std::max(gu, gv));
    }
    csv << '\n';
  }
  run.csv = csv.str();
  return run;
}

inline void cmd_epsilon(const RunConfig& cfg, const CmdOptions& opt,
                        std::ostream& os) {
  const EpsilonRun run = run_epsilon(cfg);
  std::filesystem::create_directories(opt.out_dir);
  detail::write_file(opt.out_dir / "epsilon.csv", run.csv);
  os << "epsilon: " << run.homotopy.steps.size() << " of "
     << cfg.eps_schedule.size() << " stages\n";
  os << "wrote " << (opt.out_dir / "epsilon.csv").string() << "\n";
  if (!run.homotopy.completed)
    throw CommandError(3, "epsilon: homotopy incomplete: " + run.homotopy.error);
  if (!run.verified)
    throw CommandError(4, "epsilon: a stage failed verification");
}

// --- verify ------------------------------------------------------------------

inline json run_verify(const RunConfig& cfg) {
  detail::require_rho_positive(cfg);
  const ProblemParams params = cfg.params();
  const KernelBasis kb = kernel_basis(params, cfg.mesh);

  // Canonical start: a kernel-shaped hump at the natural amplitude scale.
  const double amp = 0.5 * std::abs(params.lambda) / kb.phi1.max();
  Vector u0 = amp * kb.phi1.values();
  State start{ScalarField(cfg.mesh, u0), ScalarField(cfg.mesh, kb.K * u0)};
  const SolveOutcome out = newton_solve(params, cfg.law, start, cfg.newton, cfg.mesh);
  const VerifyReport vr = check_all(out.state, params, cfg.law, cfg.mesh);

  json rep;
  rep["schema"] = 1;
  rep["command"] = "verify";
  rep["lambda"] = params.lambda;
  rep["classification"] = to_string(out.converged_to);
  rep["iterations"] = out.iterations;
  rep["final_residual"] = out.final_residual;
  rep["sup_u"] = out.state.u.sup_norm();
  rep["sup_v"] = out.state.v.sup_norm();
  json checks = json::array();
  for (const CheckResult& c : vr.checks) checks.push_back(detail::report_check(c));
  rep["checks"] = std::move(checks);
  rep["overall"] = vr.overall;
  return rep;
}

inline void cmd_verify(const RunConfig& cfg, const CmdOptions& opt,
                       std::ostream& os) {
  const json rep = run_verify(cfg);
  std::filesystem::create_directories(opt.out_dir);
  detail::write_file(opt.out_dir / "verify.json", rep.dump(2) + "\n");
  for (const json& c : rep.at("checks")) {
    if (!c.at("applicable").get<bool>()) continue;
    os << (c.at("passed").get<bool>() ? "pass " : "FAIL ")
       << c.at("name").get<std::string>() << "\n";
  }
  os << "wrote " << (opt.out_dir / "verify.json").string() << "\n";
  if (!rep.at("overall").get<bool>())
    throw CommandError(4, "verify: checks failed; see report");
}

}  // namespace coexist

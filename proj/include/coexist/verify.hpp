#pragma once

// Machine-checkable predicates on computed states: solution classification,
// the a priori bounds, the mass reduction identity
//   integral(v) = rho * integral(e_sigma * u),
// and the eigenvalue characterization
//   lambda = sigma1[-a(integral v)*Laplace + u - b*v],
// which is the strongest single consistency check a computed coexistence
// state can pass.

#include "coexist/mesh.hpp"
#include "coexist/model.hpp"
#include "coexist/spectral.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace coexist {

enum class SolutionClass { trivial, coexistence, invalid };

inline const char* to_string(SolutionClass c) {
  switch (c) {
    case SolutionClass::trivial: return "trivial";
    case SolutionClass::coexistence: return "coexistence";
    case SolutionClass::invalid: return "invalid";
  }
  return "unknown";
}

// trivial: both components below tol in sup norm. coexistence: both
// strictly positive at every node. Anything else (in particular anything
// semi-trivial-looking) is invalid: the system admits no semi-trivial
// solutions.
inline SolutionClass classify(const State& state, double tol) {
  const double nu = state.u.sup_norm();
  const double nv = state.v.sup_norm();
  if (nu <= tol && nv <= tol) return SolutionClass::trivial;
  if (state.u.min() > 0.0 && state.v.min() > 0.0) return SolutionClass::coexistence;
  return SolutionClass::invalid;
}

struct CheckResult {
  std::string name;
  bool applicable = true;
  bool passed = true;
  double worst_violation = 0.0;
  double slack = 0.0;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool overall = true;

  void add(CheckResult c) {
    if (c.applicable) overall = overall && c.passed;
    checks.push_back(std::move(c));
  }
};

// Evaluates the case-appropriate a priori bounds nodally with slack
// 1e-6*(1+lambda). The bounds are statements about coexistence states, so
// a trivial state passes vacuously; the h2 probe regime has no applicable
// bound and is reported as such.
inline VerifyReport check_bounds(const State& state, const ProblemParams& params,
                                 const DiffusionLaw& law, const Mesh& mesh) {
  VerifyReport report;
  if (classify(state, 1e-8 * (1.0 + std::abs(params.lambda))) ==
      SolutionClass::trivial) {
    CheckResult c{"bounds_vacuous_trivial"};
    c.applicable = false;
    report.add(std::move(c));
    return report;
  }
  const BoundReport tpl = apriori_bounds(params, law, mesh);
  if (tpl.bound_case == BoundCase::h2_probe) {
    CheckResult c{"bounds_h2_probe"};
    c.applicable = false;
    report.add(std::move(c));
    return report;
  }
  const double slack = tpl.slack;
  if (tpl.u_bound) {
    CheckResult c{"u_bound"};
    c.slack = slack;
    c.worst_violation = state.u.max() - *tpl.u_bound;
    c.passed = c.worst_violation <= slack;
    report.add(std::move(c));
  }
  if (tpl.v_bound_field) {
    CheckResult c{"v_bound"};
    c.slack = slack;
    c.worst_violation =
        (state.v.values() - tpl.v_bound_field->values()).maxCoeff();
    c.passed = c.worst_violation <= slack;
    report.add(std::move(c));
  }
  return report;
}

// |integral(v) - rho*integral(e_sigma*u)| / (1 + integral(v)). Holds for
// every solution of the second equation, any b.
inline double check_reduction(const State& state, const ProblemParams& params,
                              const Mesh& mesh) {
  params.validate();
  const ScalarField e = solve_e_sigma(params.sigma, mesh);
  const double mass_v = integrate(mesh, state.v);
  const double mass_eu =
      mesh.cell_weight * e.values().cwiseProduct(state.u.values()).sum();
  return std::abs(mass_v - params.rho * mass_eu) / (1.0 + mass_v);
}

// |sigma1[-a(int v)*Laplace + u - b*v] - lambda| for a coexistence state.
inline double check_eigen_characterization(const State& state,
                                           const ProblemParams& params,
                                           const DiffusionLaw& law,
                                           const Mesh& mesh,
                                           double eig_tol = 1e-10) {
  params.validate();
  const double a = law(integrate(mesh, state.v));
  ScalarField potential(mesh,
                        state.u.values() - params.b * state.v.values());
  const EigenPair ep = principal_eigenpair(a, potential, mesh, eig_tol);
  return std::abs(ep.value - params.lambda);
}

// Full predicate suite for a state claimed to solve the system at
// params.lambda. Trivial states pass vacuously where a check needs
// positivity.
inline VerifyReport check_all(const State& state, const ProblemParams& params,
                              const DiffusionLaw& law, const Mesh& mesh) {
  const double class_tol = 1e-8 * (1.0 + std::abs(params.lambda));
  const SolutionClass cls = classify(state, class_tol);

  VerifyReport report;
  {
    CheckResult c{"classification"};
    c.passed = cls != SolutionClass::invalid;
    report.add(std::move(c));
  }
  for (CheckResult& c : check_bounds(state, params, law, mesh).checks)
    report.add(std::move(c));
  {
    CheckResult c{"reduction_identity"};
    c.slack = 1e-8;
    c.worst_violation = check_reduction(state, params, mesh);
    c.passed = c.worst_violation <= c.slack;
    report.add(std::move(c));
  }
  {
    // sigma * max(v) <= rho * max(u), up to roundoff.
    CheckResult c{"max_point_relation"};
    c.slack = 0.0;
    c.worst_violation = params.sigma * state.v.max() -
                        params.rho * state.u.max() * (1.0 + 1e-8);
    if (cls == SolutionClass::trivial) c.worst_violation = 0.0;
    c.passed = c.worst_violation <= c.slack;
    report.add(std::move(c));
  }
  {
    CheckResult c{"eigen_characterization"};
    c.applicable = cls == SolutionClass::coexistence;
    c.slack = 1e-6 * (1.0 + std::abs(params.lambda));
    if (c.applicable) {
      c.worst_violation = check_eigen_characterization(state, params, law, mesh);
      c.passed = c.worst_violation <= c.slack;
    }
    report.add(std::move(c));
  }
  return report;
}

}  // namespace coexist

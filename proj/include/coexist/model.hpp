#pragma once

// Problem definition for the coupled steady state
//
//   -a(integral of v) * Laplace(u) = lambda*u - u^2 + b*u*v
//   -Laplace(v) + sigma*v          = rho*u
//   u = v = 0 on the boundary
//
// together with the closed-form quantities attached to the branch of
// coexistence states: the bifurcation point lambda* = a(0)*lambda1, the
// kernel basis (phi1, K*phi1), the direction threshold for a'(0), and the
// a priori bounds used as runtime checks.

#include "coexist/mesh.hpp"
#include "coexist/spectral.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace coexist {

enum class LawFamily { constant, affine, power, saturating };

inline const char* to_string(LawFamily f) {
  switch (f) {
    case LawFamily::constant: return "constant";
    case LawFamily::affine: return "affine";
    case LawFamily::power: return "power";
    case LawFamily::saturating: return "saturating";
  }
  return "unknown";
}

// Nonlocal diffusion coefficient a(s), s = integral of v. Closed-form
// families so the derivative, the infimum a_L, and the structural
// predicates are exact. Families (all coefficients >= 0):
//   constant    a0
//   affine      a0 + a1*s
//   power       a0 + a1*|s|^p, p > 1   (|s| keeps evaluation defined for
//                                       transient negative masses)
//   saturating  a0 + a1*s/(1+|s|)
class DiffusionLaw {
 public:
  static DiffusionLaw constant(double a0) { return {LawFamily::constant, a0, 0.0, 0.0}; }
  static DiffusionLaw affine(double a0, double a1) { return {LawFamily::affine, a0, a1, 0.0}; }
  static DiffusionLaw power(double a0, double a1, double p) {
    if (!(p > 1.0))
      throw std::invalid_argument("DiffusionLaw::power: exponent must exceed 1");
    return {LawFamily::power, a0, a1, p};
  }
  static DiffusionLaw saturating(double a0, double a1) {
    return {LawFamily::saturating, a0, a1, 0.0};
  }

  double operator()(double s) const {
    switch (family_) {
      case LawFamily::constant: return a0_;
      case LawFamily::affine: return a0_ + a1_ * s;
      case LawFamily::power: return a0_ + a1_ * std::pow(std::abs(s), p_);
      case LawFamily::saturating: return a0_ + a1_ * s / (1.0 + std::abs(s));
    }
    return a0_;
  }

  double derivative(double s) const {
    switch (family_) {
      case LawFamily::constant: return 0.0;
      case LawFamily::affine: return a1_;
      case LawFamily::power: {
        if (s == 0.0) return 0.0;  // p > 1
        const double sgn = s > 0.0 ? 1.0 : -1.0;
        return a1_ * p_ * std::pow(std::abs(s), p_ - 1.0) * sgn;
      }
      case LawFamily::saturating: {
        const double t = 1.0 + std::abs(s);
        return a1_ / (t * t);
      }
    }
    return 0.0;
  }

  // inf_{s>=0} a(s); attained at s = 0 for every family.
  double a_lower() const { return a0_; }

  // Superlinear growth a(s)/s -> infinity.
  bool is_h2() const { return family_ == LawFamily::power && a1_ > 0.0; }

  bool is_increasing() const { return a1_ >= 0.0; }

  // The regularized law a(s) + eps used by the epsilon homotopy.
  DiffusionLaw with_offset(double eps) const {
    DiffusionLaw out = *this;
    out.a0_ += eps;
    return out;
  }

  LawFamily family() const { return family_; }
  double a0() const { return a0_; }
  double a1() const { return a1_; }
  double exponent() const { return p_; }

 private:
  DiffusionLaw(LawFamily family, double a0, double a1, double p)
      : family_(family), a0_(a0), a1_(a1), p_(p) {
    if (!(a0_ >= 0.0) || !(a1_ >= 0.0))
      throw std::invalid_argument("DiffusionLaw: coefficients must be nonnegative");
  }

  LawFamily family_;
  double a0_;
  double a1_;
  double p_;
};

struct ProblemParams {
  double lambda = 0.0;  // growth rate, bifurcation parameter
  double b = 0.0;       // interaction rate (competitive < 0 < cooperative)
  double rho = 0.0;     // source rate, >= 0
  double sigma = 1.0;   // death rate, > 0

  void validate() const {
    if (!(sigma > 0.0))
      throw std::invalid_argument("ProblemParams: sigma must be positive");
    if (!(rho >= 0.0))
      throw std::invalid_argument("ProblemParams: rho must be nonnegative");
    if (!std::isfinite(lambda) || !std::isfinite(b) || !std::isfinite(rho) ||
        !std::isfinite(sigma))
      throw std::invalid_argument("ProblemParams: parameters must be finite");
  }
};

struct State {
  ScalarField u;
  ScalarField v;

  State(ScalarField u_, ScalarField v_) : u(std::move(u_)), v(std::move(v_)) {
    require_same_mesh(u.mesh(), v.mesh(), "State");
  }

  static State zero(const Mesh& mesh) {
    return {ScalarField::zero(mesh), ScalarField::zero(mesh)};
  }
};

// Which a priori bound regime applies.
enum class BoundCase { b_nonpos, h1, h2_probe };

inline const char* to_string(BoundCase c) {
  switch (c) {
    case BoundCase::b_nonpos: return "b_nonpos";
    case BoundCase::h1: return "h1";
    case BoundCase::h2_probe: return "h2_probe";
  }
  return "unknown";
}

struct BoundReport {
  BoundCase bound_case = BoundCase::b_nonpos;
  std::optional<double> u_bound;              // sup bound on u, if closed-form
  std::optional<ScalarField> v_bound_field;   // nodal bound on v, if closed-form
  bool satisfied = true;
  double worst_violation = 0.0;
  double slack = 0.0;
};

// Residual of the discrete system at a state; zero iff the state is a
// discrete solution for the given lambda.
inline State residual(const ProblemParams& params, const DiffusionLaw& law,
                      const State& state, const Mesh& mesh) {
  params.validate();
  require_same_mesh(mesh, state.u.mesh(), "residual");
  const SparseOperator lap = laplacian(mesh);
  const Vector& u = state.u.values();
  const Vector& v = state.v.values();
  const double a = law(mesh.cell_weight * v.sum());
  Vector ru = a * (lap.matrix() * u) - params.lambda * u + u.cwiseProduct(u) -
              params.b * u.cwiseProduct(v);
  Vector rv = lap.matrix() * v + params.sigma * v - params.rho * u;
  return {ScalarField(mesh, std::move(ru)), ScalarField(mesh, std::move(rv))};
}

// lambda* = a(0) * lambda1: the value where the nontrivial branch detaches
// from (0, 0). Zero when a(0) = 0 (degenerate diffusion).
inline double bifurcation_point(const DiffusionLaw& law, const Mesh& mesh) {
  const double a0 = law(0.0);
  if (a0 == 0.0) return 0.0;
  return a0 * principal_eigenpair(1.0, 0.0, mesh).value;
}

struct KernelBasis {
  ScalarField phi1;  // principal eigenfunction, integrate(phi1^2) = 1
  ScalarField psi1;  // K * phi1
  double K = 0.0;    // rho / (lambda1 + sigma)
  double lambda1 = 0.0;
};

inline KernelBasis kernel_basis(const ProblemParams& params, const Mesh& mesh) {
  params.validate();
  if (!(params.rho > 0.0))
    throw std::invalid_argument("kernel_basis: rho must be positive");
  EigenPair ep = principal_eigenpair(1.0, 0.0, mesh);
  const double K = params.rho / (ep.value + params.sigma);
  ScalarField psi1(mesh, K * ep.fn.values());
  return {std::move(ep.fn), std::move(psi1), K, ep.value};
}

// Threshold on a'(0) separating supercritical from subcritical detachment:
//   T = (b*rho - lambda1 - sigma) * int(phi1^3) / (lambda1 * rho * int(phi1))
// with phi1 normalized to integrate(phi1^2) = 1.
inline double direction_threshold(const ProblemParams& params, const Mesh& mesh) {
  params.validate();
  if (!(params.rho > 0.0))
    throw std::invalid_argument("direction_threshold: rho must be positive");
  const EigenPair ep = principal_eigenpair(1.0, 0.0, mesh);
  const Vector& phi = ep.fn.values();
  const double int_phi = mesh.cell_weight * phi.sum();
  const double int_phi3 = mesh.cell_weight * phi.array().cube().sum();
  return (params.b * params.rho - ep.value - params.sigma) * int_phi3 /
         (ep.value * params.rho * int_phi);
}

enum class Direction { supercritical, subcritical, marginal };

inline const char* to_string(Direction d) {
  switch (d) {
    case Direction::supercritical: return "supercritical";
    case Direction::subcritical: return "subcritical";
    case Direction::marginal: return "marginal";
  }
  return "unknown";
}

struct DirectionResult {
  Direction label = Direction::marginal;
  double threshold = 0.0;  // T above
  double rho1 = 0.0;       // first-order slope of lambda(s) at s = 0
  double a_prime0 = 0.0;
  double margin = 0.0;
};

// Classifies the detachment direction by comparing a'(0) with the
// threshold T; also evaluates the equivalent slope form
//   rho1 = a'(0)*lambda1*K*int(phi1) + (1 - b*K)*int(phi1^3),
// whose sign agrees with the classification away from the margin.
inline DirectionResult classify_direction(const DiffusionLaw& law,
                                          const ProblemParams& params,
                                          const Mesh& mesh,
                                          double margin = -1.0) {
  params.validate();
  if (!(params.rho > 0.0))
    throw std::invalid_argument("classify_direction: rho must be positive");
  const EigenPair ep = principal_eigenpair(1.0, 0.0, mesh);
  const Vector& phi = ep.fn.values();
  const double int_phi = mesh.cell_weight * phi.sum();
  const double int_phi3 = mesh.cell_weight * phi.array().cube().sum();
  const double T = (params.b * params.rho - ep.value - params.sigma) * int_phi3 /
                   (ep.value * params.rho * int_phi);
  const double K = params.rho / (ep.value + params.sigma);
  const double ap0 = law.derivative(0.0);
  const double rho1 =
      ap0 * ep.value * K * int_phi + (1.0 - params.b * K) * int_phi3;

  DirectionResult out;
  out.threshold = T;
  out.rho1 = rho1;
  out.a_prime0 = ap0;
  out.margin = margin >= 0.0 ? margin : 1e-6 * (1.0 + std::abs(T));
  if (ap0 > T + out.margin)
    out.label = Direction::supercritical;
  else if (ap0 < T - out.margin)
    out.label = Direction::subcritical;
  else
    out.label = Direction::marginal;
  return out;
}

// 1 - b*rho*||e_sigma||_inf. Positive iff the smallness condition granting
// uniform bounds for cooperative interaction holds discretely.
inline double h1_margin(const ProblemParams& params, const Mesh& mesh) {
  params.validate();
  return 1.0 - params.b * params.rho * solve_e_sigma(params.sigma, mesh).max();
}

// Bound template for the case selected by the sign of b and the h1 margin:
//   b <= 0         u <= lambda,          v <= rho*lambda*e_sigma
//   b > 0 with H1  |u| <= lambda/margin, |v| <= rho*lambda*||e||_inf/margin
//   b > 0 without  no closed bound (probe regime)
inline BoundReport apriori_bounds(const ProblemParams& params,
                                  const DiffusionLaw& law, const Mesh& mesh) {
  params.validate();
  (void)law;
  BoundReport report;
  report.slack = 1e-6 * (1.0 + std::abs(params.lambda));
  if (params.b <= 0.0) {
    report.bound_case = BoundCase::b_nonpos;
    report.u_bound = params.lambda;
    const ScalarField e = solve_e_sigma(params.sigma, mesh);
    report.v_bound_field =
        ScalarField(mesh, params.rho * params.lambda * e.values());
    return report;
  }
  const double margin = h1_margin(params, mesh);
  if (margin > 0.0) {
    report.bound_case = BoundCase::h1;
    report.u_bound = params.lambda / margin;
    const double e_max = solve_e_sigma(params.sigma, mesh).max();
    report.v_bound_field = ScalarField::constant(
        mesh, params.rho * params.lambda * e_max / margin);
    return report;
  }
  report.bound_case = BoundCase::h2_probe;
  return report;
}

// Coexistence states cannot exist at or below this lambda.
//   b_nonpos: a_L * lambda1; h1: 0. The h2 regime has no computable edge.
inline double nonexistence_threshold(const DiffusionLaw& law, const Mesh& mesh,
                                     BoundCase bound_case) {
  switch (bound_case) {
    case BoundCase::b_nonpos:
      return law.a_lower() * principal_eigenpair(1.0, 0.0, mesh).value;
    case BoundCase::h1:
      return 0.0;
    case BoundCase::h2_probe:
      throw std::invalid_argument(
          "nonexistence_threshold: the h2 regime has no closed-form edge; "
          "probe it with branch continuation");
  }
  throw std::invalid_argument("nonexistence_threshold: unknown case");
}

}  // namespace coexist

#pragma once

// Pseudo-arclength continuation of the coexistence branch detaching from
// (lambda*, 0, 0), plus the epsilon homotopy that reaches the degenerate
// case a(0) = 0.
//
// The corrector solves the bordered system (residual + arclength
// constraint). Its Jacobian is the sparse block part extended by one dense
// column (d residual / d lambda) and one dense row (the tangent), still
// plus the same rank-one nonlocal correction, so the bordered solve reuses
// the rank-one elimination with the border folded into the sparse part.
// Folds are therefore traversed, not fatal: the unbordered Jacobian is
// singular there but the bordered one is not.
//
// Arclength metric: |(dx, dlambda)|^2 = |dx|^2 / node_count + dlambda^2,
// so refining the mesh does not rescale step lengths.

#include "coexist/mesh.hpp"
#include "coexist/model.hpp"
#include "coexist/nonlinear.hpp"
#include "coexist/verify.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coexist {

struct ContinuationError : SolverError {
  using SolverError::SolverError;
};

struct BranchPoint {
  double lambda = 0.0;
  State state;
  double sup_u = 0.0;
  double sup_v = 0.0;
  double mass_v = 0.0;
  double arc = 0.0;  // cumulative arclength from the bifurcation point
};

enum class BranchTermination {
  lambda_max_reached,
  lambda_min_reached,
  norm_max_reached,
  step_failure,
  fold_limit_reached,
  max_steps_reached,
};

inline const char* to_string(BranchTermination t) {
  switch (t) {
    case BranchTermination::lambda_max_reached: return "lambda_max_reached";
    case BranchTermination::lambda_min_reached: return "lambda_min_reached";
    case BranchTermination::norm_max_reached: return "norm_max_reached";
    case BranchTermination::step_failure: return "step_failure";
    case BranchTermination::fold_limit_reached: return "fold_limit_reached";
    case BranchTermination::max_steps_reached: return "max_steps_reached";
  }
  return "unknown";
}

struct ContinuationSettings {
  double ds = 0.05;
  double ds_min = 1e-8;
  double ds_max = 0.5;
  int max_steps = 1000;
  double lambda_min = -std::numeric_limits<double>::infinity();
  double lambda_max = 0.0;
  double norm_max = 1e3;
  int max_folds = 16;
  NewtonSettings newton;

  void validate() const {
    if (!(ds_min > 0.0) || !(ds >= ds_min) || !(ds_max >= ds))
      throw std::invalid_argument(
          "ContinuationSettings: need 0 < ds_min <= ds <= ds_max");
    if (max_steps < 1)
      throw std::invalid_argument("ContinuationSettings: max_steps must be >= 1");
    if (!(lambda_max > lambda_min))
      throw std::invalid_argument(
          "ContinuationSettings: lambda window must be nonempty");
    if (!(norm_max > 0.0))
      throw std::invalid_argument("ContinuationSettings: norm_max must be positive");
    if (max_folds < 0)
      throw std::invalid_argument("ContinuationSettings: max_folds must be >= 0");
    newton.validate();
  }
};

struct Branch {
  std::vector<BranchPoint> points;  // first entry is the (lambda*, 0) anchor
  BranchTermination termination = BranchTermination::max_steps_reached;
  int fold_count = 0;
  double min_lambda = std::numeric_limits<double>::infinity();
};

struct InitialTangent {
  double dlambda = 0.0;
  State dstate;
};

namespace detail {

struct TangentVec {
  double dlambda = 0.0;
  Vector dx;
};

inline double metric_norm(const TangentVec& t, Index node_count) {
  return std::sqrt(t.dlambda * t.dlambda +
                   t.dx.squaredNorm() / static_cast<double>(node_count));
}

inline TangentVec raw_initial_tangent(const DiffusionLaw& law,
                                      const ProblemParams& params,
                                      const Mesh& mesh) {
  const KernelBasis kb = kernel_basis(params, mesh);
  const DirectionResult dir = classify_direction(law, params, mesh);
  TangentVec t;
  t.dx.resize(2 * mesh.node_count);
  t.dx.head(mesh.node_count) = kb.phi1.values();
  t.dx.tail(mesh.node_count) = kb.psi1.values();
  t.dlambda = dir.rho1;
  const double norm = metric_norm(t, mesh.node_count);
  t.dlambda /= norm;
  t.dx /= norm;
  return t;
}

struct CorrectorResult {
  Vector x;
  double lambda = 0.0;
  int iterations = 0;
};

// Newton on [residual; arclength constraint] with the tangent as border.
inline std::optional<CorrectorResult> bordered_corrector(
    const DiscreteProblem& problem, Vector x, double lambda,
    const Vector& x_prev, double lambda_prev, const TangentVec& tangent,
    double ds, const NewtonSettings& newton) {
  const Index N = problem.n();
  const Index M = 2 * N;
  const double inv_nodes = 1.0 / static_cast<double>(N);
  const double con_tol = 1e-10 * (1.0 + std::abs(ds));

  auto constraint = [&](const Vector& xc, double lc) {
    return tangent.dlambda * (lc - lambda_prev) +
           tangent.dx.dot(xc - x_prev) * inv_nodes - ds;
  };
  auto tol_at = [&newton](const Vector& xc) {
    return newton.tol_residual * (1.0 + xc.lpNorm<Eigen::Infinity>());
  };

  Vector f = problem.residual(x, lambda);
  double con = constraint(x, lambda);
  double merit = f.lpNorm<Eigen::Infinity>() + std::abs(con);

  for (int iter = 1; iter <= newton.max_iter; ++iter) {
    if (f.lpNorm<Eigen::Infinity>() <= tol_at(x) && std::abs(con) <= con_tol)
      return CorrectorResult{std::move(x), lambda, iter - 1};

    const RankOneSystem jac = problem.jacobian(x, lambda);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(jac.A.matrix().nonZeros() + 3 * N + 2));
    const SparseMatrix& A = jac.A.matrix();
    for (int k = 0; k < A.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(A, k); it; ++it)
        trip.emplace_back(it.row(), it.col(), it.value());
    for (Index i = 0; i < N; ++i) trip.emplace_back(i, M, -x[i]);
    for (Index j = 0; j < M; ++j) {
      const double c = tangent.dx[j] * inv_nodes;
      if (c != 0.0) trip.emplace_back(M, j, c);
    }
    trip.emplace_back(M, M, tangent.dlambda);
    SparseMatrix ext(M + 1, M + 1);
    ext.setFromTriplets(trip.begin(), trip.end());

    Vector w_ext = Vector::Zero(M + 1);
    w_ext.head(M) = jac.w;
    Vector z_ext = Vector::Zero(M + 1);
    z_ext.head(M) = jac.z;
    Vector rhs(M + 1);
    rhs.head(M) = -f;
    rhs[M] = -con;

    Vector step;
    try {
      step = solve_rank_one({SparseOperator(std::move(ext)), std::move(w_ext),
                             std::move(z_ext)},
                            rhs);
    } catch (const SolverError&) {
      return std::nullopt;
    }

    double alpha = 1.0;
    bool accepted = false;
    while (alpha >= kMinLineSearchStep) {
      Vector x_try = x + alpha * step.head(M);
      const double l_try = lambda + alpha * step[M];
      Vector f_try = problem.residual(x_try, l_try);
      const double con_try = constraint(x_try, l_try);
      const double merit_try =
          f_try.lpNorm<Eigen::Infinity>() + std::abs(con_try);
      if (std::isfinite(merit_try) && merit_try <= (1.0 - 1e-4 * alpha) * merit) {
        x = std::move(x_try);
        lambda = l_try;
        f = std::move(f_try);
        con = con_try;
        merit = merit_try;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) return std::nullopt;
    if (f.lpNorm<Eigen::Infinity>() <= tol_at(x) && std::abs(con) <= con_tol)
      return CorrectorResult{std::move(x), lambda, iter};
  }
  return std::nullopt;
}

}  // namespace detail

// First-order branch direction at the bifurcation point: state direction
// (phi1, psi1), lambda direction rho1, normalized to unit arclength metric.
inline InitialTangent initial_tangent(const DiffusionLaw& law,
                                      const ProblemParams& params,
                                      const Mesh& mesh) {
  params.validate();
  if (!(params.rho > 0.0))
    throw std::invalid_argument("initial_tangent: rho must be positive");
  if (!(law(0.0) > 0.0))
    throw std::invalid_argument(
        "initial_tangent: a(0) must be positive (use epsilon_homotopy)");
  const detail::TangentVec t = detail::raw_initial_tangent(law, params, mesh);
  const Index N = mesh.node_count;
  return {t.dlambda,
          State{ScalarField(mesh, t.dx.head(N)), ScalarField(mesh, t.dx.tail(N))}};
}

// Predictor-corrector loop: secant predictor (initial tangent on the first
// step), bordered Newton corrector, adaptive step (halve on failure, grow
// 1.3x on fast convergence). Interior points are coexistence states; the
// first recorded point is the (lambda*, 0) anchor itself.
inline Branch continue_branch(const DiffusionLaw& law,
                              const ProblemParams& params,
                              const ContinuationSettings& settings,
                              const Mesh& mesh) {
  params.validate();
  settings.validate();
  if (!(params.rho > 0.0))
    throw std::invalid_argument("continue_branch: rho must be positive");
  if (!(law(0.0) > 0.0))
    throw std::invalid_argument(
        "continue_branch: a(0) must be positive (use epsilon_homotopy)");

  const double lambda_star = bifurcation_point(law, mesh);
  const Index N = mesh.node_count;
  const Index M = 2 * N;
  DiscreteProblem problem(params, law, mesh);

  Branch branch;
  branch.min_lambda = lambda_star;
  {
    BranchPoint anchor{lambda_star, State::zero(mesh), 0.0, 0.0, 0.0, 0.0};
    branch.points.push_back(std::move(anchor));
  }

  detail::TangentVec tangent = detail::raw_initial_tangent(law, params, mesh);
  Vector x_prev = Vector::Zero(M);
  double lambda_prev = lambda_star;
  double arc = 0.0;

  const double s0 = 1e-3 * (1.0 + lambda_star);
  double ds = s0;
  bool first_step = true;

  for (int step = 0; step < settings.max_steps; ++step) {
    std::optional<detail::CorrectorResult> corr;
    while (true) {
      Vector x_pred = x_prev + ds * tangent.dx;
      const double lambda_pred = lambda_prev + ds * tangent.dlambda;
      corr = detail::bordered_corrector(problem, std::move(x_pred), lambda_pred,
                                        x_prev, lambda_prev, tangent, ds,
                                        settings.newton);
      if (corr) {
        // Interior branch points must be coexistence states; a corrector
        // that fell back onto the trivial sheet counts as a failed step.
        const bool positive = corr->x.head(N).minCoeff() > 0.0 &&
                              corr->x.tail(N).minCoeff() > 0.0;
        if (positive) break;
        corr.reset();
      }
      ds *= 0.5;
      if (ds < settings.ds_min) {
        if (first_step)
          throw ContinuationError(
              "continue_branch: corrector failed at the first step off the "
              "bifurcation point");
        branch.termination = BranchTermination::step_failure;
        return branch;
      }
    }

    detail::TangentVec secant;
    secant.dx = corr->x - x_prev;
    secant.dlambda = corr->lambda - lambda_prev;
    const double dist = detail::metric_norm(secant, N);
    secant.dx /= dist;
    secant.dlambda /= dist;

    const bool folded = (tangent.dlambda > 0.0 && secant.dlambda < 0.0) ||
                        (tangent.dlambda < 0.0 && secant.dlambda > 0.0);
    if (folded) ++branch.fold_count;

    arc += dist;
    State state = problem.unpack(corr->x);
    BranchPoint pt{corr->lambda,
                   std::move(state),
                   0.0,
                   0.0,
                   0.0,
                   arc};
    pt.sup_u = pt.state.u.sup_norm();
    pt.sup_v = pt.state.v.sup_norm();
    pt.mass_v = integrate(mesh, pt.state.v);
    branch.min_lambda = std::min(branch.min_lambda, pt.lambda);

    x_prev = corr->x;
    lambda_prev = corr->lambda;
    tangent = std::move(secant);
    const int iters = corr->iterations;
    branch.points.push_back(std::move(pt));

    if (lambda_prev > settings.lambda_max) {
      branch.termination = BranchTermination::lambda_max_reached;
      return branch;
    }
    if (lambda_prev < settings.lambda_min) {
      branch.termination = BranchTermination::lambda_min_reached;
      return branch;
    }
    if (branch.points.back().sup_u > settings.norm_max ||
        branch.points.back().sup_v > settings.norm_max) {
      branch.termination = BranchTermination::norm_max_reached;
      return branch;
    }
    if (branch.fold_count > settings.max_folds) {
      branch.termination = BranchTermination::fold_limit_reached;
      return branch;
    }

    if (first_step) {
      first_step = false;
      ds = settings.ds;
    } else if (iters <= 4) {
      ds = std::min(ds * 1.3, settings.ds_max);
    }
  }
  branch.termination = BranchTermination::max_steps_reached;
  return branch;
}

// Sign of the least-squares slope of (lambda - lambda*) against arclength
// over the first k points beyond the anchor. Only meaningful while the
// amplitudes are small.
inline Direction measure_direction(const Branch& branch, int k_points,
                                   double amplitude_cap = 1.0) {
  if (k_points < 1)
    throw std::invalid_argument("measure_direction: k_points must be >= 1");
  if (std::cmp_less(branch.points.size(), k_points + 1))
    throw std::invalid_argument(
        "measure_direction: branch has fewer points than requested");
  const double lambda_star = branch.points.front().lambda;
  double num = 0.0, den = 0.0;
  for (int i = 1; i <= k_points; ++i) {
    const BranchPoint& p = branch.points[static_cast<std::size_t>(i)];
    if (p.sup_u > amplitude_cap)
      throw std::invalid_argument(
          "measure_direction: amplitudes exceed the small-amplitude cap");
    num += p.arc * (p.lambda - lambda_star);
    den += p.arc * p.arc;
  }
  const double slope = num / den;
  return slope > 0.0 ? Direction::supercritical : Direction::subcritical;
}

struct HomotopyStep {
  double eps = 0.0;
  State state;
  double sup_u = 0.0;
  double sup_v = 0.0;
};

struct HomotopyResult {
  std::vector<HomotopyStep> steps;
  bool completed = false;
  std::string error;
};

// Regularized sweep for degenerate diffusion a(0) = 0: solve with
// a_eps = a + eps along a decreasing schedule, warm-starting each solve
// from the previous one. The first eps is reached by continuation from its
// own bifurcation point eps*lambda1 up to the target lambda. Failures
// leave the partial sequence in place.
inline HomotopyResult epsilon_homotopy(const DiffusionLaw& law,
                                       const ProblemParams& params,
                                       std::span<const double> eps_schedule,
                                       const ContinuationSettings& settings,
                                       const Mesh& mesh) {
  params.validate();
  if (law(0.0) != 0.0)
    throw std::invalid_argument(
        "epsilon_homotopy: requires a(0) = 0 (use continue_branch otherwise)");
  if (!(params.lambda > 0.0))
    throw std::invalid_argument("epsilon_homotopy: requires lambda > 0");
  if (eps_schedule.empty())
    throw std::invalid_argument("epsilon_homotopy: empty schedule");
  for (std::size_t i = 0; i < eps_schedule.size(); ++i) {
    if (!(eps_schedule[i] > 0.0))
      throw std::invalid_argument("epsilon_homotopy: eps values must be positive");
    if (i > 0 && !(eps_schedule[i] < eps_schedule[i - 1]))
      throw std::invalid_argument("epsilon_homotopy: schedule must decrease");
  }
  if (params.b > 0.0 && !(h1_margin(params, mesh) > 0.0) && !law.is_h2())
    throw std::invalid_argument(
        "epsilon_homotopy: for b > 0 either the smallness condition or "
        "superlinear growth of a must hold");

  HomotopyResult result;
  std::optional<State> warm;
  for (const double eps : eps_schedule) {
    const DiffusionLaw law_eps = law.with_offset(eps);
    try {
      if (!warm) {
        ContinuationSettings cs = settings;
        cs.lambda_max = params.lambda;
        cs.lambda_min = -std::numeric_limits<double>::infinity();
        const Branch br = continue_branch(law_eps, params, cs, mesh);
        if (br.termination != BranchTermination::lambda_max_reached) {
          result.error = "continuation toward the target lambda stopped early (" +
                         std::string(to_string(br.termination)) + ")";
          return result;
        }
        warm = br.points.back().state;
      }
      const SolveOutcome out =
          newton_solve(params, law_eps, *warm, settings.newton, mesh);
      if (out.converged_to != SolutionClass::coexistence) {
        result.error = "solve at eps = " + std::to_string(eps) +
                       " left the coexistence regime";
        return result;
      }
      warm = out.state;
      HomotopyStep step{eps, out.state, out.state.u.sup_norm(),
                        out.state.v.sup_norm()};
      result.steps.push_back(std::move(step));
    } catch (const SolverError& e) {
      result.error = "eps = " + std::to_string(eps) + ": " + e.what();
      return result;
    }
  }
  result.completed = true;
  return result;
}

}  // namespace coexist

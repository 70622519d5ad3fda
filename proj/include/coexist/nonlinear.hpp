#pragma once

// Newton solver for the discrete coupled system. The Jacobian splits into a
// sparse block part plus a rank-one correction coming from the nonlocal
// coefficient: differentiating a(integral v) produces the dense column
// w = a'(int v) * (L u) paired against the quadrature row z = int(eta).
// Linear solves exploit that structure by elimination,
//
//   (A + w z^T) x = r   =>   y = A^{-1} r,  s = A^{-1} w,
//                            x = y - s * (z.y) / (1 + z.s),
//
// so only the sparse part is ever factored. A vanishing denominator means
// the full operator is singular even though A is not (the fold situation)
// and is surfaced as a distinct error.

#include "coexist/mesh.hpp"
#include "coexist/model.hpp"
#include "coexist/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace coexist {

struct NewtonSettings {
  // Success requires the sup-norm residual to reach tol_residual*(1+|x|),
  // scaled by the iterate norm so the criterion stays meaningful at any
  // amplitude and resolution (the stencil roundoff floor grows like
  // 4*|u|*eps/h^2).
  double tol_residual = 1e-9;
  double tol_step = 1e-12;  // stall detection on the damped step
  int max_iter = 50;
  double damping = 1.0;     // initial step factor in (0, 1]

  void validate() const {
    if (!(tol_residual > 0.0) || !(tol_step > 0.0))
      throw std::invalid_argument("NewtonSettings: tolerances must be positive");
    if (max_iter < 1)
      throw std::invalid_argument("NewtonSettings: max_iter must be >= 1");
    if (!(damping > 0.0) || damping > 1.0)
      throw std::invalid_argument("NewtonSettings: damping must lie in (0, 1]");
  }
};

// Sparse part plus rank-one correction: the full operator is A + w z^T.
// w = 0 marks a purely sparse system.
struct RankOneSystem {
  SparseOperator A;
  Vector w;
  Vector z;
};

inline Vector solve_rank_one(const RankOneSystem& sys, const Vector& rhs) {
  const LuFactor factor(sys.A.matrix());
  Vector y = factor.solve(rhs);
  if (sys.w.isZero(0.0)) return y;
  const Vector s = factor.solve(sys.w);
  const double denom = 1.0 + sys.z.dot(s);
  if (std::abs(denom) < 1e-12)
    throw FoldSingularityError(
        "solve_rank_one: elimination denominator vanished (|1 + z.A^-1 w| = " +
        std::to_string(std::abs(denom)) + ")");
  y -= s * (sys.z.dot(y) / denom);
  return y;
}

// Assembled discrete context: mesh, Laplacian, quadrature row, parameters.
// Works on stacked vectors x = [u; v] of size 2N; lambda is passed
// explicitly so continuation can vary it.
class DiscreteProblem {
 public:
  DiscreteProblem(ProblemParams params, DiffusionLaw law, Mesh mesh)
      : params_(params),
        law_(law),
        mesh_(mesh),
        lap_(laplacian(mesh).matrix()) {
    params_.validate();
  }

  Index n() const { return mesh_.node_count; }
  const Mesh& mesh() const { return mesh_; }
  const ProblemParams& params() const { return params_; }
  const DiffusionLaw& law() const { return law_; }
  const SparseMatrix& lap() const { return lap_; }

  Vector pack(const State& s) const {
    Vector x(2 * n());
    x.head(n()) = s.u.values();
    x.tail(n()) = s.v.values();
    return x;
  }

  State unpack(const Vector& x) const {
    return {ScalarField(mesh_, x.head(n())), ScalarField(mesh_, x.tail(n()))};
  }

  double mass_v(const Vector& x) const {
    return mesh_.cell_weight * x.tail(n()).sum();
  }

  Vector residual(const Vector& x, double lambda) const {
    const Index N = n();
    const auto u = x.head(N);
    const auto v = x.tail(N);
    const double a = law_(mass_v(x));
    Vector r(2 * N);
    r.head(N) = a * (lap_ * u) - lambda * u + u.cwiseProduct(u) -
                params_.b * u.cwiseProduct(v);
    r.tail(N) = lap_ * v + params_.sigma * v - params_.rho * u;
    return r;
  }

  Vector residual(const Vector& x) const { return residual(x, params_.lambda); }

  // Derivative of the residual with respect to lambda at a state.
  Vector dresidual_dlambda(const Vector& x) const {
    Vector d = Vector::Zero(2 * n());
    d.head(n()) = -x.head(n());
    return d;
  }

  // Directional derivative of the residual as sparse + rank-one:
  //   u-row: a(int v)*L + diag(2u - lambda - b*v), coupling -b*diag(u),
  //          nonlocal column a'(int v)*(L u) against the quadrature row;
  //   v-row: L + sigma*I with coupling -rho*I.
  RankOneSystem jacobian(const Vector& x, double lambda) const {
    const Index N = n();
    const auto u = x.head(N);
    const auto v = x.tail(N);
    const double mass = mass_v(x);

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(lap_.nonZeros() * 2 + 4 * N));
    const double a = law_(mass);
    for (int k = 0; k < lap_.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(lap_, k); it; ++it) {
        trip.emplace_back(it.row(), it.col(), a * it.value());
        trip.emplace_back(N + it.row(), N + it.col(), it.value());
      }
    }
    for (Index i = 0; i < N; ++i) {
      trip.emplace_back(i, i, 2.0 * u[i] - lambda - params_.b * v[i]);
      trip.emplace_back(i, N + i, -params_.b * u[i]);
      trip.emplace_back(N + i, i, -params_.rho);
      trip.emplace_back(N + i, N + i, params_.sigma);
    }
    SparseMatrix A(2 * N, 2 * N);
    A.setFromTriplets(trip.begin(), trip.end());

    Vector w = Vector::Zero(2 * N);
    const double ap = law_.derivative(mass);
    if (ap != 0.0) w.head(N) = ap * (lap_ * u);
    Vector z = Vector::Zero(2 * N);
    z.tail(N).setConstant(mesh_.cell_weight);
    return {SparseOperator(std::move(A)), std::move(w), std::move(z)};
  }

  RankOneSystem jacobian(const Vector& x) const {
    return jacobian(x, params_.lambda);
  }

 private:
  ProblemParams params_;
  DiffusionLaw law_;
  Mesh mesh_;
  SparseMatrix lap_;
};

inline RankOneSystem assemble_jacobian(const ProblemParams& params,
                                       const DiffusionLaw& law,
                                       const State& state, const Mesh& mesh) {
  require_same_mesh(mesh, state.u.mesh(), "assemble_jacobian");
  DiscreteProblem problem(params, law, mesh);
  return problem.jacobian(problem.pack(state));
}

struct SolveOutcome {
  State state;
  int iterations = 0;
  double final_residual = 0.0;
  SolutionClass converged_to = SolutionClass::invalid;
};

namespace detail {

constexpr double kMinLineSearchStep = 0x1p-20;

inline SolveOutcome make_outcome(const DiscreteProblem& problem, Vector x,
                                 int iterations, double res, double lambda) {
  State state = problem.unpack(x);
  const double tol = 1e-8 * (1.0 + std::abs(lambda));
  SolutionClass cls = classify(state, tol);
  return {std::move(state), iterations, res, cls};
}

}  // namespace detail

// Damped Newton iteration on the stacked system. Steps are backtracked on
// the sup-norm of the residual until a decrease is found; success requires
// the residual to reach tol_residual within max_iter iterations.
inline SolveOutcome newton_solve(const ProblemParams& params,
                                 const DiffusionLaw& law, const State& initial,
                                 const NewtonSettings& settings,
                                 const Mesh& mesh) {
  settings.validate();
  require_same_mesh(mesh, initial.u.mesh(), "newton_solve");
  DiscreteProblem problem(params, law, mesh);
  const double lambda = params.lambda;

  Vector x = problem.pack(initial);
  Vector f = problem.residual(x, lambda);
  double res = f.lpNorm<Eigen::Infinity>();
  auto tol_at = [&settings](const Vector& xc) {
    return settings.tol_residual * (1.0 + xc.lpNorm<Eigen::Infinity>());
  };
  if (res <= tol_at(x))
    return detail::make_outcome(problem, std::move(x), 0, res, lambda);

  for (int iter = 1; iter <= settings.max_iter; ++iter) {
    const RankOneSystem jac = problem.jacobian(x, lambda);
    const Vector step = solve_rank_one(jac, -f);

    double alpha = settings.damping;
    bool accepted = false;
    Vector x_try, f_try;
    double res_try = 0.0;
    while (alpha >= detail::kMinLineSearchStep) {
      x_try = x + alpha * step;
      f_try = problem.residual(x_try, lambda);
      res_try = f_try.lpNorm<Eigen::Infinity>();
      if (std::isfinite(res_try) && res_try <= (1.0 - 1e-4 * alpha) * res) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted)
      throw SolverError("newton_solve: line search stalled at iteration " +
                        std::to_string(iter) + ", residual " +
                        std::to_string(res));

    const double step_size = alpha * step.lpNorm<Eigen::Infinity>();
    x = std::move(x_try);
    f = std::move(f_try);
    res = res_try;
    if (res <= tol_at(x))
      return detail::make_outcome(problem, std::move(x), iter, res, lambda);
    if (step_size <= settings.tol_step * (1.0 + x.lpNorm<Eigen::Infinity>()))
      throw SolverError("newton_solve: step stagnated at iteration " +
                        std::to_string(iter) + " with residual " +
                        std::to_string(res));
  }
  throw SolverError("newton_solve: no convergence within " +
                    std::to_string(settings.max_iter) +
                    " iterations, residual " + std::to_string(res));
}

struct ProbeStart {
  int index = 0;
  double alpha = 0.0;
  std::optional<SolveOutcome> outcome;  // empty on solver failure
  std::string error;
  int distinct_id = -1;  // index into distinct coexistence list, or -1
};

struct ProbeResult {
  std::vector<ProbeStart> starts;
  std::vector<SolveOutcome> distinct_coexistence;
};

namespace detail {

inline bool states_equal(const State& a, const State& b) {
  const double du = (a.u.values() - b.u.values()).lpNorm<Eigen::Infinity>();
  const double dv = (a.v.values() - b.v.values()).lpNorm<Eigen::Infinity>();
  const double scale = 1.0 + a.u.sup_norm() + a.v.sup_norm() +
                       b.u.sup_norm() + b.v.sup_norm();
  return std::max(du, dv) <= 1e-6 * scale;
}

}  // namespace detail

// Reproducible multistart probe: start i uses u0 = alpha_i*phi1*(1+0.3*noise)
// and v0 = K*u0, with alpha_i log-uniform in [amp_lo, amp_hi] and noise from
// an RNG seeded by (seed, i). Solves run concurrently; results are merged in
// start order, so the output is independent of scheduling. Solver failures
// are recorded per start, never fatal.
inline ProbeResult multistart_probe(const ProblemParams& params,
                                    const DiffusionLaw& law, int k,
                                    std::uint64_t seed, double amp_lo,
                                    double amp_hi,
                                    const NewtonSettings& settings,
                                    const Mesh& mesh, int threads = 0) {
  params.validate();
  settings.validate();
  if (k < 1) throw std::invalid_argument("multistart_probe: k must be >= 1");
  if (!(amp_lo > 0.0) || !(amp_hi >= amp_lo))
    throw std::invalid_argument("multistart_probe: bad amplitude range");

  const KernelBasis kb = kernel_basis(params, mesh);
  const Index N = mesh.node_count;

  std::vector<ProbeStart> starts(static_cast<std::size_t>(k));
  auto run_start = [&](int i) {
    // seed_seq keeps 32 bits per element; split the 64-bit seed.
    std::seed_seq seq{static_cast<std::uint32_t>(i),
                      static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double alpha =
        std::exp(std::log(amp_lo) +
                 unif(rng) * (std::log(amp_hi) - std::log(amp_lo)));
    Vector u0(N);
    for (Index j = 0; j < N; ++j)
      u0[j] = alpha * kb.phi1[j] * (1.0 + 0.3 * (2.0 * unif(rng) - 1.0));
    State start{ScalarField(mesh, u0), ScalarField(mesh, kb.K * u0)};

    ProbeStart& slot = starts[static_cast<std::size_t>(i)];
    slot.index = i;
    slot.alpha = alpha;
    try {
      slot.outcome = newton_solve(params, law, start, settings, mesh);
    } catch (const std::exception& e) {
      slot.error = e.what();
    }
  };

  int nthreads = threads > 0
                     ? threads
                     : static_cast<int>(std::thread::hardware_concurrency());
  nthreads = std::clamp(nthreads, 1, k);
  if (nthreads == 1) {
    for (int i = 0; i < k; ++i) run_start(i);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t)
      pool.emplace_back([&, t] {
        for (int i = t; i < k; i += nthreads) run_start(i);
      });
    for (auto& th : pool) th.join();
  }

  ProbeResult result;
  for (ProbeStart& s : starts) {
    if (s.outcome && s.outcome->converged_to == SolutionClass::coexistence) {
      int id = -1;
      for (std::size_t d = 0; d < result.distinct_coexistence.size(); ++d) {
        if (detail::states_equal(s.outcome->state,
                                 result.distinct_coexistence[d].state)) {
          id = static_cast<int>(d);
          break;
        }
      }
      if (id < 0) {
        id = static_cast<int>(result.distinct_coexistence.size());
        result.distinct_coexistence.push_back(*s.outcome);
      }
      s.distinct_id = id;
    }
    result.starts.push_back(std::move(s));
  }
  return result;
}

}  // namespace coexist

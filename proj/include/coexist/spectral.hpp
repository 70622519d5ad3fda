#pragma once

// Principal eigenpairs of -d*Laplace + diag(c) under Dirichlet conditions,
// and the auxiliary field e_sigma solving (-Laplace + sigma) e = 1.
//
// The eigensolver is inverse power iteration on the shifted operator: a
// constant shift makes the operator positive definite whenever c dips
// negative, and is subtracted from the converged value. The iteration is
// deterministic (fixed all-ones start) and the returned eigenfunction is
// strictly positive and normalized to integrate(fn^2) = 1. That fixed
// normalization is load-bearing: the bifurcation-direction formulas in
// model.hpp are only valid under it.

#include "coexist/mesh.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace coexist {

struct EigenPair {
  double value = 0.0;  // principal eigenvalue
  ScalarField fn;      // principal eigenfunction, positive, integrate(fn^2)=1
};

inline EigenPair principal_eigenpair(double d, const ScalarField& c,
                                     const Mesh& mesh, double tol = 1e-10) {
  if (!(d > 0.0))
    throw std::invalid_argument("principal_eigenpair: diffusion d must be positive");
  if (!(tol > 0.0))
    throw std::invalid_argument("principal_eigenpair: tol must be positive");
  require_same_mesh(mesh, c.mesh(), "principal_eigenpair");

  const Index N = mesh.node_count;
  SparseMatrix op = d * laplacian(mesh).matrix();
  const double cmin = c.min();
  const double shift = cmin < 0.0 ? -cmin : 0.0;
  {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(N));
    for (Index i = 0; i < N; ++i) trip.emplace_back(i, i, c[i] + shift);
    SparseMatrix diag(N, N);
    diag.setFromTriplets(trip.begin(), trip.end());
    op += diag;
  }

  const SpdFactor factor(op);
  Vector x = Vector::Ones(N);
  x /= x.norm();

  // Residual is checked on the integrate-normalized eigenfunction, which
  // rescales the 2-normalized iterate by 1/sqrt(cell_weight).
  const double fn_scale = 1.0 / std::sqrt(mesh.cell_weight);

  constexpr int kMaxIter = 10000;
  double nu = 0.0;
  double nu_prev = std::numeric_limits<double>::infinity();
  double res = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int it = 0; it < kMaxIter; ++it) {
    Vector y = factor.solve(x);
    x = y / y.norm();
    const Vector opx = op * x;
    nu = x.dot(opx);
    res = (opx - nu * x).lpNorm<Eigen::Infinity>() * fn_scale;
    const double scale = std::abs(nu) + 1.0;
    if (std::abs(nu - nu_prev) <= tol * scale && res <= tol * scale) {
      converged = true;
      break;
    }
    nu_prev = nu;
  }
  if (!converged)
    throw SolverError("principal_eigenpair: no convergence after " +
                      std::to_string(kMaxIter) +
                      " iterations, last residual " + std::to_string(res));

  // Inverse iteration from the positive cone stays positive (the shifted
  // operator is an M-matrix), but guard the sign anyway.
  if (x.sum() < 0.0) x = -x;
  if (x.minCoeff() <= 0.0)
    throw SolverError("principal_eigenpair: eigenfunction lost positivity");

  x /= std::sqrt(mesh.cell_weight * x.squaredNorm());
  return {nu - shift, ScalarField(mesh, std::move(x))};
}

inline EigenPair principal_eigenpair(double d, double c_const, const Mesh& mesh,
                                     double tol = 1e-10) {
  return principal_eigenpair(d, ScalarField::constant(mesh, c_const), mesh, tol);
}

// Unique positive solution of (-Laplace + sigma) e = 1, e = 0 on the
// boundary. Satisfies 0 < e <= 1/sigma (maximum principle).
inline ScalarField solve_e_sigma(double sigma, const Mesh& mesh) {
  if (!(sigma > 0.0))
    throw std::invalid_argument("solve_e_sigma: sigma must be positive");
  const Index N = mesh.node_count;
  SparseMatrix op = laplacian(mesh).matrix();
  SparseMatrix id(N, N);
  id.setIdentity();
  op += sigma * id;
  Vector e = SpdFactor(op).solve(Vector::Ones(N));
  if (e.minCoeff() <= 0.0)
    throw SolverError("solve_e_sigma: solution lost positivity");
  return {mesh, std::move(e)};
}

}  // namespace coexist

#pragma once

// Discrete geometry: interior-node grids over an interval or axis-aligned
// rectangle with homogeneous Dirichlet boundary, the second-order centered
// Laplacian stencil, and composite-trapezoid quadrature (fields vanish on
// the boundary, so the quadrature reduces to cell_weight * sum of nodal
// values).
//
// Node ordering is lexicographic with the x index fastest: in 2D, node
// (i, j) lives at ((i+1)*h[0], (j+1)*h[1]) and has linear index j*n[0] + i.

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace coexist {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Index = Eigen::Index;

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Singular sparse part of a linear system (factorization failed).
struct SingularSystemError : SolverError {
  using SolverError::SolverError;
};

// Vanishing denominator of the rank-one elimination. Signals a singular
// full operator even though the sparse part factored, e.g. at a fold.
struct FoldSingularityError : SolverError {
  using SolverError::SolverError;
};

struct Mesh {
  int dim = 1;                            // 1 or 2
  std::array<double, 2> extent{1.0, 1.0}; // lengths per axis
  std::array<int, 2> n{0, 0};             // interior points per axis
  std::array<double, 2> h{0.0, 0.0};      // spacing, h = extent/(n+1)
  Index node_count = 0;                   // product of n[axis]
  double cell_weight = 0.0;               // quadrature weight per node

  double coord(Index node, int axis) const {
    if (dim == 1) return (static_cast<double>(node) + 1.0) * h[0];
    const Index i = node % n[0];
    const Index j = node / n[0];
    return axis == 0 ? (static_cast<double>(i) + 1.0) * h[0]
                     : (static_cast<double>(j) + 1.0) * h[1];
  }

  friend bool operator==(const Mesh& a, const Mesh& b) {
    return a.dim == b.dim && a.extent == b.extent && a.n == b.n;
  }
};

inline Mesh build_mesh(int dim, std::span<const double> extents,
                       std::span<const int> counts) {
  if (dim != 1 && dim != 2)
    throw std::invalid_argument("build_mesh: dim must be 1 or 2");
  if (std::cmp_not_equal(extents.size(), dim) ||
      std::cmp_not_equal(counts.size(), dim))
    throw std::invalid_argument("build_mesh: extents/n must have one entry per axis");
  Mesh m;
  m.dim = dim;
  m.node_count = 1;
  m.cell_weight = 1.0;
  for (int ax = 0; ax < dim; ++ax) {
    if (!(extents[ax] > 0.0))
      throw std::invalid_argument("build_mesh: extents must be positive");
    if (counts[ax] < 3)
      throw std::invalid_argument("build_mesh: need at least 3 interior points per axis");
    m.extent[ax] = extents[ax];
    m.n[ax] = counts[ax];
    m.h[ax] = extents[ax] / (counts[ax] + 1);
    m.node_count *= counts[ax];
    m.cell_weight *= m.h[ax];
  }
  return m;
}

inline Mesh unit_interval(int n) {
  const double ext[] = {1.0};
  const int cnt[] = {n};
  return build_mesh(1, ext, cnt);
}

inline Mesh unit_square(int nx, int ny) {
  const double ext[] = {1.0, 1.0};
  const int cnt[] = {nx, ny};
  return build_mesh(2, ext, cnt);
}

// Nodal samples of a scalar function over the interior nodes of a mesh.
// Immutable after construction; values are checked finite.
class ScalarField {
 public:
  ScalarField(Mesh mesh, Vector values)
      : mesh_(mesh), values_(std::move(values)) {
    if (values_.size() != mesh_.node_count)
      throw std::invalid_argument("ScalarField: value count does not match mesh");
    if (!values_.allFinite())
      throw std::invalid_argument("ScalarField: values must be finite");
  }

  static ScalarField constant(const Mesh& mesh, double value) {
    return {mesh, Vector::Constant(mesh.node_count, value)};
  }
  static ScalarField zero(const Mesh& mesh) { return constant(mesh, 0.0); }

  template <typename Fn>
  static ScalarField sample(const Mesh& mesh, Fn&& fn) {
    Vector v(mesh.node_count);
    for (Index k = 0; k < mesh.node_count; ++k) {
      if constexpr (std::is_invocable_v<Fn&, double, double>)
        v[k] = fn(mesh.coord(k, 0), mesh.dim == 2 ? mesh.coord(k, 1) : 0.0);
      else
        v[k] = fn(mesh.coord(k, 0));
    }
    return {mesh, std::move(v)};
  }

  const Mesh& mesh() const { return mesh_; }
  const Vector& values() const { return values_; }
  Index size() const { return values_.size(); }
  double operator[](Index i) const { return values_[i]; }

  double min() const { return values_.minCoeff(); }
  double max() const { return values_.maxCoeff(); }
  double sup_norm() const { return values_.lpNorm<Eigen::Infinity>(); }

 private:
  Mesh mesh_;
  Vector values_;
};

inline void require_same_mesh(const Mesh& a, const Mesh& b, const char* who) {
  if (!(a == b)) throw std::invalid_argument(std::string(who) + ": mesh mismatch");
}

// Composite trapezoid with the Dirichlet zero extension: fields vanish on
// the boundary, so the rule collapses to cell_weight * sum over interior
// nodes. Exactly linear in f.
inline double integrate(const Mesh& mesh, const ScalarField& f) {
  require_same_mesh(mesh, f.mesh(), "integrate");
  return mesh.cell_weight * f.values().sum();
}

// Sparse linear operator on nodal vectors (banded for stencil assemblies,
// block-structured for the coupled Jacobians built on top of it).
class SparseOperator {
 public:
  explicit SparseOperator(SparseMatrix m) : mat_(std::move(m)) {
    mat_.makeCompressed();
  }

  Index dim() const { return mat_.rows(); }
  const SparseMatrix& matrix() const& { return mat_; }
  SparseMatrix matrix() && { return std::move(mat_); }

  Vector apply(const Vector& x) const {
    if (x.size() != mat_.cols())
      throw std::invalid_argument("SparseOperator::apply: size mismatch");
    return mat_ * x;
  }

  ScalarField apply(const ScalarField& f) const {
    return {f.mesh(), apply(f.values())};
  }

  bool is_symmetric(double tol = 0.0) const {
    SparseMatrix t = mat_.transpose();
    SparseMatrix d = mat_ - t;
    for (int k = 0; k < d.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(d, k); it; ++it)
        if (std::abs(it.value()) > tol) return false;
    return true;
  }

 private:
  SparseMatrix mat_;
};

// Second-order centered discretization of -Laplace with homogeneous
// Dirichlet boundary. Symmetric positive definite.
inline SparseOperator laplacian(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trip;
  const Index N = mesh.node_count;
  if (mesh.dim == 1) {
    const double ih2 = 1.0 / (mesh.h[0] * mesh.h[0]);
    trip.reserve(static_cast<std::size_t>(3 * N));
    for (Index i = 0; i < N; ++i) {
      trip.emplace_back(i, i, 2.0 * ih2);
      if (i > 0) trip.emplace_back(i, i - 1, -ih2);
      if (i + 1 < N) trip.emplace_back(i, i + 1, -ih2);
    }
  } else {
    const Index nx = mesh.n[0], ny = mesh.n[1];
    const double ihx2 = 1.0 / (mesh.h[0] * mesh.h[0]);
    const double ihy2 = 1.0 / (mesh.h[1] * mesh.h[1]);
    trip.reserve(static_cast<std::size_t>(5 * N));
    for (Index j = 0; j < ny; ++j) {
      for (Index i = 0; i < nx; ++i) {
        const Index k = j * nx + i;
        trip.emplace_back(k, k, 2.0 * ihx2 + 2.0 * ihy2);
        if (i > 0) trip.emplace_back(k, k - 1, -ihx2);
        if (i + 1 < nx) trip.emplace_back(k, k + 1, -ihx2);
        if (j > 0) trip.emplace_back(k, k - nx, -ihy2);
        if (j + 1 < ny) trip.emplace_back(k, k + nx, -ihy2);
      }
    }
  }
  SparseMatrix m(N, N);
  m.setFromTriplets(trip.begin(), trip.end());
  return SparseOperator(std::move(m));
}

// Cholesky-type factorization for the symmetric positive definite solves
// (-d*Laplace + diag(c) after shifting). Factor once, solve many.
class SpdFactor {
 public:
  explicit SpdFactor(const SparseMatrix& m) {
    solver_.compute(m);
    if (solver_.info() != Eigen::Success)
      throw SingularSystemError("SpdFactor: factorization failed");
  }

  Vector solve(const Vector& rhs) const {
    Vector x = solver_.solve(rhs);
    if (solver_.info() != Eigen::Success)
      throw SingularSystemError("SpdFactor: solve failed");
    return x;
  }

 private:
  Eigen::SimplicialLDLT<SparseMatrix> solver_;
};

// General sparse LU for the nonsymmetric coupled systems.
class LuFactor {
 public:
  explicit LuFactor(const SparseMatrix& m) {
    solver_.compute(m);
    if (solver_.info() != Eigen::Success)
      throw SingularSystemError("LuFactor: factorization failed");
  }

  Vector solve(const Vector& rhs) const {
    Vector x = solver_.solve(rhs);
    if (solver_.info() != Eigen::Success)
      throw SingularSystemError("LuFactor: solve failed");
    return x;
  }

 private:
  Eigen::SparseLU<SparseMatrix> solver_;
};

}  // namespace coexist

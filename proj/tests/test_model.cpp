#include "coexist/model.hpp"

#include "coexist/nonlinear.hpp"
#include "oracles.hpp"

#include <catch2/catch.hpp>

#include <cmath>
#include <random>

using namespace coexist;
using oracles::kPi2;

namespace {
const Mesh& mesh256() {
  static const Mesh m = unit_interval(256);
  return m;
}
}  // namespace

TEST_CASE("diffusion law families evaluate and differentiate exactly",
          "[model]") {
  const DiffusionLaw c = DiffusionLaw::constant(2.0);
  CHECK(c(3.7) == 2.0);
  CHECK(c.derivative(3.7) == 0.0);
  CHECK(c.a_lower() == 2.0);
  CHECK_FALSE(c.is_h2());
  CHECK(c.is_increasing());

  const DiffusionLaw aff = DiffusionLaw::affine(1.0, 0.5);
  CHECK(aff(2.0) == Approx(2.0));
  CHECK(aff.derivative(10.0) == 0.5);
  CHECK_FALSE(aff.is_h2());

  const DiffusionLaw pow = DiffusionLaw::power(1.0, 2.0, 2.5);
  CHECK(pow(2.0) == Approx(1.0 + 2.0 * std::pow(2.0, 2.5)));
  CHECK(pow.derivative(0.0) == 0.0);
  CHECK(pow.is_h2());

  const DiffusionLaw sat = DiffusionLaw::saturating(0.5, 3.0);
  CHECK(sat(1.0) == Approx(0.5 + 1.5));
  CHECK_FALSE(sat.is_h2());

  SECTION("derivatives agree with central differences") {
    for (const DiffusionLaw& law : {aff, pow, sat}) {
      for (double s : {0.3, 1.7, 4.0}) {
        const double h = 1e-6;
        const double fd = (law(s + h) - law(s - h)) / (2.0 * h);
        CHECK(law.derivative(s) == Approx(fd).margin(1e-6));
      }
    }
  }

  SECTION("construction rejects bad coefficients") {
    CHECK_THROWS_AS(DiffusionLaw::affine(-1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(DiffusionLaw::power(1.0, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(DiffusionLaw::power(1.0, -2.0, 2.0), std::invalid_argument);
  }

  SECTION("offset shifts a0 only") {
    const DiffusionLaw shifted = aff.with_offset(0.25);
    CHECK(shifted(0.0) == Approx(1.25));
    CHECK(shifted.derivative(1.0) == aff.derivative(1.0));
  }
}

TEST_CASE("params and state validate their invariants", "[model]") {
  CHECK_THROWS_AS((ProblemParams{1.0, 0.0, 1.0, 0.0}.validate()),
                  std::invalid_argument);
  CHECK_THROWS_AS((ProblemParams{1.0, 0.0, -1.0, 1.0}.validate()),
                  std::invalid_argument);
  const Mesh a = unit_interval(8);
  const Mesh b = unit_interval(9);
  CHECK_THROWS_AS(State(ScalarField::zero(a), ScalarField::zero(b)),
                  std::invalid_argument);
}

TEST_CASE("residual vanishes on the trivial state", "[model]") {
  const Mesh& mesh = mesh256();
  const DiffusionLaw law = DiffusionLaw::affine(1.0, 1.0);
  for (double b : {-1.0, 0.0, 2.0}) {
    const ProblemParams params{7.3, b, 1.5, 0.8};
    const State zero = State::zero(mesh);
    const State r = residual(params, law, zero, mesh);
    CHECK(r.u.sup_norm() == 0.0);
    CHECK(r.v.sup_norm() == 0.0);
  }
}

TEST_CASE("residual against the fixed-point oracle for the logistic limit",
          "[model][oracle]") {
  const Mesh& mesh = mesh256();
  const DiffusionLaw law = DiffusionLaw::constant(1.0);
  const double lambda = 2.0 * kPi2;
  const Vector u = oracles::picard_logistic(mesh, law, lambda, 0.0, 1.0, 5e-9);
  const ProblemParams params{lambda, 0.0, 0.0, 1.0};
  const State state{ScalarField(mesh, u), ScalarField::zero(mesh)};
  const State r = residual(params, law, state, mesh);
  CHECK(r.u.sup_norm() <= 1e-8);
  CHECK(r.v.sup_norm() == 0.0);
}

TEST_CASE("residual second component is 1 at (0, e_sigma)", "[model]") {
  const Mesh& mesh = mesh256();
  const double sigma = 1.0;
  const ProblemParams params{3.0, 0.5, 1.0, sigma};
  const State state{ScalarField::zero(mesh), solve_e_sigma(sigma, mesh)};
  const State r = residual(params, DiffusionLaw::constant(1.0), state, mesh);
  CHECK((r.v.values() - Vector::Ones(mesh.node_count)).lpNorm<Eigen::Infinity>() <=
        1e-11);
}

TEST_CASE("bifurcation point is a(0) times lambda1", "[model]") {
  const Mesh& mesh = mesh256();
  CHECK(bifurcation_point(DiffusionLaw::affine(1.0, 1.0), mesh) ==
        Approx(kPi2).margin(1e-2));
  CHECK(bifurcation_point(DiffusionLaw::affine(0.0, 1.0), mesh) == 0.0);
  CHECK(bifurcation_point(DiffusionLaw::constant(2.0), mesh) ==
        Approx(2.0 * kPi2).margin(2e-2));

  SECTION("homogeneous in the law") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(0.1, 3.0);
    for (int rep = 0; rep < 4; ++rep) {
      const double c = unif(rng);
      const double base = bifurcation_point(DiffusionLaw::affine(1.0, 0.7), mesh);
      const double scaled =
          bifurcation_point(DiffusionLaw::affine(c, 0.7 * c), mesh);
      CHECK(scaled == Approx(c * base).epsilon(1e-12));
    }
  }
}

TEST_CASE("kernel basis matches K = rho/(lambda1+sigma)", "[model]") {
  const Mesh& mesh = mesh256();
  const ProblemParams p1{0.0, 0.0, 1.0, 1.0};
  const KernelBasis kb = kernel_basis(p1, mesh);
  CHECK(kb.K == Approx(0.09200).margin(1e-4));

  const ProblemParams p2{0.0, 0.0, 2.0, 1.0};
  CHECK(kernel_basis(p2, mesh).K == Approx(2.0 * kb.K).epsilon(1e-12));

  SECTION("psi1 satisfies the shifted equation against rho*phi1") {
    const Index N = mesh.node_count;
    SparseMatrix M = laplacian(mesh).matrix();
    SparseMatrix id(N, N);
    id.setIdentity();
    M += p1.sigma * id;
    const Vector r = M * kb.psi1.values() - p1.rho * kb.phi1.values();
    CHECK(r.lpNorm<Eigen::Infinity>() <= 1e-8 * p1.rho);
  }

  SECTION("rho = 0 is rejected") {
    CHECK_THROWS_AS(kernel_basis(ProblemParams{0.0, 0.0, 0.0, 1.0}, mesh),
                    std::invalid_argument);
  }
}

TEST_CASE("direction threshold matches the quadrature oracle", "[model]") {
  const Mesh& mesh = mesh256();
  const double t1 = direction_threshold(ProblemParams{0.0, 0.0, 1.0, 1.0}, mesh);
  CHECK(t1 == Approx(oracles::threshold_exact(0.0, 1.0, 1.0)).margin(1e-3));
  CHECK(t1 == Approx(-1.4684).margin(1e-3));

  const double t2 = direction_threshold(ProblemParams{0.0, 10.0, 2.0, 1.0}, mesh);
  CHECK(t2 == Approx(oracles::threshold_exact(10.0, 2.0, 1.0)).margin(1e-3));
  CHECK(t2 == Approx(0.6167).margin(1e-3));

  SECTION("zero numerator gives exactly zero") {
    const double lambda1 = principal_eigenpair(1.0, 0.0, mesh).value;
    const double sigma = 1.0;
    const ProblemParams p{0.0, lambda1 + sigma, 1.0, sigma};
    CHECK(std::abs(direction_threshold(p, mesh)) <= 1e-12);
  }

  SECTION("deterministic across repeated eigensolves") {
    CHECK(direction_threshold(ProblemParams{0.0, 0.0, 1.0, 1.0}, mesh) == t1);
  }
}

TEST_CASE("classify_direction labels the canonical cases", "[model]") {
  const Mesh& mesh = mesh256();
  const DirectionResult super = classify_direction(
      DiffusionLaw::affine(1.0, 1.0), ProblemParams{0.0, 0.0, 1.0, 1.0}, mesh);
  CHECK(super.label == Direction::supercritical);
  CHECK(super.rho1 > 0.0);
  CHECK(super.rho1 == Approx(oracles::rho1_exact(1.0, 0.0, 1.0, 1.0)).margin(1e-3));

  const DirectionResult sub = classify_direction(
      DiffusionLaw::constant(1.0), ProblemParams{0.0, 10.0, 2.0, 1.0}, mesh);
  CHECK(sub.label == Direction::subcritical);
  CHECK(sub.rho1 < 0.0);

  SECTION("a'(0) = T is marginal") {
    const ProblemParams p{0.0, 10.0, 2.0, 1.0};
    const double T = direction_threshold(p, mesh);
    const DirectionResult m =
        classify_direction(DiffusionLaw::affine(1.0, T), p, mesh);
    CHECK(m.label == Direction::marginal);
  }
}

TEST_CASE("classification agrees with the sign of rho1 off the margin",
          "[model][property]") {
  const Mesh mesh = unit_interval(64);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 8; ++rep) {
    const ProblemParams p{0.0, -2.0 + 13.0 * unif(rng), 0.5 + 2.5 * unif(rng),
                          0.5 + 1.5 * unif(rng)};
    const DiffusionLaw law = DiffusionLaw::affine(1.0, 2.0 * unif(rng));
    const DirectionResult r = classify_direction(law, p, mesh);
    if (r.label == Direction::marginal) continue;
    CHECK((r.rho1 > 0.0) == (r.label == Direction::supercritical));
  }
}

TEST_CASE("h1 margin values", "[model]") {
  const Mesh& mesh = mesh256();
  CHECK(h1_margin(ProblemParams{0.0, 1.0, 1.0, 1.0}, mesh) ==
        Approx(0.88681).margin(1e-4));
  CHECK(h1_margin(ProblemParams{0.0, 20.0, 1.0, 1.0}, mesh) < 0.0);
  CHECK(h1_margin(ProblemParams{0.0, 0.0, 1.0, 1.0}, mesh) == 1.0);
}

TEST_CASE("a priori bound templates per case", "[model]") {
  const Mesh& mesh = mesh256();
  const DiffusionLaw law = DiffusionLaw::affine(1.0, 1.0);

  SECTION("competitive case") {
    const BoundReport r =
        apriori_bounds(ProblemParams{15.0, -1.0, 1.0, 1.0}, law, mesh);
    CHECK(r.bound_case == BoundCase::b_nonpos);
    REQUIRE(r.u_bound.has_value());
    CHECK(*r.u_bound == 15.0);
    REQUIRE(r.v_bound_field.has_value());
    CHECK(r.v_bound_field->max() == Approx(15.0 * 0.113181116).margin(2e-4));

    const ScalarField e = solve_e_sigma(1.0, mesh);
    const Vector expect = 1.0 * 15.0 * e.values();
    CHECK((r.v_bound_field->values() - expect).lpNorm<Eigen::Infinity>() == 0.0);
  }

  SECTION("b = 0 routes to the b <= 0 case") {
    const BoundReport r =
        apriori_bounds(ProblemParams{5.0, 0.0, 1.0, 1.0}, law, mesh);
    CHECK(r.bound_case == BoundCase::b_nonpos);
    CHECK(*r.u_bound == 5.0);
  }

  SECTION("cooperative with smallness condition") {
    const BoundReport r =
        apriori_bounds(ProblemParams{10.0, 1.0, 1.0, 1.0}, law, mesh);
    CHECK(r.bound_case == BoundCase::h1);
    CHECK(*r.u_bound == Approx(11.276).margin(2e-3));
  }

  SECTION("cooperative without it has no closed bound") {
    const BoundReport r =
        apriori_bounds(ProblemParams{10.0, 10.0, 2.0, 1.0}, law, mesh);
    CHECK(r.bound_case == BoundCase::h2_probe);
    CHECK_FALSE(r.u_bound.has_value());
    CHECK_FALSE(r.v_bound_field.has_value());
  }
}

TEST_CASE("nonexistence thresholds", "[model]") {
  const Mesh& mesh = mesh256();
  CHECK(nonexistence_threshold(DiffusionLaw::affine(1.0, 1.0), mesh,
                               BoundCase::b_nonpos) == Approx(kPi2).margin(1e-2));
  CHECK(nonexistence_threshold(DiffusionLaw::affine(2.0, 1.0), mesh,
                               BoundCase::b_nonpos) ==
        Approx(2.0 * kPi2).margin(2e-2));
  CHECK(nonexistence_threshold(DiffusionLaw::affine(1.0, 1.0), mesh,
                               BoundCase::h1) == 0.0);
  CHECK_THROWS_AS(nonexistence_threshold(DiffusionLaw::power(1.0, 1.0, 2.0),
                                         mesh, BoundCase::h2_probe),
                  std::invalid_argument);
}

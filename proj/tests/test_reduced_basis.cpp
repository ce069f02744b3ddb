#include "helpers.hpp"

#include "optsens/reduced_basis.hpp"

#include <doctest.h>
#include <Eigen/Eigenvalues>

#include <sstream>

using namespace optsens;
using testing::thermal_block;

namespace {

const Model& model() { return thermal_block(17); }

const SensorLibrary& library() {
  static const SensorLibrary lib = build_library(9, 0.05, 0.95, 0.04, model());
  return lib;
}

/// Shared 7x7 build; every test below reads it only.
const RBBuildResult& desk_rb() {
  static const RBBuildResult result = [] {
    RBBuildResult r = build_rb(model(), sample_hyper_grid(model().domain, 7, true), {0.01, 120});
    r.space.attach_library(library());
    return r;
  }();
  return result;
}

double true_relative_error(const RBSpace& rb, const Vector& theta, const Vector& m) {
  const Vector truth = solve_forward(model(), theta, m);
  const Vector approx = rb.lift(rb.rb_solve(theta, m));
  return testing::x_norm(model(), truth - approx) / testing::x_norm(model(), truth);
}

}  // namespace

TEST_CASE("single training point is reproduced exactly") {
  const Vector theta = Vector::Constant(2, 0.7);
  const RBBuildResult r = build_rb(model(), {theta}, {0.01, 10});
  CHECK(r.space.size() <= 4);
  CHECK(r.certificate.eps_max < 1e-6);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) {
    const Vector m = testing::random_vector(rng, 4);
    const Vector truth = solve_forward(model(), theta, m);
    CHECK(testing::x_norm(model(), truth - r.space.lift(r.space.rb_solve(theta, m))) <=
          1e-8 * testing::x_norm(model(), truth));
    CHECK(*r.space.error_estimate(theta, m) <= 1e-6);
  }
}

TEST_CASE("certified build on a 7x7 grid") {
  const RBBuildResult& r = desk_rb();
  const auto grid = sample_hyper_grid(model().domain, 7, true);
  REQUIRE(r.certificate.thetas.size() == grid.size());
  CHECK(r.certificate.eps_max <= 0.01);
  std::mt19937_64 rng(2);
  for (std::size_t t = 0; t < grid.size(); ++t) {
    CHECK(r.certificate.eps_theta[static_cast<Index>(t)] <= 0.01);
    for (int i = 0; i < 3; ++i) {
      const Vector m = testing::random_vector(rng, 4);
      CHECK(true_relative_error(r.space, grid[t], m) <= r.certificate.eps_theta[static_cast<Index>(t)] + 1e-12);
    }
  }
  MESSAGE("basis size " << r.space.size());
}

TEST_CASE("basis orthonormality and reduced operators") {
  const RBSpace& rb = desk_rb().space;
  const Matrix& v = rb.basis();
  CHECK((v.transpose() * model().gram_x * v - Matrix::Identity(rb.size(), rb.size())).norm() < 1e-10);
  for (std::size_t q = 0; q < model().stiffness.size(); ++q) {
    const Matrix direct = v.transpose() * model().stiffness[q] * v;
    CHECK((direct - rb.reduced_stiffness()[q]).norm() <= 1e-12 * std::max(1.0, direct.norm()));
  }
  const Matrix loads = v.transpose() * model().loads;
  CHECK((loads - rb.reduced_loads()).norm() <= 1e-12 * loads.norm());
  const Matrix sensors = library().functionals * v;
  CHECK((sensors - rb.library_projection()).norm() <= 1e-12 * sensors.norm());
}

TEST_CASE("reduced solve") {
  const RBSpace& rb = desk_rb().space;
  std::mt19937_64 rng(3);
  const Vector theta = testing::random_theta(rng, model().domain);
  CHECK(rb.rb_solve(theta, Vector::Zero(4)).norm() == 0.0);
  const Vector m1 = testing::random_vector(rng, 4);
  const Vector m2 = testing::random_vector(rng, 4);
  const Vector combined = rb.rb_solve(theta, 2.0 * m1 - 3.0 * m2);
  const Vector expected = 2.0 * rb.rb_solve(theta, m1) - 3.0 * rb.rb_solve(theta, m2);
  CHECK((combined - expected).norm() <= 1e-12 * expected.norm());
  CHECK_THROWS_AS((void)rb.rb_solve(theta, Vector::Zero(3)), Error);
  CHECK_THROWS_AS((void)rb.rb_solve(Vector::Constant(2, 20.0), m1), Error);
}

TEST_CASE("error estimate is rigorous") {
  const RBSpace& rb = desk_rb().space;
  std::mt19937_64 rng(4);
  double worst_effectivity = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vector theta = testing::random_theta(rng, model().domain);
    const Vector m = testing::random_vector(rng, 4);
    const auto estimate = rb.error_estimate(theta, m);
    REQUIRE(estimate.has_value());
    const double truth = true_relative_error(rb, theta, m);
    CHECK(*estimate >= truth - 1e-12);
    CHECK(rb.relative_error_bound(theta) >= *estimate - 1e-12);
    if (truth > 0.0) worst_effectivity = std::max(worst_effectivity, *estimate / truth);
  }
  MESSAGE("largest effectivity " << worst_effectivity);
}

TEST_CASE("reduced observability") {
  const RBSpace& rb = desk_rb().space;
  std::mt19937_64 rng(5);
  SUBCASE("exact at a snapshot-exact hyper-parameter") {
    const Vector theta = Vector::Constant(2, 2.0);
    RBBuildResult exact = build_rb(model(), {theta}, {0.01, 10});
    exact.space.attach_library(library());
    const ObservationOperator op(library(), testing::random_indices(rng, library().size(), 6));
    CHECK(exact.space.beta_rb(theta, op).beta ==
          doctest::Approx(observability_beta(model(), theta, op).beta).epsilon(1e-8));
  }
  SUBCASE("certified lower bound on the truth value") {
    for (int t = 0; t < 20; ++t) {
      const Vector theta = testing::random_theta(rng, model().domain);
      const ObservationOperator op(library(), testing::random_indices(rng, library().size(), 2 + t % 10));
      const double eps = rb.relative_error_bound(theta);
      REQUIRE(eps < 1.0);
      const double bound = rb_beta_lower_bound(rb.beta_rb(theta, op).beta, eps, gamma_L(op, model()));
      CHECK(observability_beta(model(), theta, op).beta >= bound - 1e-10);
    }
  }
  SUBCASE("library must be attached") {
    const RBBuildResult bare = build_rb(model(), {Vector::Constant(2, 1.0)}, {0.01, 10});
    const ObservationOperator op(library(), {0});
    CHECK_THROWS_AS((void)bare.space.beta_rb(Vector::Constant(2, 1.0), op), Error);
  }
}

TEST_CASE("coercivity floor is a lower bound") {
  const Model& small = thermal_block(9);
  const RBSpace rb(small, reference_coercivity(small));
  const Matrix x = Matrix(small.gram_x);
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const Vector theta = testing::random_theta(rng, small.domain);
    const Matrix a = Matrix(small.stiffness_at(theta));
    const Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> eig(a, x);
    CHECK(rb.coercivity_lower_bound(theta) <= eig.eigenvalues().minCoeff());
    CHECK(rb.coercivity_lower_bound(theta) > 0.0);
  }
}

TEST_CASE("greedy history is non-increasing") {
  const auto& history = desk_rb().history;
  REQUIRE(history.size() >= 2);
  for (std::size_t i = 1; i < history.size(); ++i) CHECK(history[i] <= history[i - 1] * (1.0 + 1e-12));
}

TEST_CASE("artifact round trip") {
  const RBSpace& rb = desk_rb().space;
  std::stringstream buffer;
  rb.save(buffer, "abc123");
  CHECK(buffer.str().rfind(kRBSpaceHeader, 0) == 0);
  std::string hash;
  RBSpace loaded = RBSpace::load(buffer, hash);
  CHECK(hash == "abc123");
  CHECK(loaded.size() == rb.size());
  loaded.attach_library(library());
  std::mt19937_64 rng(7);
  const Vector theta = testing::random_theta(rng, model().domain);
  const Vector m = testing::random_vector(rng, 4);
  CHECK((loaded.rb_solve(theta, m) - rb.rb_solve(theta, m)).norm() == 0.0);
  CHECK(loaded.relative_error_bound(theta) == rb.relative_error_bound(theta));
  const ObservationOperator op(library(), {3, 17, 40});
  CHECK(loaded.beta_rb(theta, op).beta == rb.beta_rb(theta, op).beta);

  std::stringstream bad("RBSPACE-v0\n");
  CHECK_THROWS_AS((void)RBSpace::load(bad, hash), Error);
}

TEST_CASE("build options") {
  const std::vector<Vector> grid = sample_hyper_grid(model().domain, 3, true);
  CHECK_NOTHROW((void)build_rb(model(), grid, {0.99, 120}));
  CHECK_THROWS_AS((void)build_rb(model(), grid, {1.0, 120}), Error);
  CHECK_THROWS_AS((void)build_rb(model(), grid, {0.0, 120}), Error);
  CHECK_THROWS_AS((void)build_rb(model(), {}, {0.01, 120}), Error);
  CHECK_THROWS_AS((void)build_rb(model(), sample_hyper_grid(model().domain, 7, true), {1e-6, 3}), CertificateError);
}

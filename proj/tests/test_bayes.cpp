#include "helpers.hpp"

#include "optsens/bayes.hpp"
#include "optsens/observability.hpp"

#include <doctest.h>
#include <Eigen/Eigenvalues>

using namespace optsens;
using testing::thermal_block;

namespace {

const SensorLibrary& library() {
  static const SensorLibrary lib = build_library(9, 0.05, 0.95, 0.04, thermal_block(17));
  return lib;
}

struct Setup {
  Vector theta;
  ObservationOperator op;
  Matrix ptg;
};

Setup random_setup(std::mt19937_64& rng, Index k) {
  const Model& model = thermal_block(17);
  Setup s;
  s.theta = testing::random_theta(rng, model.domain);
  s.op = ObservationOperator(library(), testing::random_indices(rng, library().size(), k));
  s.ptg = assemble_ptg(model, s.theta, s.op);
  return s;
}

GaussianPrior random_prior(std::mt19937_64& rng) {
  return make_prior(testing::random_vector(rng, 4), testing::random_spd(rng, 4) / 4.0);
}

}  // namespace

TEST_CASE("prior invariants") {
  std::mt19937_64 rng(1);
  const GaussianPrior prior = random_prior(rng);
  CHECK((prior.cov * prior.cov_inv - Matrix::Identity(4, 4)).norm() < 1e-12);
  for (int i = 0; i < 100; ++i) {
    const Vector m = testing::random_vector(rng, 4);
    CHECK(m.norm() <= prior.norm_equiv * prior.norm(m) * (1.0 + 1e-12));
  }
  CHECK(testing::default_prior().norm_equiv == doctest::Approx(1.0));
  Matrix bad = Matrix::Identity(4, 4);
  bad(2, 2) = 0.0;
  CHECK_THROWS_AS((void)make_prior(Vector::Zero(4), bad), Error);
  CHECK_THROWS_AS((void)make_prior(Vector::Zero(3), Matrix::Identity(4, 4)), Error);
}

TEST_CASE("parameter-to-observable matrix") {
  const Model& model = thermal_block(17);
  std::mt19937_64 rng(2);
  const Setup s = random_setup(rng, 5);
  for (Index i = 0; i < 4; ++i) {
    const Vector col = s.op.observe(solve_forward(model, s.theta, Vector::Unit(4, i)));
    CHECK((s.ptg.col(i) - col).norm() <= 1e-12 * col.norm());
    CHECK(s.ptg.col(i).norm() > 0.0);
  }
  for (int trial = 0; trial < 5; ++trial) {
    const Vector m = testing::random_vector(rng, 4);
    const Vector direct = s.op.observe(solve_forward(model, s.theta, m));
    CHECK((s.ptg * m - direct).norm() <= 1e-10 * direct.norm());
  }
  CHECK(kernel_subspace(model, s.theta).kernel_dim() == 0);
}

TEST_CASE("posterior closed form") {
  std::mt19937_64 rng(3);
  const GaussianPrior prior = random_prior(rng);
  const Setup s = random_setup(rng, 6);
  const double sigma = 0.01;

  SUBCASE("data explained by the prior mean") {
    const PosteriorGaussian post = posterior(s.ptg, s.op, sigma, prior, s.ptg * prior.mean);
    CHECK((post.mean - prior.mean).norm() <= 1e-10 * prior.mean.norm());
  }
  SUBCASE("uninformative data") {
    const PosteriorGaussian post = posterior(s.ptg, s.op, 1e6, prior, Vector::Zero(6));
    CHECK((post.cov - prior.cov).norm() <= 1e-6 * prior.cov.norm());
  }
  SUBCASE("eigen-structure") {
    const PosteriorGaussian post = posterior(s.ptg, s.op, sigma, prior, testing::random_vector(rng, 6));
    CHECK((post.eigvecs.transpose() * post.eigvecs - Matrix::Identity(4, 4)).norm() < 1e-12);
    for (Index i = 0; i < 4; ++i) {
      CHECK((post.cov * post.eigvecs.col(i) - post.eigvals[i] * post.eigvecs.col(i)).norm() < 1e-10);
    }
    CHECK(post.trace == doctest::Approx(post.eigvals.sum()).epsilon(1e-12));
    CHECK(post.trace == doctest::Approx(post.cov.trace()).epsilon(1e-12));
    const double prior_max = Eigen::SelfAdjointEigenSolver<Matrix>(prior.cov).eigenvalues().maxCoeff();
    CHECK(post.eigvals.minCoeff() > 0.0);
    CHECK(post.eigvals.maxCoeff() <= prior_max * (1.0 + 1e-12));
    const Matrix rebuilt = post.eigvecs * post.eigvals.asDiagonal() * post.eigvecs.transpose();
    CHECK((rebuilt - post.cov).norm() <= 1e-10 * post.cov.norm());
  }
  SUBCASE("mean is affine in the data") {
    const Vector d1 = testing::random_vector(rng, 6);
    const Vector d2 = testing::random_vector(rng, 6);
    const double a = 0.3;
    const Vector mix = posterior(s.ptg, s.op, sigma, prior, a * d1 + (1 - a) * d2).mean;
    const Vector expected =
        a * posterior(s.ptg, s.op, sigma, prior, d1).mean + (1 - a) * posterior(s.ptg, s.op, sigma, prior, d2).mean;
    CHECK((mix - expected).norm() <= 1e-10 * expected.norm());
  }
}

TEST_CASE("scalar posterior variance") {
  const double g = 1.7;
  const double s = 0.4;
  const double sigma0 = 1.3;
  const double sigma = 0.2;
  const ObservationOperator op({0}, RowSparseMatrix(1, 1), Matrix::Constant(1, 1, s));
  const GaussianPrior prior = make_prior(Vector::Zero(1), Matrix::Constant(1, 1, sigma0 * sigma0));
  const PosteriorGaussian post = posterior(Matrix::Constant(1, 1, g), op, sigma, prior, Vector::Constant(1, 0.5));
  const double expected = 1.0 / (g * g / (sigma * sigma * s) + 1.0 / (sigma0 * sigma0));
  CHECK(post.cov(0, 0) == doctest::Approx(expected).epsilon(1e-12));
  const double expected_mean = expected * (g * 0.5 / (sigma * sigma * s));
  CHECK(post.mean[0] == doctest::Approx(expected_mean).epsilon(1e-12));
}

TEST_CASE("MAP objective") {
  std::mt19937_64 rng(4);
  const GaussianPrior prior = random_prior(rng);
  const Setup s = random_setup(rng, 5);
  const double sigma = 0.05;
  const Vector d = testing::random_vector(rng, 5);
  const PosteriorGaussian post = posterior(s.ptg, s.op, sigma, prior, d);

  // Central-difference gradient at the posterior mean.
  Vector fd(4);
  const double h = 1e-6;
  for (Index i = 0; i < 4; ++i) {
    const Vector e = Vector::Unit(4, i) * h;
    fd[i] = (map_objective(post.mean + e, s.ptg, s.op, sigma, prior, d) -
             map_objective(post.mean - e, s.ptg, s.op, sigma, prior, d)) /
            (2 * h);
  }
  const double scale = map_objective(prior.mean, s.ptg, s.op, sigma, prior, d) + 1.0;
  CHECK(fd.norm() < 1e-6 * scale);
  CHECK(map_gradient(post.mean, s.ptg, s.op, sigma, prior, d).norm() < 1e-8 * scale);

  const Vector m = testing::random_vector(rng, 4);
  for (Index i = 0; i < 4; ++i) {
    const Vector e = Vector::Unit(4, i) * 1e-5;
    const double fdi = (map_objective(m + e, s.ptg, s.op, sigma, prior, d) -
                        map_objective(m - e, s.ptg, s.op, sigma, prior, d)) /
                       2e-5;
    CHECK(map_gradient(m, s.ptg, s.op, sigma, prior, d)[i] == doctest::Approx(fdi).epsilon(1e-6));
  }

  CHECK(std::abs(map_objective(prior.mean, s.ptg, s.op, sigma, prior, s.ptg * prior.mean)) < 1e-20);

  // Exactly quadratic along a line: constant second differences.
  const Vector dir = testing::random_vector(rng, 4);
  auto f = [&](double t) { return map_objective(m + t * dir, s.ptg, s.op, sigma, prior, d); };
  const double second1 = f(1.0) - 2 * f(0.0) + f(-1.0);
  const double second2 = f(3.0) - 2 * f(2.0) + f(1.0);
  CHECK(second1 == doctest::Approx(second2).epsilon(1e-9));
}

TEST_CASE("stability coefficient") {
  CHECK(stability_coefficient(0.0, 0.5, 1.0, 1.0, 1.0) == doctest::Approx(2.0));
  double previous = std::numeric_limits<double>::infinity();
  for (double beta = 0.2; beta <= 1.0; beta += 0.05) {
    const double c = stability_coefficient(beta, 0.7, 2.0, 1.0, 0.1);
    CHECK(c < previous);
    previous = c;
  }
  const double beta = 0.4;
  const double eta = 0.8;
  const double limit = (1 + eta * eta) / (beta * beta * eta * eta);
  CHECK(stability_coefficient(beta, eta, 3.0, 1.0, 1e-8) == doctest::Approx(limit).epsilon(1e-4));
  CHECK_THROWS_AS((void)stability_coefficient(0.1, 0.1, 0.1, 1.0, 0.0), Error);
}

TEST_CASE("two-data stability inequality") {
  const Model& model = thermal_block(17);
  std::mt19937_64 rng(5);
  const GaussianPrior prior = testing::default_prior();
  const double sigma = 0.01;
  {
    const Setup s = random_setup(rng, 6);
    const Vector d = testing::random_vector(rng, 6);
    const StabilityReport same = stability_inequality_check(model, s.theta, s.op, sigma, prior, d, d);
    CHECK(same.lhs == 0.0);
    CHECK(same.rhs == 0.0);
  }
  for (int t = 0; t < 5; ++t) {
    const Setup s = random_setup(rng, 3 + t);
    for (int pair = 0; pair < 10; ++pair) {
      const Vector d1 = testing::random_vector(rng, s.op.size());
      const Vector d2 = testing::random_vector(rng, s.op.size());
      const StabilityReport r = stability_inequality_check(model, s.theta, s.op, sigma, prior, d1, d2);
      CHECK(r.ratio <= 1.0 + 1e-8);
      const Vector shift = testing::random_vector(rng, s.op.size());
      const StabilityReport shifted =
          stability_inequality_check(model, s.theta, s.op, sigma, prior, d1 + shift, d2 + shift);
      CHECK(shifted.ratio == doctest::Approx(r.ratio).epsilon(1e-8));
    }
  }
}

TEST_CASE("adding a sensor never increases the posterior trace (uncorrelated noise)") {
  const Model& model = thermal_block(17);
  const SensorLibrary lib = build_library(9, 0.05, 0.95, 0.04, model, NoiseCovariance::identity);
  std::mt19937_64 rng(6);
  const GaussianPrior prior = testing::default_prior();
  for (int t = 0; t < 5; ++t) {
    const Vector theta = testing::random_theta(rng, model.domain);
    for (int e = 0; e < 4; ++e) {
      auto idx = testing::random_indices(rng, lib.size(), 4);
      const ObservationOperator base(lib, std::vector<Index>(idx.begin(), idx.begin() + 3));
      const ObservationOperator extended(lib, idx);
      const double before = posterior_covariance(assemble_ptg(model, theta, base), base, 0.01, prior).trace();
      const double after = posterior_covariance(assemble_ptg(model, theta, extended), extended, 0.01, prior).trace();
      CHECK(after <= before * (1.0 + 1e-12));
    }
  }
}

#include "helpers.hpp"

#include "optsens/linalg.hpp"
#include "optsens/model.hpp"

#include <doctest.h>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

using namespace optsens;
using testing::thermal_block;

namespace {

// Closed-form Q1 element matrices on a square, nodes counter-clockwise from the lower left.
Matrix q1_stiffness() {
  Matrix k(4, 4);
  k << 4, -1, -2, -1, -1, 4, -1, -2, -2, -1, 4, -1, -1, -2, -1, 4;
  return k / 6.0;
}

Matrix q1_mass(double h) {
  Matrix m(4, 4);
  m << 4, 2, 1, 2, 2, 4, 2, 1, 1, 2, 4, 2, 2, 1, 2, 4;
  return m * h * h / 36.0;
}

// Dense free-dof matrix of sum_e w(e) * element, with w from the element centroid height.
Matrix assemble_dense(const Model& model, const Matrix& element, const std::function<double(double)>& weight) {
  const Index n = model.grid.nodes_per_side;
  const double h = model.grid.spacing();
  Matrix a = Matrix::Zero(model.n_dof(), model.n_dof());
  for (Index j = 0; j + 1 < n; ++j) {
    for (Index i = 0; i + 1 < n; ++i) {
      const std::array<Index, 4> nodes{j * n + i, j * n + i + 1, (j + 1) * n + i + 1, (j + 1) * n + i};
      const double w = weight((static_cast<double>(j) + 0.5) * h);
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
          const Index dr = model.node_to_dof[static_cast<std::size_t>(nodes[static_cast<std::size_t>(r)])];
          const Index dc = model.node_to_dof[static_cast<std::size_t>(nodes[static_cast<std::size_t>(c)])];
          if (dr >= 0 && dc >= 0) a(dr, dc) += w * element(r, c);
        }
      }
    }
  }
  return a;
}

Vector theta2(double a, double b) { return Vector{{a, b}}; }

}  // namespace

TEST_CASE("mesh too coarse for three strips is rejected") {
  ThermalBlockConfig config;
  config.mesh_n = 3;
  CHECK_THROWS_AS((void)assemble_thermal_block(config), Error);
  config.mesh_n = 2;
  CHECK_THROWS_AS((void)assemble_thermal_block(config), Error);
}

TEST_CASE("stiffness components sum to the plain Laplace stiffness") {
  ThermalBlockConfig config;
  config.mesh_n = 4;
  const Model model = assemble_thermal_block(config);
  REQUIRE(model.stiffness.size() == 3);
  Matrix sum = Matrix::Zero(model.n_dof(), model.n_dof());
  for (const auto& a : model.stiffness) sum += Matrix(a);
  const Matrix laplace = assemble_dense(model, q1_stiffness(), [](double) { return 1.0; });
  CHECK((sum - laplace).norm() <= 1e-13 * laplace.norm());
  CHECK((Matrix(model.stiffness_at(theta2(1.0, 1.0))) - laplace).norm() <= 1e-13 * laplace.norm());
}

TEST_CASE("state Gram is the H1 Gram on the free dofs") {
  const Model& model = thermal_block(9);
  const Matrix expected = assemble_dense(model, q1_stiffness(), [](double) { return 1.0; }) +
                          assemble_dense(model, q1_mass(model.grid.spacing()), [](double) { return 1.0; });
  CHECK((Matrix(model.gram_x) - expected).norm() <= 1e-13 * expected.norm());
}

TEST_CASE("affine stiffness matches variable-conductivity assembly") {
  const Model& model = thermal_block(9);
  const Vector theta = theta2(0.3, 7.0);
  const Matrix expected = assemble_dense(model, q1_stiffness(), [&](double x2) {
    return x2 < 1.0 / 3.0 ? theta[0] : (x2 < 2.0 / 3.0 ? theta[1] : 1.0);
  });
  CHECK((Matrix(model.stiffness_at(theta)) - expected).norm() <= 1e-13 * expected.norm());
  Matrix summed = Matrix::Zero(model.n_dof(), model.n_dof());
  for (std::size_t q = 0; q < model.stiffness.size(); ++q) {
    summed += model.coefficients[q].evaluate(theta) * Matrix(model.stiffness[q]);
  }
  CHECK((summed - Matrix(model.stiffness_at(theta))).norm() <= 1e-14 * summed.norm());
}

TEST_CASE("Legendre loads integrate to the edge moments") {
  const Model& model = thermal_block(17);
  REQUIRE(model.param_dim() == 4);
  CHECK(model.loads.col(0).sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(model.loads.col(1).sum()) < 1e-14);
  CHECK(std::abs(model.loads.col(2).sum()) < 1e-14);
  CHECK(std::abs(model.loads.col(3).sum()) < 1e-14);
}

TEST_CASE("inflow load of a flux equals its edge integral against each hat function") {
  const Model& model = thermal_block(5);
  const Vector load = assemble_inflow_load(model, [](double x) { return x * x * x; });
  // Exact integral of x^3 against the hat at node i (spacing h) on the bottom edge.
  const double h = model.grid.spacing();
  for (Index i = 0; i < 5; ++i) {
    const double xi = static_cast<double>(i) * h;
    auto moment = [&](double a, double b, bool rising) {
      // int_a^b x^3 * phi(x) dx with phi linear from 0 to 1 (rising) or 1 to 0.
      auto antiderivative = [&](double x) {
        const double t4 = x * x * x * x / 4.0;
        const double t5 = x * x * x * x * x / 5.0;
        return rising ? (t5 - a * t4) / h : (b * t4 - t5) / h;
      };
      return antiderivative(b) - antiderivative(a);
    };
    double expected = 0.0;
    if (i > 0) expected += moment(xi - h, xi, true);
    if (i < 4) expected += moment(xi, xi + h, false);
    const Index dof = model.node_to_dof[static_cast<std::size_t>(model.grid.node(i, 0))];
    CHECK(load[dof] == doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("Legendre polynomials") {
  CHECK(legendre(0, 0.7) == 1.0);
  CHECK(legendre(1, -1.0) == -1.0);
  CHECK(legendre(3, 0.5) == doctest::Approx(-0.4375).epsilon(1e-15));
  CHECK(legendre(2, 0.3) == doctest::Approx(0.5 * (3 * 0.09 - 1)).epsilon(1e-15));
  CHECK_THROWS_AS((void)legendre(4, 0.1), Error);
}

TEST_CASE("forward solve: zero parameter gives zero state, linearity, residual") {
  const Model& model = thermal_block(17);
  const Vector theta = theta2(0.4, 3.0);
  CHECK(solve_forward(model, theta, Vector::Zero(4)).norm() == 0.0);
  const Vector m{{0.3, -1.2, 0.7, 2.0}};
  const Vector u = solve_forward(model, theta, m);
  const Vector u2 = solve_forward(model, theta, 2.0 * m);
  CHECK((u2 - 2.0 * u).norm() <= 1e-14 * u2.norm());
  const Vector rhs = model.loads * m;
  CHECK((model.stiffness_at(theta) * u - rhs).norm() <= 1e-10 * rhs.norm());
}

TEST_CASE("Galerkin residual is small for random hyper-parameters") {
  const Model& model = thermal_block(33);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector theta = testing::random_theta(rng, model.domain);
    const Vector m = testing::random_vector(rng, 4);
    const ForwardSolver solver(model, theta);
    const Vector u = solver.solve(m);
    CHECK(solver.residual(u, m).norm() <= 1e-10 * (model.loads * m).norm());
  }
}

TEST_CASE("parameter-to-state matrix columns are unit-parameter states") {
  const Model& model = thermal_block(17);
  const Vector theta = theta2(2.0, 0.5);
  const Matrix states = parameter_to_state_matrix(model, theta);
  REQUIRE(states.cols() == 4);
  for (Index i = 0; i < 4; ++i) {
    const Vector u = solve_forward(model, theta, Vector::Unit(4, i));
    CHECK((states.col(i) - u).norm() <= 1e-13 * u.norm());
  }
  const Vector m{{1.0, 2.0, -3.0, 0.5}};
  CHECK((states * m - solve_forward(model, theta, m)).norm() <= 1e-12 * (states * m).norm());
}

TEST_CASE("states scale inversely with a common conductivity when nothing is pinned") {
  const Model& model = thermal_block(17, -1);
  REQUIRE(model.domain.dim() == 3);
  const Matrix u1 = parameter_to_state_matrix(model, Vector::Constant(3, 1.0));
  const Matrix u2 = parameter_to_state_matrix(model, Vector::Constant(3, 2.0));
  CHECK((u2 - 0.5 * u1).norm() <= 1e-12 * u1.norm());
}

TEST_CASE("Dirichlet dofs are excluded and zero in the nodal state") {
  const Model& model = thermal_block(9);
  CHECK(model.n_dof() == 9 * 8);
  const Vector nodal = model.to_nodal(solve_forward(model, theta2(1.0, 1.0), Vector::Unit(4, 0)));
  for (Index i = 0; i < 9; ++i) CHECK(nodal[model.grid.node(i, 8)] == 0.0);
}

TEST_CASE("unit inflow at uniform conductivity reproduces 1 - x2 exactly") {
  for (Index n : {17, 33, 65}) {
    const Model& model = thermal_block(n);
    const Vector u = solve_forward(model, theta2(1.0, 1.0), Vector::Unit(4, 0));
    CHECK(l2_error(model, u, [](double, double x2) { return 1.0 - x2; }) < 1e-12);
  }
}

TEST_CASE("manufactured harmonic solution converges at second order in L2") {
  // u = cos(pi x1) sinh(pi (1 - x2)) is harmonic, vanishes on top, is insulated
  // on the sides and has inflow flux pi cosh(pi) cos(pi x1).
  const double pi = std::numbers::pi;
  auto exact = [&](double x1, double x2) { return std::cos(pi * x1) * std::sinh(pi * (1.0 - x2)); };
  std::vector<double> errors;
  for (Index n : {17, 33, 65}) {
    const Model& model = thermal_block(n);
    const Vector load = assemble_inflow_load(model, [&](double x1) { return pi * std::cosh(pi) * std::cos(pi * x1); });
    const SparseCholesky factor(model.stiffness_at(theta2(1.0, 1.0)));
    errors.push_back(l2_error(model, factor.solve(load), exact));
  }
  for (std::size_t i = 1; i < errors.size(); ++i) {
    const double rate = std::log2(errors[i - 1] / errors[i]);
    MESSAGE("L2 rate " << rate);
    CHECK(rate >= 1.95);
  }
}

TEST_CASE("coercivity scales with the smallest conductivity") {
  const Model& model = thermal_block(9);
  const Matrix x = Matrix(model.gram_x);
  auto min_eig = [&](const Vector& theta) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(Matrix(model.stiffness_at(theta)), x);
    return es.eigenvalues().minCoeff();
  };
  const double c0 = min_eig(theta2(1.0, 1.0));
  REQUIRE(c0 > 0.0);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector theta = testing::random_theta(rng, model.domain);
    const double floor = std::min({theta[0], theta[1], 1.0}) * c0;
    double rayleigh = std::numeric_limits<double>::infinity();
    const SparseMatrix a = model.stiffness_at(theta);
    for (int k = 0; k < 20; ++k) {
      const Vector v = testing::random_vector(rng, model.n_dof());
      rayleigh = std::min(rayleigh, v.dot(a * v) / v.dot(model.gram_x * v));
    }
    CHECK(rayleigh >= floor);
    CHECK(min_eig(theta) >= floor * (1.0 - 1e-12));
  }
}

TEST_CASE("hyper-parameter grids") {
  const HyperParameterDomain domain{Vector::Constant(2, 0.1), Vector::Constant(2, 10.0)};
  const auto corners = sample_hyper_grid(domain, 2, true);
  REQUIRE(corners.size() == 4);
  CHECK(corners[0] == theta2(0.1, 0.1));
  CHECK(corners[1] == theta2(10.0, 0.1));
  CHECK(corners[3] == theta2(10.0, 10.0));
  const auto three = sample_hyper_grid(domain, 3, true);
  CHECK(three[4][0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(three[4][1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sample_hyper_grid(domain, 41, true).size() == 1681);
  const auto linear = sample_hyper_grid(domain, 3, false);
  CHECK(linear[1][0] == doctest::Approx(5.05));
  CHECK_THROWS_AS((void)sample_hyper_grid(domain, 1, true), Error);
}

TEST_CASE("theta outside the domain is rejected") {
  const Model& model = thermal_block(9);
  CHECK_THROWS_AS((void)solve_forward(model, theta2(0.05, 1.0), Vector::Unit(4, 0)), Error);
  CHECK_THROWS_AS((void)solve_forward(model, Vector::Constant(3, 1.0), Vector::Unit(4, 0)), Error);
  CHECK(model.domain.contains(theta2(10.0, 0.1)));
}

TEST_CASE("invalid hyper-parameter domains are rejected") {
  CHECK_THROWS_AS(HyperParameterDomain({Vector{{0.0}}, Vector{{1.0}}}).validate(), Error);
  CHECK_THROWS_AS(HyperParameterDomain({Vector{{2.0}}, Vector{{1.0}}}).validate(), Error);
  CHECK_NOTHROW(HyperParameterDomain({Vector{{0.1}}, Vector{{10.0}}}).validate());
}

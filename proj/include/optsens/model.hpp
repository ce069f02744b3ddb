#pragma once

#include "optsens/linalg.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace optsens {

/// Box of admissible hyper-parameters (dimensionless conductivity ratios).
struct HyperParameterDomain {
  Vector lower;
  Vector upper;

  [[nodiscard]] Index dim() const { return lower.size(); }
  /// Throws Error unless 0 < lower < upper componentwise and dim >= 1.
  void validate() const;
  [[nodiscard]] bool contains(const Vector& theta, double rel_tol = 1e-12) const;
};

/// Coefficient of one affine stiffness component: theta[theta_index], or 1 when pinned.
struct AffineCoefficient {
  int theta_index = -1;

  [[nodiscard]] double evaluate(const Vector& theta) const {
    return theta_index < 0 ? 1.0 : theta[theta_index];
  }
};

/// Uniform tensor grid of bilinear elements on the unit square.
struct UniformGrid {
  Index nodes_per_side = 0;

  [[nodiscard]] Index elements_per_side() const { return nodes_per_side - 1; }
  [[nodiscard]] double spacing() const { return 1.0 / static_cast<double>(elements_per_side()); }
  [[nodiscard]] Index node_count() const { return nodes_per_side * nodes_per_side; }
  [[nodiscard]] Index node(Index i, Index j) const { return j * nodes_per_side + i; }
  [[nodiscard]] double x1(Index node) const { return static_cast<double>(node % nodes_per_side) * spacing(); }
  [[nodiscard]] double x2(Index node) const { return static_cast<double>(node / nodes_per_side) * spacing(); }
};

/// Discretized affine forward problem  sum_q c_q(theta) A_q u = B m.
///
/// All matrices and state vectors live on the free (non-Dirichlet) degrees of
/// freedom; to_nodal() re-inserts the homogeneous Dirichlet values.
struct Model {
  UniformGrid grid;
  HyperParameterDomain domain;

  std::vector<Index> dof_to_node;
  std::vector<Index> node_to_dof;  // -1 on Dirichlet nodes
  std::vector<Index> dirichlet_nodes;
  std::vector<int> element_subdomain;

  SparseMatrix gram_x;
  std::shared_ptr<const SparseCholesky> gram_factor;
  std::vector<SparseMatrix> stiffness;
  std::vector<AffineCoefficient> coefficients;
  Matrix loads;  // N x M, column i is b_i

  [[nodiscard]] Index n_dof() const { return gram_x.rows(); }
  [[nodiscard]] Index param_dim() const { return loads.cols(); }
  [[nodiscard]] SparseMatrix stiffness_at(const Vector& theta) const;
  [[nodiscard]] Vector to_nodal(const Vector& state) const;
  /// Maps a nodal matrix (columns over all nodes) onto the free dofs.
  [[nodiscard]] SparseMatrix restrict_columns(const SparseMatrix& nodal) const;
  /// Throws Error if theta has the wrong size or lies outside the domain.
  void check_theta(const Vector& theta) const;
  /// State norm |u|_X.
  [[nodiscard]] double state_norm(const Vector& u) const;
};

/// Horizontal-strip thermal block: subdomain s covers bounds[s-1] < x2 < bounds[s].
struct ThermalBlockConfig {
  Index mesh_n = 65;
  std::vector<double> strip_bounds{1.0 / 3.0, 2.0 / 3.0};
  int pinned_subdomain = 2;  // -1: every conductivity is a free hyper-parameter
  int legendre_max_degree = 3;
  double theta_min = 0.1;
  double theta_max = 10.0;

  [[nodiscard]] int subdomain_count() const { return static_cast<int>(strip_bounds.size()) + 1; }
};

/// Assembles the thermal block: Q1 elements, Dirichlet on top (x2 = 1),
/// Legendre flux on the bottom edge, insulated sides, H1 state inner product.
[[nodiscard]] Model assemble_thermal_block(const ThermalBlockConfig& config);

/// Boundary load vector on the free dofs for an arbitrary inflow flux g(x1).
[[nodiscard]] Vector assemble_inflow_load(const Model& model, const std::function<double(double)>& flux);

/// L2(Omega) error of a discrete state against an exact field, 3x3 Gauss per element.
[[nodiscard]] double l2_error(const Model& model, const Vector& state,
                              const std::function<double(double, double)>& exact);

/// Legendre polynomial of degree 0..3 on [-1, 1].
[[nodiscard]] double legendre(int degree, double t);

/// Tensor grid over the domain; equispaced in log10 when log_scale is set.
[[nodiscard]] std::vector<Vector> sample_hyper_grid(const HyperParameterDomain& domain, Index n_per_dim,
                                                    bool log_scale);

/// Factorization of the stiffness at a fixed theta; solves for any parameter m.
class ForwardSolver {
 public:
  ForwardSolver(const Model& model, const Vector& theta);

  [[nodiscard]] Vector solve(const Vector& m) const;
  /// N x M matrix whose column i is the state for m = e_i.
  [[nodiscard]] Matrix state_matrix() const;
  [[nodiscard]] Vector residual(const Vector& u, const Vector& m) const;

 private:
  const Model* model_;
  SparseMatrix stiffness_;
  SparseCholesky factor_;
};

[[nodiscard]] Vector solve_forward(const Model& model, const Vector& theta, const Vector& m);
[[nodiscard]] Matrix parameter_to_state_matrix(const Model& model, const Vector& theta);

}  // namespace optsens

#pragma once

#include "optsens/linalg.hpp"
#include "optsens/model.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace optsens {

using RowSparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class NoiseCovariance {
  riesz,     // Gram matrix of the sensors' Riesz representations
  identity,  // uncorrelated unit-variance noise
};

struct Point2 {
  double x1 = 0.0;
  double x2 = 0.0;
};

/// Candidate sensors l_k(u) = int_Omega g_k u dx with Gaussian kernels g_k.
///
/// The noise covariance is never stored densely; rows and blocks are formed on
/// demand from Riesz representations r_k = X^{-1} f_k.
struct SensorLibrary {
  std::vector<Point2> centers;
  double std_dev = 0.0;
  Index grid_n = 0;
  RowSparseMatrix functionals;  // N_lib x N, row k is the FE vector f_k
  NoiseCovariance noise = NoiseCovariance::riesz;
  std::shared_ptr<const SparseCholesky> gram_factor;
  bool under_resolved = false;  // std_dev below the element size

  [[nodiscard]] Index size() const { return functionals.rows(); }
  /// N x K matrix of Riesz representations of the given sensors.
  [[nodiscard]] Matrix riesz(std::span<const Index> indices) const;
  /// K x N_lib rows of the noise covariance.
  [[nodiscard]] Matrix noise_cov_rows(std::span<const Index> indices) const;
  /// K x K principal submatrix of the noise covariance.
  [[nodiscard]] Matrix noise_cov_block(std::span<const Index> indices) const;
  /// Diagonal (per-sensor noise variances) of the covariance.
  [[nodiscard]] Vector noise_cov_diagonal() const;
  /// Full N_lib x N_lib covariance; only sensible for small libraries.
  [[nodiscard]] Matrix noise_cov() const;
  /// Applies every library functional to a state (or to each column of a state matrix).
  [[nodiscard]] Matrix apply(const Matrix& states) const { return functionals * states; }
};

/// Gaussian functionals against the nodal Q1 basis (all nodes, Dirichlet included).
/// Integration is exact: the kernel and the basis are both tensor products, so
/// each element integral factors into closed-form 1D erf/exp expressions.
[[nodiscard]] RowSparseMatrix assemble_gaussian_functionals(const UniformGrid& grid, const std::vector<Point2>& centers,
                                                            double std_dev);

/// Library of grid_n^2 sensors centred on a regular grid over [lower, upper]^2.
[[nodiscard]] SensorLibrary build_library(Index grid_n, double lower, double upper, double std_dev,
                                          const Model& model, NoiseCovariance noise = NoiseCovariance::riesz);

/// A selection L = (l_{k_1}, ..., l_{k_K}) with its noise covariance Sigma_L.
/// The default-constructed operator is the empty sentinel: it observes nothing.
class ObservationOperator {
 public:
  ObservationOperator() = default;
  ObservationOperator(const SensorLibrary& library, std::vector<Index> indices);
  /// Synthetic operator from explicit rows and covariance.
  ObservationOperator(std::vector<Index> indices, RowSparseMatrix obs_matrix, Matrix cov);

  [[nodiscard]] Index size() const { return static_cast<Index>(indices_.size()); }
  [[nodiscard]] bool empty() const { return indices_.empty(); }
  [[nodiscard]] const std::vector<Index>& indices() const { return indices_; }
  [[nodiscard]] const RowSparseMatrix& obs_matrix() const { return obs_matrix_; }
  [[nodiscard]] const Matrix& cov() const { return cov_; }
  [[nodiscard]] const Eigen::LLT<Matrix>& cov_chol() const { return cov_chol_; }

  [[nodiscard]] Vector observe(const Vector& u) const;
  /// sqrt(d^T Sigma_L^{-1} d) through the cached factorization.
  [[nodiscard]] double noise_norm(const Vector& d) const;
  /// C^{-1} d with Sigma_L = C C^T, so that |whiten(d)| is the noise norm.
  [[nodiscard]] Matrix whiten(const Matrix& d) const;
  /// Sigma_L^{-1} d.
  [[nodiscard]] Matrix cov_solve(const Matrix& d) const;

 private:
  void validate();

  std::vector<Index> indices_;
  RowSparseMatrix obs_matrix_;
  Matrix cov_;
  Eigen::LLT<Matrix> cov_chol_;
};

/// Operator norm sup |L u|_{Sigma_L^{-1}} / |u|_X.
[[nodiscard]] double gamma_L(const ObservationOperator& op, const Model& model);

/// One draw of N(0, sigma^2 Sigma_L).
[[nodiscard]] Vector sample_noise(const ObservationOperator& op, double sigma, std::uint64_t seed);

}  // namespace optsens

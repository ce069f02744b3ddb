#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <memory>
#include <stdexcept>
#include <string>

namespace optsens {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A linear system expected to be SPD failed to factorize.
class CoercivityError : public Error {
 public:
  using Error::Error;
};

/// Sparse SPD factorization P A P^T = L L^T, shared read-only between users.
class SparseCholesky {
 public:
  explicit SparseCholesky(const SparseMatrix& a);

  [[nodiscard]] Vector solve(const Vector& rhs) const { return llt_.solve(rhs); }
  [[nodiscard]] Matrix solve(const Matrix& rhs) const { return llt_.solve(rhs); }

  /// Returns L^{-1} P r, so that r^T A^{-1} r = |whiten_dual(r)|^2.
  [[nodiscard]] Matrix whiten_dual(const Matrix& r) const;
  /// Returns L^T P u, so that u^T A u = |whiten_primal(u)|^2.
  [[nodiscard]] Matrix whiten_primal(const Matrix& u) const;

  [[nodiscard]] Index size() const { return llt_.rows(); }

 private:
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
};

/// Symmetric part (A + A^T) / 2.
[[nodiscard]] Matrix symmetrize(const Matrix& a);

struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // columns, orthonormal in the metric of the pencil's right matrix
};

/// Eigen-decomposition of a symmetric matrix (symmetrized before solving).
[[nodiscard]] SymmetricEigen symmetric_eigen(const Matrix& a);

/// Generalized problem A v = lambda B v with B SPD; vectors are B-orthonormal.
/// Throws Error if B is not numerically positive definite.
[[nodiscard]] SymmetricEigen generalized_eigen(const Matrix& a, const Matrix& b);

}  // namespace optsens

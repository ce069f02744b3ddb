#include "optsens/linalg.hpp"

namespace optsens {

SparseCholesky::SparseCholesky(const SparseMatrix& a) {
  llt_.compute(a);
  if (llt_.info() != Eigen::Success) {
    throw CoercivityError("sparse Cholesky factorization failed: matrix is not SPD");
  }
}

Matrix SparseCholesky::whiten_dual(const Matrix& r) const {
  Matrix permuted = llt_.permutationP() * r;
  return llt_.matrixL().solve(permuted);
}

Matrix SparseCholesky::whiten_primal(const Matrix& u) const {
  Matrix permuted = llt_.permutationP() * u;
  return llt_.matrixU() * permuted;
}

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

SymmetricEigen symmetric_eigen(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(a));
  if (solver.info() != Eigen::Success) {
    throw Error("symmetric eigensolver did not converge");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

SymmetricEigen generalized_eigen(const Matrix& a, const Matrix& b) {
  // Reduce to standard form with the Cholesky factor of B.
  Eigen::LLT<Matrix> llt(symmetrize(b));
  if (llt.info() != Eigen::Success) {
    throw Error("generalized eigenproblem: right-hand matrix is not positive definite");
  }
  const Matrix l = llt.matrixL();
  Matrix linv_a = l.triangularView<Eigen::Lower>().solve(symmetrize(a));
  Matrix c = l.triangularView<Eigen::Lower>().solve(linv_a.transpose());
  SymmetricEigen std_eig = symmetric_eigen(c);
  Matrix vectors = l.transpose().triangularView<Eigen::Upper>().solve(std_eig.vectors);
  return {std_eig.values, vectors};
}

}  // namespace optsens

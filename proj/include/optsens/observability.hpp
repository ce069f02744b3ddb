#pragma once

#include "optsens/bayes.hpp"
#include "optsens/linalg.hpp"
#include "optsens/model.hpp"
#include "optsens/sensors.hpp"

namespace optsens {

/// Relative singular-value threshold that defines the kernel X_theta.
inline constexpr double kKernelTolerance = 1e-10;

/// Euclidean splitting R^M = X_theta (+) X_theta^perp.
struct SubspaceDecomposition {
  Matrix kernel_basis;      // M x k0
  Matrix complement_basis;  // M x (M - k0)
  Matrix projector;         // onto the complement

  [[nodiscard]] Index kernel_dim() const { return kernel_basis.cols(); }
  [[nodiscard]] Index complement_dim() const { return complement_basis.cols(); }
};

/// Kernel of a linear map given as a (rows x M) matrix: right singular vectors
/// with singular value below tol * sigma_max. Throws Error for the zero map.
[[nodiscard]] SubspaceDecomposition kernel_subspace(const Matrix& map, double tol = kKernelTolerance);
/// Kernel of m -> B_theta m for the model's load matrix.
[[nodiscard]] SubspaceDecomposition kernel_subspace(const Model& model, const Vector& theta,
                                                    double tol = kKernelTolerance);

struct EtaBounds {
  double eta_inf = 0.0;
  double eta_sup = 0.0;
  Matrix subspace;  // M x r basis the ratios were taken over
};

/// Extreme values of |u(m)|_X / |m|_{Sigma_0^{-1}} over span(subspace).
/// state_gram is U^T X U for the parameter-to-state matrix U.
[[nodiscard]] EtaBounds eta_bounds(const Matrix& state_gram, const GaussianPrior& prior, const Matrix& subspace);
[[nodiscard]] EtaBounds eta_bounds(const Model& model, const Vector& theta, const GaussianPrior& prior,
                                   const Matrix& subspace);

struct ObservabilityResult {
  double beta = 0.0;
  Vector minimizer_m;      // unit state norm, in the complement of the kernel
  Vector minimizer_state;  // states * minimizer_m
};

/// Truth states at one hyper-parameter, reused across many observation operators.
struct StateSnapshot {
  Vector theta;
  Matrix states;      // N x M (or n x M in reduced coordinates)
  Matrix state_gram;  // states^T X states
  SubspaceDecomposition decomposition;
};

[[nodiscard]] StateSnapshot make_snapshot(const Model& model, const Vector& theta);

/// beta = inf |L u|_{Sigma_L^{-1}} / |u|_X over the states spanned by `states`
/// restricted to `decomposition`'s complement. ptg = L applied to `states`.
[[nodiscard]] ObservabilityResult observability_beta(const Matrix& states, const Matrix& state_gram,
                                                     const SubspaceDecomposition& decomposition, const Matrix& ptg,
                                                     const ObservationOperator& op);
[[nodiscard]] ObservabilityResult observability_beta(const StateSnapshot& snapshot, const Matrix& ptg,
                                                     const ObservationOperator& op);
[[nodiscard]] ObservabilityResult observability_beta(const Model& model, const Vector& theta,
                                                     const ObservationOperator& op);

/// Observability of the sum space u_{theta1}(m1) + u_{theta2}(m2); the kernel of
/// the stacked map, including cancelling pairs, is removed by an X-weighted SVD.
[[nodiscard]] ObservabilityResult observability_beta_pair(const Model& model, const Vector& theta1,
                                                          const Vector& theta2, const ObservationOperator& op);

struct EigenvalueBoundsReport {
  Vector bounds;           // per posterior eigenvalue
  Vector margins;          // bounds - eigenvalues
  Vector projection_mass;  // |Pi m_lambda_i|^2
  double projection_mass_sum = 0.0;
  double trace_bound = 0.0;
  double trace_margin = 0.0;
};

/// lambda_i <= C^2 / (sigma^-2 beta^2 eta^2 |Pi m_i|^2 + 1) and the summed trace bound.
[[nodiscard]] EigenvalueBoundsReport eigenvalue_bounds_report(const PosteriorGaussian& post, double beta,
                                                              double eta_inf_perp, double norm_equiv, double sigma,
                                                              const SubspaceDecomposition& decomposition);

/// Certified lower bound (1 - eps) beta_R - gamma eps on the truth observability.
[[nodiscard]] double rb_beta_lower_bound(double beta_rb, double eps_theta, double gamma);

}  // namespace optsens

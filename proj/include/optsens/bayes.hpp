#pragma once

#include "optsens/linalg.hpp"
#include "optsens/model.hpp"
#include "optsens/sensors.hpp"

namespace optsens {

/// N(mean, cov) prior on the parameter m.
struct GaussianPrior {
  Vector mean;
  Matrix cov;
  Matrix cov_inv;
  double norm_equiv = 1.0;  // sup |m|_2 / |m|_{cov^{-1}} = sqrt(lambda_max(cov))

  [[nodiscard]] Index dim() const { return mean.size(); }
  [[nodiscard]] double norm(const Vector& m) const { return std::sqrt(m.dot(cov_inv * m)); }
};

/// Throws Error if cov is not SPD or the sizes disagree.
[[nodiscard]] GaussianPrior make_prior(Vector mean, Matrix cov);

struct PosteriorGaussian {
  Vector mean;
  Matrix cov;
  Vector eigvals;  // ascending
  Matrix eigvecs;  // orthonormal columns
  double trace = 0.0;
  Matrix ptg;      // K x M parameter-to-observable matrix
};

/// G = L U_theta, column i is the observation of the state for m = e_i.
[[nodiscard]] Matrix assemble_ptg(const Model& model, const Vector& theta, const ObservationOperator& op);
[[nodiscard]] Matrix assemble_ptg(const ObservationOperator& op, const Matrix& state_matrix);

/// Closed-form Gaussian posterior for d = G m + eta, eta ~ N(0, sigma^2 Sigma_L).
/// Throws Error when the posterior precision is numerically singular.
[[nodiscard]] PosteriorGaussian posterior(const Matrix& ptg, const ObservationOperator& op, double sigma,
                                          const GaussianPrior& prior, const Vector& data);

/// Posterior covariance only; it does not depend on the data.
[[nodiscard]] Matrix posterior_covariance(const Matrix& ptg, const ObservationOperator& op, double sigma,
                                          const GaussianPrior& prior);

/// 1/(2 sigma^2) |G m - d|^2_{Sigma_L^{-1}} + 1/2 |m - m0|^2_{Sigma_0^{-1}}; its minimizer is the MAP point.
[[nodiscard]] double map_objective(const Vector& m, const Matrix& ptg, const ObservationOperator& op, double sigma,
                                   const GaussianPrior& prior, const Vector& data);
[[nodiscard]] Vector map_gradient(const Vector& m, const Matrix& ptg, const ObservationOperator& op, double sigma,
                                  const GaussianPrior& prior, const Vector& data);

/// C = gamma (1 + eta^2) / (sigma^2 + beta^2 eta^2), eta = eta_sup if beta^2 <= sigma^2 else eta_inf.
[[nodiscard]] double stability_coefficient(double beta, double eta_inf, double eta_sup, double gamma, double sigma);

struct StabilityReport {
  double lhs = 0.0;  // |dm|^2_{Sigma_0^{-1}} + |u(dm)|^2_X
  double rhs = 0.0;  // C^2 |dd|^2_{Sigma_L^{-1}}
  double coefficient = 0.0;
  double ratio = 0.0;  // lhs / rhs, 0 when both vanish
};

/// Evaluates both sides of the two-data MAP stability bound at one (theta, L).
[[nodiscard]] StabilityReport stability_inequality_check(const Model& model, const Vector& theta,
                                                         const ObservationOperator& op, double sigma,
                                                         const GaussianPrior& prior, const Vector& d1,
                                                         const Vector& d2);

}  // namespace optsens

#include "optsens/bayes.hpp"

#include "optsens/observability.hpp"

#include <fmt/format.h>

#include <cmath>

namespace optsens {

namespace {

// Above this condition number the posterior precision is treated as singular.
constexpr double kMaxPrecisionCondition = 1e14;

Matrix data_precision(const Matrix& ptg, const ObservationOperator& op, double sigma) {
  if (op.empty()) return Matrix::Zero(ptg.cols(), ptg.cols());
  const Matrix w = op.whiten(ptg);
  return (w.transpose() * w) / (sigma * sigma);
}

void check_shapes(const Matrix& ptg, const ObservationOperator& op, double sigma, const GaussianPrior& prior) {
  if (!(sigma > 0.0)) throw Error("posterior: sigma must be positive");
  if (ptg.cols() != prior.dim()) throw Error("posterior: ptg and prior dimensions disagree");
  if (ptg.rows() != op.size()) throw Error("posterior: ptg rows and sensor count disagree");
}

}  // namespace

GaussianPrior make_prior(Vector mean, Matrix cov) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) throw Error("prior: covariance has wrong shape");
  GaussianPrior prior;
  prior.mean = std::move(mean);
  prior.cov = symmetrize(cov);
  Eigen::LLT<Matrix> llt(prior.cov);
  if (llt.info() != Eigen::Success) throw Error("prior: covariance is not SPD");
  prior.cov_inv = symmetrize(llt.solve(Matrix::Identity(prior.dim(), prior.dim())));
  prior.norm_equiv = std::sqrt(symmetric_eigen(prior.cov).values.maxCoeff());
  return prior;
}

Matrix assemble_ptg(const ObservationOperator& op, const Matrix& state_matrix) {
  if (op.empty()) return Matrix(0, state_matrix.cols());
  return op.obs_matrix() * state_matrix;
}

Matrix assemble_ptg(const Model& model, const Vector& theta, const ObservationOperator& op) {
  return assemble_ptg(op, parameter_to_state_matrix(model, theta));
}

Matrix posterior_covariance(const Matrix& ptg, const ObservationOperator& op, double sigma,
                            const GaussianPrior& prior) {
  check_shapes(ptg, op, sigma, prior);
  const Matrix precision = symmetrize(data_precision(ptg, op, sigma) + prior.cov_inv);
  const Vector ev = symmetric_eigen(precision).values;
  const double cond = ev[ev.size() - 1] / ev[0];
  if (!(ev[0] > 0.0) || cond > kMaxPrecisionCondition) {
    throw Error(fmt::format("posterior: precision matrix is ill-conditioned (condition estimate {:.3e})", cond));
  }
  Eigen::LLT<Matrix> llt(precision);
  return symmetrize(llt.solve(Matrix::Identity(prior.dim(), prior.dim())));
}

PosteriorGaussian posterior(const Matrix& ptg, const ObservationOperator& op, double sigma,
                            const GaussianPrior& prior, const Vector& data) {
  if (data.size() != op.size()) throw Error("posterior: data has wrong length");
  PosteriorGaussian post;
  post.ptg = ptg;
  post.cov = posterior_covariance(ptg, op, sigma, prior);
  Vector rhs = prior.cov_inv * prior.mean;
  if (!op.empty()) rhs += ptg.transpose() * op.cov_solve(data) / (sigma * sigma);
  post.mean = post.cov * rhs;
  const SymmetricEigen eig = symmetric_eigen(post.cov);
  post.eigvals = eig.values;
  post.eigvecs = eig.vectors;
  post.trace = post.cov.trace();
  return post;
}

double map_objective(const Vector& m, const Matrix& ptg, const ObservationOperator& op, double sigma,
                     const GaussianPrior& prior, const Vector& data) {
  double misfit = 0.0;
  if (!op.empty()) {
    const double r = op.noise_norm(ptg * m - data);
    misfit = 0.5 * r * r / (sigma * sigma);
  }
  const Vector dm = m - prior.mean;
  return misfit + 0.5 * dm.dot(prior.cov_inv * dm);
}

Vector map_gradient(const Vector& m, const Matrix& ptg, const ObservationOperator& op, double sigma,
                    const GaussianPrior& prior, const Vector& data) {
  Vector g = prior.cov_inv * (m - prior.mean);
  if (!op.empty()) g += ptg.transpose() * op.cov_solve(ptg * m - data) / (sigma * sigma);
  return g;
}

double stability_coefficient(double beta, double eta_inf, double eta_sup, double gamma, double sigma) {
  if (beta < 0 || eta_inf < 0 || eta_sup < 0 || gamma < 0 || !(sigma > 0)) {
    throw Error("stability_coefficient: inputs must be non-negative and sigma positive");
  }
  const double eta = beta * beta <= sigma * sigma ? eta_sup : eta_inf;
  const double eta2 = eta * eta;
  return gamma * (1.0 + eta2) / (sigma * sigma + beta * beta * eta2);
}

StabilityReport stability_inequality_check(const Model& model, const Vector& theta, const ObservationOperator& op,
                                           double sigma, const GaussianPrior& prior, const Vector& d1,
                                           const Vector& d2) {
  const StateSnapshot snap = make_snapshot(model, theta);
  const Matrix ptg = assemble_ptg(op, snap.states);
  const double beta = observability_beta(snap, ptg, op).beta;
  const EtaBounds eta = eta_bounds(snap.state_gram, prior, snap.decomposition.complement_basis);
  const double gamma = gamma_L(op, model);

  StabilityReport report;
  report.coefficient = stability_coefficient(beta, eta.eta_inf, eta.eta_sup, gamma, sigma);
  const Vector dm = posterior(ptg, op, sigma, prior, d1).mean - posterior(ptg, op, sigma, prior, d2).mean;
  const double dd = op.noise_norm(d1 - d2);
  report.lhs = dm.dot(prior.cov_inv * dm) + dm.dot(snap.state_gram * dm);
  report.rhs = report.coefficient * report.coefficient * dd * dd;
  report.ratio = report.rhs > 0.0 ? report.lhs / report.rhs : (report.lhs > 0.0 ? INFINITY : 0.0);
  return report;
}

}  // namespace optsens

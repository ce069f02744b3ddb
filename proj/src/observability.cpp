#include "optsens/observability.hpp"

#include <fmt/format.h>

#include <cmath>

namespace optsens {

namespace {

// Fixes the sign of an eigenvector so that results do not depend on solver internals.
void normalize_sign(Vector& v) {
  Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v[arg] < 0) v = -v;
}

}  // namespace

SubspaceDecomposition kernel_subspace(const Matrix& map, double tol) {
  if (!(tol > 0.0 && tol < 1.0)) throw Error("kernel_subspace: tolerance must lie in (0, 1)");
  const Index m = map.cols();
  Eigen::JacobiSVD<Matrix> svd(map, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv[0] : 0.0;
  if (!(smax > 0.0)) throw Error("kernel_subspace: the map is identically zero");

  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i) rank += sv[i] >= tol * smax ? 1 : 0;
  const Matrix& v = svd.matrixV();
  SubspaceDecomposition out;
  out.complement_basis = v.leftCols(rank);
  out.kernel_basis = v.rightCols(m - rank);
  out.projector = out.complement_basis * out.complement_basis.transpose();
  return out;
}

SubspaceDecomposition kernel_subspace(const Model& model, const Vector& theta, double tol) {
  model.check_theta(theta);
  // The load map does not depend on theta for the models assembled here.
  return kernel_subspace(model.loads, tol);
}

EtaBounds eta_bounds(const Matrix& state_gram, const GaussianPrior& prior, const Matrix& subspace) {
  if (subspace.cols() == 0) throw Error("eta_bounds: subspace is empty");
  const Matrix a = subspace.transpose() * state_gram * subspace;
  const Matrix b = subspace.transpose() * prior.cov_inv * subspace;
  const SymmetricEigen eig = generalized_eigen(a, b);
  EtaBounds out;
  out.eta_inf = std::sqrt(std::max(0.0, eig.values[0]));
  out.eta_sup = std::sqrt(std::max(0.0, eig.values[eig.values.size() - 1]));
  out.subspace = subspace;
  return out;
}

EtaBounds eta_bounds(const Model& model, const Vector& theta, const GaussianPrior& prior, const Matrix& subspace) {
  const Matrix u = parameter_to_state_matrix(model, theta);
  return eta_bounds(Matrix(u.transpose() * model.gram_x * u), prior, subspace);
}

StateSnapshot make_snapshot(const Model& model, const Vector& theta) {
  StateSnapshot snap;
  snap.theta = theta;
  snap.states = parameter_to_state_matrix(model, theta);
  snap.state_gram = symmetrize(snap.states.transpose() * model.gram_x * snap.states);
  snap.decomposition = kernel_subspace(model, theta);
  return snap;
}

ObservabilityResult observability_beta(const Matrix& states, const Matrix& state_gram,
                                       const SubspaceDecomposition& decomposition, const Matrix& ptg,
                                       const ObservationOperator& op) {
  const Matrix& c = decomposition.complement_basis;
  ObservabilityResult out;
  if (c.cols() == 0) {
    out.minimizer_m = Vector::Zero(states.cols());
    out.minimizer_state = Vector::Zero(states.rows());
    return out;
  }
  const Matrix b = c.transpose() * state_gram * c;
  Matrix a = Matrix::Zero(c.cols(), c.cols());
  if (!op.empty()) {
    if (ptg.rows() != op.size() || ptg.cols() != states.cols()) throw Error("observability_beta: ptg has wrong shape");
    const Matrix wc = op.whiten(ptg * c);
    a = wc.transpose() * wc;
  }
  SymmetricEigen eig;
  try {
    eig = generalized_eigen(a, b);
  } catch (const Error&) {
    throw Error("observability_beta: state Gram is degenerate on the kernel complement");
  }
  out.beta = std::sqrt(std::max(0.0, eig.values[0]));
  Vector m = c * eig.vectors.col(0);
  normalize_sign(m);
  m /= std::sqrt(m.dot(state_gram * m));
  out.minimizer_m = m;
  out.minimizer_state = states * m;
  return out;
}

ObservabilityResult observability_beta(const StateSnapshot& snapshot, const Matrix& ptg,
                                       const ObservationOperator& op) {
  return observability_beta(snapshot.states, snapshot.state_gram, snapshot.decomposition, ptg, op);
}

ObservabilityResult observability_beta(const Model& model, const Vector& theta, const ObservationOperator& op) {
  const StateSnapshot snap = make_snapshot(model, theta);
  return observability_beta(snap, assemble_ptg(op, snap.states), op);
}

ObservabilityResult observability_beta_pair(const Model& model, const Vector& theta1, const Vector& theta2,
                                            const ObservationOperator& op) {
  const Index m = model.param_dim();
  Matrix states(model.n_dof(), 2 * m);
  states.leftCols(m) = parameter_to_state_matrix(model, theta1);
  states.rightCols(m) = parameter_to_state_matrix(model, theta2);
  const SubspaceDecomposition decomposition = kernel_subspace(model.gram_factor->whiten_primal(states));
  const Matrix gram = symmetrize(states.transpose() * model.gram_x * states);
  return observability_beta(states, gram, decomposition, assemble_ptg(op, states), op);
}

EigenvalueBoundsReport eigenvalue_bounds_report(const PosteriorGaussian& post, double beta, double eta_inf_perp,
                                                double norm_equiv, double sigma,
                                                const SubspaceDecomposition& decomposition) {
  const Index m = post.eigvals.size();
  EigenvalueBoundsReport out;
  out.bounds.resize(m);
  out.margins.resize(m);
  out.projection_mass.resize(m);
  const double c2 = norm_equiv * norm_equiv;
  const double gain = beta * beta * eta_inf_perp * eta_inf_perp / (sigma * sigma);
  for (Index i = 0; i < m; ++i) {
    const double mass = (decomposition.projector * post.eigvecs.col(i)).squaredNorm();
    out.projection_mass[i] = mass;
    out.bounds[i] = c2 / (gain * mass + 1.0);
    out.margins[i] = out.bounds[i] - post.eigvals[i];
  }
  out.projection_mass_sum = out.projection_mass.sum();
  out.trace_bound = out.bounds.sum();
  out.trace_margin = out.trace_bound - post.trace;
  return out;
}

double rb_beta_lower_bound(double beta_rb, double eps_theta, double gamma) {
  if (!(eps_theta >= 0.0 && eps_theta < 1.0)) {
    throw Error(fmt::format("rb_beta_lower_bound: eps = {} must lie in [0, 1)", eps_theta));
  }
  return (1.0 - eps_theta) * beta_rb - gamma * eps_theta;
}

}  // namespace optsens

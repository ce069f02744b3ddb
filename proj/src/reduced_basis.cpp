#include "optsens/reduced_basis.hpp"

#include "optsens/parallel.hpp"

#include <fmt/format.h>

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

namespace optsens {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void write_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  out << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ' ';
      out << fmt::format("{:.17g}", m(i, j));
    }
    out << '\n';
  }
}

void expect_token(std::istream& in, const std::string& token) {
  std::string word;
  if (!(in >> word) || word != token) {
    throw Error(fmt::format("RB artifact: expected '{}', found '{}'", token, word));
  }
}

Matrix read_matrix(std::istream& in, const std::string& name) {
  expect_token(in, "matrix");
  expect_token(in, name);
  Index rows = 0;
  Index cols = 0;
  if (!(in >> rows >> cols) || rows < 0 || cols < 0) throw Error("RB artifact: bad matrix shape for " + name);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      if (!(in >> m(i, j))) throw Error("RB artifact: truncated matrix " + name);
    }
  }
  return m;
}

}  // namespace

RBSpace::RBSpace(const Model& model, double coercivity_reference)
    : basis_(model.n_dof(), 0),
      reduced_stiffness_(model.stiffness.size(), Matrix(0, 0)),
      coefficients_(model.coefficients),
      reduced_loads_(0, model.param_dim()),
      param_decomposition_(kernel_subspace(model.loads)),
      domain_(model.domain),
      coercivity_reference_(coercivity_reference) {
  if (!(coercivity_reference > 0.0)) throw Error("RBSpace: coercivity reference must be positive");
  refresh_residual_factor(model);
}

double RBSpace::coercivity_lower_bound(const Vector& theta) const {
  double c = kInf;
  for (const auto& coeff : coefficients_) c = std::min(c, coeff.evaluate(theta));
  return c * coercivity_reference_;
}

bool RBSpace::enrich(const Model& model, const Vector& state) {
  const double input_norm = model.state_norm(state);
  if (!(input_norm > 0.0)) return false;
  Vector v = state;
  for (int pass = 0; pass < 2; ++pass) {
    if (size() > 0) v -= basis_ * (basis_.transpose() * (model.gram_x * v));
  }
  const double norm = model.state_norm(v);
  if (norm <= 1e-12 * input_norm) return false;
  v /= norm;

  basis_.conservativeResize(Eigen::NoChange, size() + 1);
  basis_.col(size() - 1) = v;
  for (std::size_t q = 0; q < model.stiffness.size(); ++q) {
    reduced_stiffness_[q] = symmetrize(basis_.transpose() * (model.stiffness[q] * basis_));
  }
  reduced_loads_ = basis_.transpose() * model.loads;
  refresh_residual_factor(model);
  library_projection_.resize(0, 0);
  return true;
}

void RBSpace::refresh_residual_factor(const Model& model) {
  const Index m = model.param_dim();
  const Index n = size();
  const auto q_count = static_cast<Index>(model.stiffness.size());
  Matrix components(model.n_dof(), m + q_count * n);
  components.leftCols(m) = model.loads;
  for (Index q = 0; q < q_count; ++q) {
    if (n > 0) components.middleCols(m + q * n, n) = model.stiffness[static_cast<std::size_t>(q)] * basis_;
  }
  const Matrix whitened = model.gram_factor->whiten_dual(components);
  Eigen::HouseholderQR<Matrix> qr(whitened);
  const Index p = components.cols();
  residual_factor_ = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
}

void RBSpace::attach_library(const SensorLibrary& library) {
  library_projection_ = library.functionals * basis_;
}

Matrix RBSpace::reduced_stiffness_at(const Vector& theta) const {
  Matrix a = Matrix::Zero(size(), size());
  for (std::size_t q = 0; q < reduced_stiffness_.size(); ++q) a += coefficients_[q].evaluate(theta) * reduced_stiffness_[q];
  return a;
}

ReducedStates RBSpace::reduced_state_matrix(const Vector& theta) const {
  if (!domain_.contains(theta)) throw Error("RBSpace: theta lies outside the hyper-parameter domain");
  if (size() == 0) return Matrix::Zero(0, param_dim());
  Eigen::LLT<Matrix> llt(reduced_stiffness_at(theta));
  if (llt.info() != Eigen::Success) throw CoercivityError("RBSpace: reduced stiffness is not SPD");
  return llt.solve(reduced_loads_);
}

Vector RBSpace::rb_solve(const Vector& theta, const Vector& m) const {
  if (m.size() != param_dim()) throw Error("rb_solve: parameter has wrong dimension");
  return reduced_state_matrix(theta) * m;
}

Matrix RBSpace::residual_weights(const Vector& theta, const ReducedStates& states) const {
  const Index m = param_dim();
  const Index n = size();
  Matrix w(m + static_cast<Index>(coefficients_.size()) * n, m);
  w.topRows(m).setIdentity();
  for (std::size_t q = 0; q < coefficients_.size(); ++q) {
    w.middleRows(m + static_cast<Index>(q) * n, n) = -coefficients_[q].evaluate(theta) * states;
  }
  return w;
}

double RBSpace::absolute_error_bound(const Vector& theta, const Vector& m) const {
  const ReducedStates states = reduced_state_matrix(theta);
  const double residual = (residual_factor_ * (residual_weights(theta, states) * m)).norm();
  return residual / coercivity_lower_bound(theta);
}

std::optional<double> RBSpace::error_estimate(const Vector& theta, const Vector& m) const {
  const ReducedStates states = reduced_state_matrix(theta);
  const double rb_norm = (states * m).norm();
  const double residual = (residual_factor_ * (residual_weights(theta, states) * m)).norm();
  const double bound = residual / coercivity_lower_bound(theta);
  if (!(bound < rb_norm)) return std::nullopt;
  return bound / (rb_norm - bound);
}

double RBSpace::relative_error_bound(const Vector& theta) const {
  if (size() == 0) return kInf;
  const ReducedStates states = reduced_state_matrix(theta);
  const Matrix& comp = param_decomposition_.complement_basis;
  const Matrix y = states * comp;
  // Reduced states must span as many directions as the truth states do.
  Eigen::JacobiSVD<Matrix> svd(y);
  const Vector& sv = svd.singularValues();
  if (sv.size() < comp.cols() || !(sv[sv.size() - 1] > 1e-10 * sv[0])) return kInf;

  const Matrix e = residual_factor_ * (residual_weights(theta, states) * comp);
  const SymmetricEigen eig = generalized_eigen(e.transpose() * e, y.transpose() * y);
  const double ratio = std::sqrt(std::max(0.0, eig.values.maxCoeff())) / coercivity_lower_bound(theta);
  if (!(ratio < 1.0)) return kInf;
  return ratio / (1.0 - ratio);
}

Matrix RBSpace::ptg_rb(const ObservationOperator& op, const Matrix& states) const {
  if (op.empty()) return Matrix(0, states.cols());
  if (library_projection_.cols() != size() || library_projection_.rows() == 0) {
    throw Error("RBSpace: attach_library() must be called before evaluating observability");
  }
  Matrix rows(op.size(), size());
  for (Index r = 0; r < op.size(); ++r) rows.row(r) = library_projection_.row(op.indices()[static_cast<std::size_t>(r)]);
  return rows * states;
}

ObservabilityResult RBSpace::beta_rb(const Vector& theta, const ObservationOperator& op) const {
  const ReducedStates states = reduced_state_matrix(theta);
  const Matrix gram = symmetrize(states.transpose() * states);
  return observability_beta(states, gram, param_decomposition_, ptg_rb(op, states), op);
}

ObservabilityResult RBSpace::beta_rb_pair(const Vector& theta1, const Vector& theta2,
                                          const ObservationOperator& op) const {
  const Index m = param_dim();
  Matrix states(size(), 2 * m);
  states.leftCols(m) = reduced_state_matrix(theta1);
  states.rightCols(m) = reduced_state_matrix(theta2);
  const Matrix gram = symmetrize(states.transpose() * states);
  return observability_beta(states, gram, kernel_subspace(states), ptg_rb(op, states), op);
}

void RBSpace::save(std::ostream& out, const std::string& config_hash) const {
  out << kRBSpaceHeader << '\n';
  out << "config_hash " << config_hash << '\n';
  out << "coercivity_reference " << fmt::format("{:.17g}", coercivity_reference_) << '\n';
  out << "coefficients " << coefficients_.size();
  for (const auto& c : coefficients_) out << ' ' << c.theta_index;
  out << '\n';
  write_matrix(out, "domain_lower", Matrix(domain_.lower.transpose()));
  write_matrix(out, "domain_upper", Matrix(domain_.upper.transpose()));
  write_matrix(out, "basis", basis_);
  for (std::size_t q = 0; q < reduced_stiffness_.size(); ++q) write_matrix(out, fmt::format("stiffness_{}", q), reduced_stiffness_[q]);
  write_matrix(out, "loads", reduced_loads_);
  write_matrix(out, "residual_factor", residual_factor_);
  write_matrix(out, "kernel", param_decomposition_.kernel_basis);
  write_matrix(out, "complement", param_decomposition_.complement_basis);
  out << "end\n";
}

RBSpace RBSpace::load(std::istream& in, std::string& config_hash) {
  std::string header;
  if (!std::getline(in, header) || header != kRBSpaceHeader) {
    throw Error(fmt::format("RB artifact: missing '{}' header", kRBSpaceHeader));
  }
  RBSpace rb;
  expect_token(in, "config_hash");
  in >> config_hash;
  expect_token(in, "coercivity_reference");
  in >> rb.coercivity_reference_;
  expect_token(in, "coefficients");
  std::size_t q_count = 0;
  in >> q_count;
  rb.coefficients_.resize(q_count);
  for (auto& c : rb.coefficients_) in >> c.theta_index;
  rb.domain_.lower = read_matrix(in, "domain_lower").row(0).transpose();
  rb.domain_.upper = read_matrix(in, "domain_upper").row(0).transpose();
  rb.basis_ = read_matrix(in, "basis");
  for (std::size_t q = 0; q < q_count; ++q) rb.reduced_stiffness_.push_back(read_matrix(in, fmt::format("stiffness_{}", q)));
  rb.reduced_loads_ = read_matrix(in, "loads");
  rb.residual_factor_ = read_matrix(in, "residual_factor");
  rb.param_decomposition_.kernel_basis = read_matrix(in, "kernel");
  rb.param_decomposition_.complement_basis = read_matrix(in, "complement");
  rb.param_decomposition_.projector =
      rb.param_decomposition_.complement_basis * rb.param_decomposition_.complement_basis.transpose();
  expect_token(in, "end");
  if (!in) throw Error("RB artifact: read failure");
  return rb;
}

double reference_coercivity(const Model& model, double safety) {
  SparseMatrix a(model.n_dof(), model.n_dof());
  for (const auto& component : model.stiffness) a += component;
  const SparseCholesky factor(a);
  Vector x = Vector::Ones(model.n_dof());
  double rayleigh = kInf;
  for (int it = 0; it < 5000; ++it) {
    x = factor.solve(Vector(model.gram_x * x));
    x /= model.state_norm(x);
    const double next = x.dot(a * x);
    if (std::abs(next - rayleigh) <= 1e-14 * next) {
      rayleigh = next;
      break;
    }
    rayleigh = next;
  }
  return safety * rayleigh;
}

ErrorCertificate certify(const RBSpace& rb, const std::vector<Vector>& thetas) {
  ErrorCertificate cert;
  cert.thetas = thetas;
  cert.eps_theta.resize(static_cast<Index>(thetas.size()));
  parallel_for(thetas.size(), [&](std::size_t i) { cert.eps_theta[static_cast<Index>(i)] = rb.relative_error_bound(thetas[i]); });
  cert.eps_max = thetas.empty() ? 0.0 : cert.eps_theta.maxCoeff();
  return cert;
}

RBBuildResult build_rb(const Model& model, const std::vector<Vector>& xi_train, const RBBuildOptions& options) {
  if (!(options.eps_target > 0.0 && options.eps_target < 1.0)) throw Error("build_rb: eps_target must lie in (0, 1)");
  if (xi_train.empty()) throw Error("build_rb: empty training set");
  for (const auto& theta : xi_train) model.check_theta(theta);

  RBBuildResult result;
  result.space = RBSpace(model, reference_coercivity(model));
  RBSpace& rb = result.space;
  const Matrix& comp = rb.param_decomposition().complement_basis;
  while (true) {
    result.certificate = certify(rb, xi_train);
    const Vector& eps = result.certificate.eps_theta;
    Index worst = 0;
    for (Index i = 1; i < eps.size(); ++i) {
      if (eps[i] > eps[worst]) worst = i;
    }
    result.history.push_back(eps[worst]);
    if (eps[worst] <= options.eps_target) break;
    const Vector& theta = xi_train[static_cast<std::size_t>(worst)];
    if (rb.size() >= options.max_basis) {
      throw CertificateError(fmt::format("build_rb: reached {} basis vectors with eps = {:.4g} at theta = ({})",
                                         rb.size(), eps[worst], fmt::join(theta, ", ")));
    }
    // Snapshot: truth state at the worst training point in the direction least
    // captured by the current space.
    const Matrix truth = parameter_to_state_matrix(model, theta);
    Matrix error = truth;
    if (rb.size() > 0) error -= rb.basis() * (rb.basis().transpose() * (model.gram_x * truth));
    const Matrix ec = error * comp;
    const Matrix tc = truth * comp;
    const SymmetricEigen eig = generalized_eigen(Matrix(ec.transpose() * model.gram_x * ec),
                                                 Matrix(tc.transpose() * model.gram_x * tc));
    const Vector direction = comp * eig.vectors.col(eig.vectors.cols() - 1);
    if (!rb.enrich(model, truth * direction)) {
      throw CertificateError(fmt::format("build_rb: estimator stalled at eps = {:.4g}; snapshot already in the space",
                                         eps[worst]));
    }
  }
  return result;
}

}  // namespace optsens

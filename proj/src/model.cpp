#include "optsens/model.hpp"

#include <fmt/format.h>

#include <array>
#include <cmath>

namespace optsens {

namespace {

// Gauss rules on [0, 1].
constexpr double kG2 = 0.28867513459481287;  // 0.5 / sqrt(3)
constexpr std::array<double, 2> kGauss2Points{0.5 - kG2, 0.5 + kG2};
constexpr std::array<double, 2> kGauss2Weights{0.5, 0.5};
constexpr double kG3 = 0.38729833462074170;  // 0.5 * sqrt(3/5)
constexpr std::array<double, 3> kGauss3Points{0.5 - kG3, 0.5, 0.5 + kG3};
constexpr std::array<double, 3> kGauss3Weights{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

// Bilinear shape functions on the reference square, counter-clockwise from (0,0).
std::array<double, 4> shape(double xi, double eta) {
  return {(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta};
}
std::array<double, 4> shape_dxi(double eta) { return {-(1 - eta), 1 - eta, eta, -eta}; }
std::array<double, 4> shape_deta(double xi) { return {-(1 - xi), -xi, xi, 1 - xi}; }

using LocalMatrix = std::array<std::array<double, 4>, 4>;

// Unit-conductivity stiffness and mass of one element of side h.
std::pair<LocalMatrix, LocalMatrix> element_matrices(double h) {
  LocalMatrix k{};
  LocalMatrix m{};
  for (std::size_t qi = 0; qi < 2; ++qi) {
    for (std::size_t qj = 0; qj < 2; ++qj) {
      const double xi = kGauss2Points[qi];
      const double eta = kGauss2Points[qj];
      const double w = kGauss2Weights[qi] * kGauss2Weights[qj];
      const auto phi = shape(xi, eta);
      const auto dxi = shape_dxi(eta);
      const auto deta = shape_deta(xi);
      for (std::size_t a = 0; a < 4; ++a) {
        for (std::size_t b = 0; b < 4; ++b) {
          k[a][b] += w * (dxi[a] * dxi[b] + deta[a] * deta[b]);
          m[a][b] += w * h * h * phi[a] * phi[b];
        }
      }
    }
  }
  return {k, m};
}

std::array<Index, 4> element_nodes(const UniformGrid& grid, Index ei, Index ej) {
  return {grid.node(ei, ej), grid.node(ei + 1, ej), grid.node(ei + 1, ej + 1), grid.node(ei, ej + 1)};
}

}  // namespace

void HyperParameterDomain::validate() const {
  if (lower.size() < 1 || lower.size() != upper.size()) {
    throw Error("hyper-parameter domain: bounds must have equal, positive dimension");
  }
  for (Index i = 0; i < lower.size(); ++i) {
    if (!(lower[i] > 0.0) || !(lower[i] < upper[i])) {
      throw Error(fmt::format("hyper-parameter domain: need 0 < lower < upper in component {}", i));
    }
  }
}

bool HyperParameterDomain::contains(const Vector& theta, double rel_tol) const {
  if (theta.size() != lower.size()) return false;
  for (Index i = 0; i < theta.size(); ++i) {
    if (theta[i] < lower[i] * (1 - rel_tol) || theta[i] > upper[i] * (1 + rel_tol)) return false;
  }
  return true;
}

SparseMatrix Model::stiffness_at(const Vector& theta) const {
  SparseMatrix a(n_dof(), n_dof());
  for (std::size_t q = 0; q < stiffness.size(); ++q) {
    a += coefficients[q].evaluate(theta) * stiffness[q];
  }
  return a;
}

Vector Model::to_nodal(const Vector& state) const {
  Vector nodal = Vector::Zero(grid.node_count());
  for (Index d = 0; d < n_dof(); ++d) nodal[dof_to_node[static_cast<std::size_t>(d)]] = state[d];
  return nodal;
}

SparseMatrix Model::restrict_columns(const SparseMatrix& nodal) const {
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(nodal.nonZeros()));
  for (Index col = 0; col < nodal.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(nodal, col); it; ++it) {
      const Index dof = node_to_dof[static_cast<std::size_t>(it.col())];
      if (dof >= 0) entries.emplace_back(it.row(), dof, it.value());
    }
  }
  SparseMatrix out(nodal.rows(), n_dof());
  out.setFromTriplets(entries.begin(), entries.end());
  return out;
}

void Model::check_theta(const Vector& theta) const {
  if (theta.size() != domain.dim()) {
    throw Error(fmt::format("theta has dimension {}, expected {}", theta.size(), domain.dim()));
  }
  if (!domain.contains(theta)) throw Error("theta lies outside the hyper-parameter domain");
}

double Model::state_norm(const Vector& u) const { return std::sqrt(std::max(0.0, u.dot(gram_x * u))); }

Model assemble_thermal_block(const ThermalBlockConfig& config) {
  if (config.mesh_n < 3) throw Error("thermal block: mesh_n must be at least 3");
  if (config.legendre_max_degree < 0 || config.legendre_max_degree > 3) {
    throw Error("thermal block: Legendre degrees are limited to 0..3");
  }
  const int n_sub = config.subdomain_count();
  if (config.pinned_subdomain >= n_sub) throw Error("thermal block: pinned subdomain out of range");

  Model model;
  model.grid.nodes_per_side = config.mesh_n;
  const UniformGrid& grid = model.grid;
  const Index ne = grid.elements_per_side();
  const double h = grid.spacing();

  model.node_to_dof.assign(static_cast<std::size_t>(grid.node_count()), -1);
  for (Index node = 0; node < grid.node_count(); ++node) {
    if (node / grid.nodes_per_side == grid.nodes_per_side - 1) {
      model.dirichlet_nodes.push_back(node);
    } else {
      model.node_to_dof[static_cast<std::size_t>(node)] = static_cast<Index>(model.dof_to_node.size());
      model.dof_to_node.push_back(node);
    }
  }
  const Index n = static_cast<Index>(model.dof_to_node.size());

  // Element rows are assigned to strips by their centroid.
  std::vector<int> row_subdomain(static_cast<std::size_t>(ne));
  std::vector<int> rows_per_subdomain(static_cast<std::size_t>(n_sub), 0);
  for (Index ej = 0; ej < ne; ++ej) {
    const double yc = (static_cast<double>(ej) + 0.5) * h;
    int s = 0;
    for (double bound : config.strip_bounds) s += yc > bound ? 1 : 0;
    row_subdomain[static_cast<std::size_t>(ej)] = s;
    ++rows_per_subdomain[static_cast<std::size_t>(s)];
  }
  for (int s = 0; s < n_sub; ++s) {
    if (rows_per_subdomain[static_cast<std::size_t>(s)] == 0) {
      throw Error(fmt::format("thermal block: mesh_n = {} is too coarse to resolve subdomain {}", config.mesh_n, s));
    }
  }

  const auto [k_local, m_local] = element_matrices(h);
  std::vector<std::vector<Triplet>> stiffness_entries(static_cast<std::size_t>(n_sub));
  std::vector<Triplet> gram_entries;
  model.element_subdomain.reserve(static_cast<std::size_t>(ne * ne));
  for (Index ej = 0; ej < ne; ++ej) {
    const int s = row_subdomain[static_cast<std::size_t>(ej)];
    for (Index ei = 0; ei < ne; ++ei) {
      model.element_subdomain.push_back(s);
      const auto nodes = element_nodes(grid, ei, ej);
      for (std::size_t a = 0; a < 4; ++a) {
        const Index row = model.node_to_dof[static_cast<std::size_t>(nodes[a])];
        if (row < 0) continue;
        for (std::size_t b = 0; b < 4; ++b) {
          const Index col = model.node_to_dof[static_cast<std::size_t>(nodes[b])];
          if (col < 0) continue;
          stiffness_entries[static_cast<std::size_t>(s)].emplace_back(row, col, k_local[a][b]);
          gram_entries.emplace_back(row, col, k_local[a][b] + m_local[a][b]);
        }
      }
    }
  }

  int next_theta = 0;
  for (int s = 0; s < n_sub; ++s) {
    SparseMatrix a(n, n);
    auto& entries = stiffness_entries[static_cast<std::size_t>(s)];
    a.setFromTriplets(entries.begin(), entries.end());
    model.stiffness.push_back(std::move(a));
    model.coefficients.push_back({s == config.pinned_subdomain ? -1 : next_theta++});
  }
  model.domain.lower = Vector::Constant(next_theta, config.theta_min);
  model.domain.upper = Vector::Constant(next_theta, config.theta_max);
  model.domain.validate();

  model.gram_x.resize(n, n);
  model.gram_x.setFromTriplets(gram_entries.begin(), gram_entries.end());
  model.gram_factor = std::make_shared<const SparseCholesky>(model.gram_x);

  model.loads.resize(n, config.legendre_max_degree + 1);
  for (int degree = 0; degree <= config.legendre_max_degree; ++degree) {
    model.loads.col(degree) = assemble_inflow_load(model, [degree](double x1) { return legendre(degree, 2 * x1 - 1); });
  }
  return model;
}

Vector assemble_inflow_load(const Model& model, const std::function<double(double)>& flux) {
  const UniformGrid& grid = model.grid;
  const double h = grid.spacing();
  Vector load = Vector::Zero(model.n_dof());
  for (Index ei = 0; ei < grid.elements_per_side(); ++ei) {
    const Index left = model.node_to_dof[static_cast<std::size_t>(grid.node(ei, 0))];
    const Index right = model.node_to_dof[static_cast<std::size_t>(grid.node(ei + 1, 0))];
    for (std::size_t q = 0; q < 3; ++q) {
      const double s = kGauss3Points[q];
      const double g = flux((static_cast<double>(ei) + s) * h) * kGauss3Weights[q] * h;
      if (left >= 0) load[left] += g * (1 - s);
      if (right >= 0) load[right] += g * s;
    }
  }
  return load;
}

double l2_error(const Model& model, const Vector& state, const std::function<double(double, double)>& exact) {
  const UniformGrid& grid = model.grid;
  const double h = grid.spacing();
  const Vector nodal = model.to_nodal(state);
  double sum = 0.0;
  for (Index ej = 0; ej < grid.elements_per_side(); ++ej) {
    for (Index ei = 0; ei < grid.elements_per_side(); ++ei) {
      const auto nodes = element_nodes(grid, ei, ej);
      for (std::size_t qi = 0; qi < 3; ++qi) {
        for (std::size_t qj = 0; qj < 3; ++qj) {
          const double xi = kGauss3Points[qi];
          const double eta = kGauss3Points[qj];
          const auto phi = shape(xi, eta);
          double uh = 0.0;
          for (std::size_t a = 0; a < 4; ++a) uh += phi[a] * nodal[nodes[a]];
          const double diff = uh - exact((static_cast<double>(ei) + xi) * h, (static_cast<double>(ej) + eta) * h);
          sum += kGauss3Weights[qi] * kGauss3Weights[qj] * h * h * diff * diff;
        }
      }
    }
  }
  return std::sqrt(sum);
}

double legendre(int degree, double t) {
  switch (degree) {
    case 0:
      return 1.0;
    case 1:
      return t;
    case 2:
      return 0.5 * (3 * t * t - 1);
    case 3:
      return 0.5 * (5 * t * t * t - 3 * t);
    default:
      throw Error(fmt::format("legendre: degree {} not supported (0..3)", degree));
  }
}

std::vector<Vector> sample_hyper_grid(const HyperParameterDomain& domain, Index n_per_dim, bool log_scale) {
  domain.validate();
  if (n_per_dim < 2) throw Error("sample_hyper_grid: need at least 2 points per dimension");
  const Index dim = domain.dim();
  auto coordinate = [&](Index d, Index k) {
    if (k == 0) return domain.lower[d];
    if (k == n_per_dim - 1) return domain.upper[d];
    const double t = static_cast<double>(k) / static_cast<double>(n_per_dim - 1);
    if (log_scale) {
      const double lo = std::log10(domain.lower[d]);
      const double hi = std::log10(domain.upper[d]);
      return std::pow(10.0, lo + t * (hi - lo));
    }
    return domain.lower[d] + t * (domain.upper[d] - domain.lower[d]);
  };
  Index total = 1;
  for (Index d = 0; d < dim; ++d) total *= n_per_dim;
  std::vector<Vector> points;
  points.reserve(static_cast<std::size_t>(total));
  for (Index flat = 0; flat < total; ++flat) {
    Vector theta(dim);
    Index rest = flat;
    for (Index d = 0; d < dim; ++d) {
      theta[d] = coordinate(d, rest % n_per_dim);
      rest /= n_per_dim;
    }
    points.push_back(std::move(theta));
  }
  return points;
}

ForwardSolver::ForwardSolver(const Model& model, const Vector& theta)
    : model_(&model), stiffness_((model.check_theta(theta), model.stiffness_at(theta))), factor_(stiffness_) {}

Vector ForwardSolver::solve(const Vector& m) const {
  if (m.size() != model_->param_dim()) {
    throw Error(fmt::format("parameter has dimension {}, expected {}", m.size(), model_->param_dim()));
  }
  return factor_.solve(Vector(model_->loads * m));
}

Matrix ForwardSolver::state_matrix() const { return factor_.solve(model_->loads); }

Vector ForwardSolver::residual(const Vector& u, const Vector& m) const { return stiffness_ * u - model_->loads * m; }

Vector solve_forward(const Model& model, const Vector& theta, const Vector& m) {
  return ForwardSolver(model, theta).solve(m);
}

Matrix parameter_to_state_matrix(const Model& model, const Vector& theta) {
  return ForwardSolver(model, theta).state_matrix();
}

}  // namespace optsens

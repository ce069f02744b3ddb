#include "optsens/sensors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

namespace optsens {

namespace {

// Kernel mass beyond this many standard deviations is below double resolution.
constexpr double kTruncation = 9.0;

struct EdgeIntegrals {
  double left = 0.0;   // int G (1 - xi)
  double right = 0.0;  // int G xi
};

// 1D Gaussian density with centre c and width s integrated against the two
// linear hat pieces of the interval [a, a + h].
EdgeIntegrals gaussian_hat_integrals(double a, double h, double c, double s) {
  const double b = a + h;
  const double scale = std::numbers::sqrt2 * s;
  const double mass = 0.5 * (std::erf((b - c) / scale) - std::erf((a - c) / scale));
  auto density = [&](double t) {
    const double z = (t - c) / s;
    return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * s);
  };
  // int G(t) (t - a) dt = s^2 (G(a) - G(b)) + (c - a) mass
  const double first_moment = s * s * (density(a) - density(b)) + (c - a) * mass;
  const double right = first_moment / h;
  return {mass - right, right};
}

}  // namespace

RowSparseMatrix assemble_gaussian_functionals(const UniformGrid& grid, const std::vector<Point2>& centers,
                                              double std_dev) {
  if (!(std_dev > 0.0)) throw Error("Gaussian sensors need a positive standard deviation");
  const Index ne = grid.elements_per_side();
  const double h = grid.spacing();
  std::vector<Triplet> entries;
  for (std::size_t k = 0; k < centers.size(); ++k) {
    const Point2 c = centers[k];
    auto element_range = [&](double centre) {
      const auto lo = static_cast<Index>(std::floor((centre - kTruncation * std_dev) / h));
      const auto hi = static_cast<Index>(std::floor((centre + kTruncation * std_dev) / h));
      return std::pair{std::clamp<Index>(lo, 0, ne - 1), std::clamp<Index>(hi, 0, ne - 1)};
    };
    const auto [i0, i1] = element_range(c.x1);
    const auto [j0, j1] = element_range(c.x2);
    std::vector<EdgeIntegrals> along_x1;
    std::vector<EdgeIntegrals> along_x2;
    for (Index i = i0; i <= i1; ++i) along_x1.push_back(gaussian_hat_integrals(static_cast<double>(i) * h, h, c.x1, std_dev));
    for (Index j = j0; j <= j1; ++j) along_x2.push_back(gaussian_hat_integrals(static_cast<double>(j) * h, h, c.x2, std_dev));
    for (Index j = j0; j <= j1; ++j) {
      const EdgeIntegrals& y = along_x2[static_cast<std::size_t>(j - j0)];
      for (Index i = i0; i <= i1; ++i) {
        const EdgeIntegrals& x = along_x1[static_cast<std::size_t>(i - i0)];
        const auto row = static_cast<Index>(k);
        entries.emplace_back(row, grid.node(i, j), x.left * y.left);
        entries.emplace_back(row, grid.node(i + 1, j), x.right * y.left);
        entries.emplace_back(row, grid.node(i + 1, j + 1), x.right * y.right);
        entries.emplace_back(row, grid.node(i, j + 1), x.left * y.right);
      }
    }
  }
  RowSparseMatrix f(static_cast<Index>(centers.size()), grid.node_count());
  f.setFromTriplets(entries.begin(), entries.end());
  return f;
}

SensorLibrary build_library(Index grid_n, double lower, double upper, double std_dev, const Model& model,
                            NoiseCovariance noise) {
  if (grid_n < 2) throw Error("sensor library: grid_n must be at least 2");
  if (!(std_dev > 0.0)) throw Error("sensor library: std must be positive");
  if (!(lower < upper) || lower < 0.0 || upper > 1.0) throw Error("sensor library: bounds must satisfy 0 <= a < b <= 1");

  SensorLibrary library;
  library.grid_n = grid_n;
  library.std_dev = std_dev;
  library.noise = noise;
  library.gram_factor = model.gram_factor;
  library.under_resolved = std_dev < model.grid.spacing();
  const double step = (upper - lower) / static_cast<double>(grid_n - 1);
  for (Index j = 0; j < grid_n; ++j) {
    for (Index i = 0; i < grid_n; ++i) {
      library.centers.push_back({lower + static_cast<double>(i) * step, lower + static_cast<double>(j) * step});
    }
  }
  const RowSparseMatrix nodal = assemble_gaussian_functionals(model.grid, library.centers, std_dev);
  library.functionals = model.restrict_columns(SparseMatrix(nodal));
  return library;
}

Matrix SensorLibrary::riesz(std::span<const Index> indices) const {
  Matrix rhs(functionals.cols(), static_cast<Index>(indices.size()));
  for (std::size_t c = 0; c < indices.size(); ++c) rhs.col(static_cast<Index>(c)) = functionals.row(indices[c]).transpose();
  return gram_factor->solve(rhs);
}

Matrix SensorLibrary::noise_cov_rows(std::span<const Index> indices) const {
  const auto k = static_cast<Index>(indices.size());
  if (noise == NoiseCovariance::identity) {
    Matrix rows = Matrix::Zero(k, size());
    for (Index c = 0; c < k; ++c) rows(c, indices[static_cast<std::size_t>(c)]) = 1.0;
    return rows;
  }
  return (functionals * riesz(indices)).transpose();
}

Matrix SensorLibrary::noise_cov_block(std::span<const Index> indices) const {
  const auto k = static_cast<Index>(indices.size());
  if (noise == NoiseCovariance::identity) return Matrix::Identity(k, k);
  const Matrix r = riesz(indices);
  Matrix block(k, k);
  for (Index a = 0; a < k; ++a) {
    block.row(a) = functionals.row(indices[static_cast<std::size_t>(a)]) * r;
  }
  return symmetrize(block);
}

Vector SensorLibrary::noise_cov_diagonal() const {
  if (noise == NoiseCovariance::identity) return Vector::Ones(size());
  // f_k^T X^{-1} f_k = |L^{-1} P f_k|^2, in column blocks to bound memory.
  constexpr Index kBlock = 256;
  Vector diag(size());
  for (Index start = 0; start < size(); start += kBlock) {
    const Index count = std::min(kBlock, size() - start);
    const Matrix block = Matrix(functionals.middleRows(start, count).transpose());
    diag.segment(start, count) = gram_factor->whiten_dual(block).colwise().squaredNorm().transpose();
  }
  return diag;
}

Matrix SensorLibrary::noise_cov() const {
  std::vector<Index> all(static_cast<std::size_t>(size()));
  for (Index k = 0; k < size(); ++k) all[static_cast<std::size_t>(k)] = k;
  return noise_cov_block(all);
}

ObservationOperator::ObservationOperator(const SensorLibrary& library, std::vector<Index> indices)
    : indices_(std::move(indices)) {
  for (Index k : indices_) {
    if (k < 0 || k >= library.size()) throw Error(fmt::format("sensor index {} outside the library", k));
  }
  obs_matrix_.resize(size(), library.functionals.cols());
  std::vector<Triplet> entries;
  for (Index r = 0; r < size(); ++r) {
    for (RowSparseMatrix::InnerIterator it(library.functionals, indices_[static_cast<std::size_t>(r)]); it; ++it) {
      entries.emplace_back(r, it.col(), it.value());
    }
  }
  obs_matrix_.setFromTriplets(entries.begin(), entries.end());
  cov_ = library.noise_cov_block(indices_);
  validate();
}

ObservationOperator::ObservationOperator(std::vector<Index> indices, RowSparseMatrix obs_matrix, Matrix cov)
    : indices_(std::move(indices)), obs_matrix_(std::move(obs_matrix)), cov_(std::move(cov)) {
  if (obs_matrix_.rows() != size() || cov_.rows() != size() || cov_.cols() != size()) {
    throw Error("observation operator: inconsistent dimensions");
  }
  validate();
}

void ObservationOperator::validate() {
  std::set<Index> seen(indices_.begin(), indices_.end());
  if (seen.size() != indices_.size()) throw Error("observation operator: sensor indices must be distinct");
  if (empty()) return;
  cov_chol_.compute(cov_);
  if (cov_chol_.info() != Eigen::Success) throw Error("observation operator: noise covariance is not SPD");
}

Vector ObservationOperator::observe(const Vector& u) const {
  if (empty()) return Vector();
  if (u.size() != obs_matrix_.cols()) throw Error("observe: state dimension mismatch");
  return obs_matrix_ * u;
}

double ObservationOperator::noise_norm(const Vector& d) const {
  if (empty()) return 0.0;
  if (d.size() != size()) throw Error("noise_norm: data dimension mismatch");
  return whiten(d).norm();
}

Matrix ObservationOperator::whiten(const Matrix& d) const { return cov_chol_.matrixL().solve(d); }

Matrix ObservationOperator::cov_solve(const Matrix& d) const { return cov_chol_.solve(d); }

double gamma_L(const ObservationOperator& op, const Model& model) {
  if (op.empty()) return 0.0;
  const Matrix ft = Matrix(op.obs_matrix().transpose());
  const Matrix riesz_gram = ft.transpose() * model.gram_factor->solve(ft);
  const SymmetricEigen eig = generalized_eigen(riesz_gram, op.cov());
  return std::sqrt(std::max(0.0, eig.values.maxCoeff()));
}

Vector sample_noise(const ObservationOperator& op, double sigma, std::uint64_t seed) {
  if (!(sigma > 0.0)) throw Error("sample_noise: sigma must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector z(op.size());
  for (Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  const Matrix lower = op.cov_chol().matrixL();
  return sigma * (lower * z);
}

}  // namespace optsens

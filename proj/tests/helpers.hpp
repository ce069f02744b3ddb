#pragma once

#include "optsens/bayes.hpp"
#include "optsens/model.hpp"
#include "optsens/sensors.hpp"

#include <map>
#include <memory>
#include <random>
#include <vector>

namespace testing {

using namespace optsens;

/// Thermal block models are expensive enough to share between test cases.
inline const Model& thermal_block(Index mesh_n, int pinned = 2) {
  static std::map<std::pair<Index, int>, std::unique_ptr<Model>> cache;
  auto& slot = cache[{mesh_n, pinned}];
  if (!slot) {
    ThermalBlockConfig config;
    config.mesh_n = mesh_n;
    config.pinned_subdomain = pinned;
    slot = std::make_unique<Model>(assemble_thermal_block(config));
  }
  return *slot;
}

inline Vector random_theta(std::mt19937_64& rng, const HyperParameterDomain& domain) {
  Vector theta(domain.dim());
  for (Index i = 0; i < theta.size(); ++i) {
    std::uniform_real_distribution<double> u(std::log10(domain.lower[i]), std::log10(domain.upper[i]));
    theta[i] = std::pow(10.0, u(rng));
  }
  return theta;
}

inline Vector random_vector(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline Matrix random_spd(std::mt19937_64& rng, Index n) {
  Matrix a(n, n);
  for (Index j = 0; j < n; ++j) a.col(j) = random_vector(rng, n);
  return a * a.transpose() + static_cast<double>(n) * Matrix::Identity(n, n);
}

/// k distinct indices in [0, n).
inline std::vector<Index> random_indices(std::mt19937_64& rng, Index n, Index k) {
  std::vector<Index> all(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(k));
  return all;
}

inline GaussianPrior default_prior() {
  Vector mean = Vector::Zero(4);
  mean[0] = 1.0;
  return make_prior(mean, Matrix::Identity(4, 4));
}

/// Dense X-norm of a state, independent of the library's factorization.
inline double x_norm(const Model& model, const Vector& u) { return std::sqrt(u.dot(model.gram_x * u)); }

}  // namespace testing

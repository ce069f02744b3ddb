#pragma once

#include "optsens/greedy.hpp"
#include "optsens/linalg.hpp"
#include "optsens/model.hpp"
#include "optsens/sensors.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace optsens {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class CriterionMode { beta, beta2, both };

/// Experiment description read from an INI file. Every key is optional; the
/// defaults give the desk-scale thermal-block study.
struct ExperimentConfig {
  struct ModelSection {
    Index mesh_n = 65;
    std::vector<double> strip_bounds{1.0 / 3.0, 2.0 / 3.0};
    int pinned_subdomain = 2;
    double theta_lower = 0.1;
    double theta_upper = 10.0;
    bool operator==(const ModelSection&) const = default;
  } model;
  struct LibrarySection {
    Index grid_n = 25;
    double lower = 0.02;
    double upper = 0.98;
    double std_dev = 0.01;
    bool operator==(const LibrarySection&) const = default;
  } library;
  struct NoiseSection {
    double sigma = 0.01;
    NoiseCovariance covariance = NoiseCovariance::riesz;
    bool operator==(const NoiseSection&) const = default;
  } noise;
  struct PriorSection {
    std::vector<double> mean{1.0, 0.0, 0.0, 0.0};
    std::vector<double> cov_diag{1.0, 1.0, 1.0, 1.0};
    bool operator==(const PriorSection&) const = default;
  } prior;
  struct RBSection {
    double eps_target = 0.01;
    Index train_n = 7;
    Index max_basis = 120;
    bool operator==(const RBSection&) const = default;
  } rb;
  struct GreedySection {
    double beta_target = 0.5;
    Index k_max = 16;
    CriterionMode criterion = CriterionMode::both;
    std::vector<double> theta_start;  // empty: first training point
    Index pair_stride = 2;
    bool operator==(const GreedySection&) const = default;
  } greedy;
  struct BaselineSection {
    Index n_sets = 50;
    Index k = 16;
    Index inflow_min = 4;
    std::uint64_t seed = 20240601;
    bool operator==(const BaselineSection&) const = default;
  } baselines;
  struct EvaluationSection {
    Index test_n = 21;
    bool operator==(const EvaluationSection&) const = default;
  } evaluation;
  std::string output_dir = "out";

  [[nodiscard]] ThermalBlockConfig thermal_block() const;
  [[nodiscard]] HyperParameterDomain domain() const;
  [[nodiscard]] std::vector<Vector> xi_train() const;
  [[nodiscard]] std::vector<Vector> xi_test() const;
  [[nodiscard]] Vector theta_start_or_default() const;
  [[nodiscard]] GaussianPrior prior_distribution() const;

  /// Throws ConfigError on inconsistent values.
  void validate() const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses INI text. Unknown sections or keys are rejected.
[[nodiscard]] ExperimentConfig parse_config(const std::string& text);
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical INI text; parse_config(serialize_config(c)) == c.
[[nodiscard]] std::string serialize_config(const ExperimentConfig& config);
/// Hash of everything the reduced basis depends on (model and rb sections).
[[nodiscard]] std::string rb_config_hash(const ExperimentConfig& config);
/// Hash of the whole canonical config.
[[nodiscard]] std::string config_hash(const ExperimentConfig& config);

[[nodiscard]] std::string fnv1a_hex(const std::string& bytes);

}  // namespace optsens

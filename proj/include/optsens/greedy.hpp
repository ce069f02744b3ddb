#pragma once

#include "optsens/bayes.hpp"
#include "optsens/linalg.hpp"
#include "optsens/model.hpp"
#include "optsens/reduced_basis.hpp"
#include "optsens/sensors.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace optsens {

enum class Provenance { greedy, greedy_beta2, random, random_inflow, chebyshev };

[[nodiscard]] std::string_view to_string(Provenance p);
/// Throws Error on an unknown tag.
[[nodiscard]] Provenance parse_provenance(std::string_view tag);

struct SensorSet {
  std::vector<Index> indices;
  Provenance provenance = Provenance::greedy;
};

enum class Criterion {
  beta,   // single hyper-parameter observability
  beta2,  // pair observability, separates hyper-parameters
};

struct GreedyConfig {
  double beta_target = 0.5;
  Index k_max = 16;
  std::vector<Vector> xi_train;
  Vector theta_start;
  Criterion criterion = Criterion::beta;
  Index pair_stride = 2;  // beta2: every pair_stride-th training point enters the pair scan
  bool verify_scores = false;
};

struct GreedyIteration {
  Index sensor_index = 0;
  double score = 0.0;  // extended noise norm of the chosen sensor on the target state
  Vector worst_theta;
  Vector worst_theta_second;  // beta2 only
  double beta = 0.0;
  double wall_seconds = 0.0;
  double max_score_mismatch = 0.0;  // relative, only with verify_scores
};

struct GreedyResult {
  SensorSet set;
  std::vector<GreedyIteration> trace;
  bool target_reached = false;
};

/// Incremental extended-norm scoring of candidate sensors against one state.
///
/// For current data y = L u with covariance Sigma_L = C C^T, a candidate with
/// value z = l(u), cross-covariance c and variance g scores
///   |y|^2 + (z - c^T Sigma_L^{-1} y)^2 / (g - c^T Sigma_L^{-1} c),
/// which equals |[L, l] u|^2 in the extended noise norm.
class CandidateScorer {
 public:
  CandidateScorer(const ObservationOperator& current, const Vector& current_data);

  struct Score {
    double squared = 0.0;
    bool redundant = false;  // Schur complement vanished; no information gain
  };

  [[nodiscard]] Score score(double value, const Vector& cross_cov, double variance) const;
  [[nodiscard]] double base() const { return base_; }

 private:
  const ObservationOperator* current_;
  Vector whitened_data_;
  double base_ = 0.0;
};

/// Single-candidate convenience wrapper around CandidateScorer.
[[nodiscard]] CandidateScorer::Score score_candidate(const ObservationOperator& current, const Vector& current_data,
                                                     double value, const Vector& cross_cov, double variance);

/// Reference: data^T cov^{-1} data through a dense factorization of the extended covariance.
[[nodiscard]] double dense_extended_score(const Matrix& cov, const Vector& data);

/// Stability-based greedy sensor selection over the reduced model.
/// `rb` must have the library attached.
[[nodiscard]] GreedyResult run_greedy(const RBSpace& rb, const SensorLibrary& library, const GaussianPrior& prior,
                                      const GreedyConfig& config);

[[nodiscard]] std::vector<SensorSet> random_baseline(const SensorLibrary& library, Index k, Index n_sets,
                                                     std::uint64_t seed);
/// At least n_inflow_min sensors from the library row closest to the inflow edge.
[[nodiscard]] std::vector<SensorSet> random_inflow_baseline(const SensorLibrary& library, Index k,
                                                            Index n_inflow_min, Index n_sets, std::uint64_t seed);
/// Chebyshev nodes of the given degree (degree + 1 nodes) on [-1, 1].
[[nodiscard]] std::vector<double> chebyshev_nodes(int degree_max);
/// Library columns nearest the Chebyshev nodes in x1, paired with the same
/// number of library rows closest to the inflow edge.
[[nodiscard]] SensorSet chebyshev_reference(const SensorLibrary& library, int degree_max = 3);

struct SetEvaluation {
  double mean_beta = 0.0;
  double mean_trace = 0.0;
  double min_beta = 0.0;
  double max_trace = 0.0;
  Vector beta;   // per test hyper-parameter
  Vector trace;  // per test hyper-parameter
  Index failures = 0;
  std::string status = "ok";
};

/// Truth observability and posterior trace of each set over the test grid.
/// Failed (set, theta) evaluations are recorded as NaN and excluded from the means.
[[nodiscard]] std::vector<SetEvaluation> evaluate_sensor_sets(const Model& model, const SensorLibrary& library,
                                                              const std::vector<SensorSet>& sets,
                                                              const std::vector<Vector>& xi_test, double sigma,
                                                              const GaussianPrior& prior);
[[nodiscard]] SetEvaluation evaluate_sensor_set(const Model& model, const SensorLibrary& library, const SensorSet& set,
                                                const std::vector<Vector>& xi_test, double sigma,
                                                const GaussianPrior& prior);

}  // namespace optsens

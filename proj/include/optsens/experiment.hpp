#pragma once

#include "optsens/config.hpp"
#include "optsens/greedy.hpp"
#include "optsens/reduced_basis.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace optsens {

inline constexpr const char* kSoftwareVersion = "optsens 1.0.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitCertificate = 3,
  kExitStaleArtifact = 4,
};

/// The RB artifact on disk was built from a different model or rb section.
class StaleArtifactError : public Error {
 public:
  using Error::Error;
};

/// File names inside the output directory.
namespace artifact {
inline constexpr const char* kRBSpace = "rb_space.txt";
inline constexpr const char* kCertificate = "rb_certificate.csv";
inline constexpr const char* kSensors = "sensors.csv";
inline constexpr const char* kGreedyTrace = "greedy_trace.csv";
inline constexpr const char* kGreedyTraceBeta2 = "greedy_trace_beta2.csv";
inline constexpr const char* kSelection = "selection.csv";
inline constexpr const char* kBaselines = "baselines.csv";
inline constexpr const char* kResults = "results.csv";
inline constexpr const char* kResultsFull = "results_full.csv";
inline constexpr const char* kScatter = "scatter.csv";
inline constexpr const char* kSensorMap = "sensor_map.csv";
inline constexpr const char* kManifest = "manifest.json";
}  // namespace artifact

struct RunOptions {
  ExperimentConfig config;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;  // overrides baselines.seed
  std::ostream* log = nullptr;        // progress messages; null for silence

  [[nodiscard]] std::uint64_t baseline_seed() const { return seed.value_or(config.baselines.seed); }
};

struct NamedSet {
  std::string id;
  SensorSet set;
};

struct ReportSummary {
  Index set_count = 0;
  double spearman = 0.0;
  std::string reference_id;  // greedy set the baselines are compared against
  double reference_mean_beta = 0.0;
  double reference_mean_trace = 0.0;
  Index random_wins = 0;
  Index random_total = 0;
  Index inflow_wins = 0;
  Index inflow_total = 0;
  double random_median_trace = 0.0;  // over both random families
  bool beta_dominates = false;
  bool trace_below_median = false;
  [[nodiscard]] bool verdict() const { return beta_dominates && trace_below_median; }
};

/// Builds and certifies the reduced basis; writes the RB artifact and certificate CSV.
/// Throws CertificateError when the target accuracy is not reached.
RBBuildResult cmd_build_rb(const RunOptions& options);
/// Runs the configured greedy criteria; writes trace, selection and sensor CSVs.
/// Throws StaleArtifactError when the stored RB does not match the config.
std::vector<GreedyResult> cmd_select(const RunOptions& options);
/// Random, inflow-biased random and Chebyshev sets; writes baselines.csv.
std::vector<NamedSet> cmd_baselines(const RunOptions& options);
/// Truth evaluation of every selected and baseline set over the test grid.
std::vector<SetEvaluation> cmd_evaluate(const RunOptions& options);
/// Writes plotting inputs and returns the correlation and comparison summary.
ReportSummary cmd_report(const RunOptions& options);

/// Reads sensor sets (selection.csv / baselines.csv schema) in file order.
[[nodiscard]] std::vector<NamedSet> read_sensor_sets(const std::filesystem::path& path);

/// Spearman rank correlation with average ranks for ties.
[[nodiscard]] double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// Maps an exception from one of the commands to the documented exit code.
[[nodiscard]] int exit_code_for(const std::exception& e);

}  // namespace optsens

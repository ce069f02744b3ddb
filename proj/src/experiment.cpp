#include "optsens/experiment.hpp"

#include "optsens/csv.hpp"
#include "optsens/model.hpp"
#include "optsens/sensors.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace optsens {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

template <typename... Args>
void log_line(const RunOptions& o, fmt::format_string<Args...> format, Args&&... args) {
  if (o.log != nullptr) *o.log << fmt::format(format, std::forward<Args>(args)...) << '\n' << std::flush;
}

// Records a command in manifest.json when it starts and again when it ends.
class ManifestEntry {
 public:
  ManifestEntry(const RunOptions& options, std::string command)
      : path_(options.out_dir / artifact::kManifest), command_(std::move(command)), start_(clock::now()) {
    fs::create_directories(options.out_dir);
    json manifest = read();
    manifest["software_version"] = kSoftwareVersion;
    manifest["config_hash"] = config_hash(options.config);
    manifest["rb_config_hash"] = rb_config_hash(options.config);
    manifest["seeds"] = {{"baselines", options.baseline_seed()}, {"baselines_inflow", options.baseline_seed() + 1}};
    manifest["runs"][command_] = {{"status", "running"}, {"artifacts", json::array()}};
    write(manifest);
  }

  void add_artifact(const std::string& name) { artifacts_.push_back(name); }

  void finish(std::string_view status) {
    json manifest = read();
    auto& run = manifest["runs"][command_];
    run["status"] = status;
    run["artifacts"] = artifacts_;
    run["wall_seconds"] = std::chrono::duration<double>(clock::now() - start_).count();
    write(manifest);
    finished_ = true;
  }

  ~ManifestEntry() {
    if (!finished_) {
      try {
        finish("failed");
      } catch (...) {
      }
    }
  }

  ManifestEntry(const ManifestEntry&) = delete;
  ManifestEntry& operator=(const ManifestEntry&) = delete;

 private:
  using clock = std::chrono::steady_clock;

  json read() const {
    std::ifstream in(path_);
    if (!in) return json::object();
    try {
      return json::parse(in);
    } catch (const json::exception&) {
      return json::object();
    }
  }

  void write(const json& manifest) const {
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << '\n';
  }

  fs::path path_;
  std::string command_;
  clock::time_point start_;
  std::vector<std::string> artifacts_;
  bool finished_ = false;
};

Model make_model(const ExperimentConfig& c) { return assemble_thermal_block(c.thermal_block()); }

SensorLibrary make_library(const ExperimentConfig& c, const Model& model) {
  return build_library(c.library.grid_n, c.library.lower, c.library.upper, c.library.std_dev, model,
                       c.noise.covariance);
}

std::vector<std::string> theta_columns(const std::string& prefix, Index dim) {
  std::vector<std::string> cols;
  for (Index d = 0; d < dim; ++d) cols.push_back(fmt::format("{}_{}", prefix, d + 1));
  return cols;
}

void append_vector(std::vector<std::string>& row, const Vector& v) {
  for (Index i = 0; i < v.size(); ++i) row.push_back(format_real(v[i]));
}

RBSpace load_rb(const RunOptions& o) {
  const fs::path path = o.out_dir / artifact::kRBSpace;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StaleArtifactError(fmt::format("no RB artifact at '{}'; run build-rb first", path.string()));
  std::string stored_hash;
  RBSpace rb = RBSpace::load(in, stored_hash);
  const std::string expected = rb_config_hash(o.config);
  if (stored_hash != expected) {
    throw StaleArtifactError(fmt::format("RB artifact '{}' was built for config {} but the current config is {}",
                                         path.string(), stored_hash, expected));
  }
  return rb;
}

void write_sets(const fs::path& path, const std::vector<NamedSet>& sets, const SensorLibrary& library) {
  CsvTable table{{"set_id", "provenance", "slot", "sensor_index", "x1", "x2"}, {}};
  for (const auto& [id, set] : sets) {
    for (std::size_t slot = 0; slot < set.indices.size(); ++slot) {
      const Index k = set.indices[slot];
      const Point2 c = library.centers[static_cast<std::size_t>(k)];
      table.rows.push_back({id, std::string(to_string(set.provenance)), std::to_string(slot), std::to_string(k),
                            format_real(c.x1), format_real(c.x2)});
    }
  }
  write_csv(path, table);
}

void write_trace(const fs::path& path, const GreedyResult& result, const SensorLibrary& library, Index dim,
                 bool pair) {
  CsvTable table{{"iteration", "sensor_index", "x1", "x2", "score"}, {}};
  for (auto& c : theta_columns("worst_theta", dim)) table.header.push_back(c);
  table.header.push_back("beta");
  if (pair) {
    for (auto& c : theta_columns("worst_theta_second", dim)) table.header.push_back(c);
  }
  for (std::size_t i = 0; i < result.trace.size(); ++i) {
    const GreedyIteration& it = result.trace[i];
    const Point2 c = library.centers[static_cast<std::size_t>(it.sensor_index)];
    std::vector<std::string> row{std::to_string(i + 1), std::to_string(it.sensor_index), format_real(c.x1),
                                 format_real(c.x2), format_real(it.score)};
    append_vector(row, it.worst_theta);
    row.push_back(format_real(it.beta));
    if (pair) append_vector(row, it.worst_theta_second);
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

void write_library(const fs::path& path, const SensorLibrary& library) {
  CsvTable table{{"k", "x1", "x2", "std"}, {}};
  for (Index k = 0; k < library.size(); ++k) {
    const Point2 c = library.centers[static_cast<std::size_t>(k)];
    table.rows.push_back({std::to_string(k), format_real(c.x1), format_real(c.x2), format_real(library.std_dev)});
  }
  write_csv(path, table);
}

std::vector<NamedSet> read_all_sets(const RunOptions& o) {
  std::vector<NamedSet> sets;
  for (const char* name : {artifact::kSelection, artifact::kBaselines}) {
    const fs::path path = o.out_dir / name;
    if (!fs::exists(path)) continue;
    auto more = read_sensor_sets(path);
    sets.insert(sets.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }
  if (sets.empty()) throw Error("no sensor sets found; run select and/or baselines first");
  return sets;
}

std::string sanitize(std::string text) {
  std::replace_if(text.begin(), text.end(), [](char ch) { return ch == ',' || ch == '\n' || ch == '\r'; }, ';');
  return text;
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error("spearman: need two equally long samples of size >= 2");
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const auto n = static_cast<double>(a.size());
  const double mean = 0.5 * (n + 1.0);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::vector<NamedSet> read_sensor_sets(const fs::path& path) {
  const CsvTable table = read_csv(path);
  const std::size_t id_col = table.column("set_id");
  const std::size_t prov_col = table.column("provenance");
  const std::size_t idx_col = table.column("sensor_index");
  std::vector<NamedSet> sets;
  std::map<std::string, std::size_t> position;
  for (const auto& row : table.rows) {
    const std::string& id = row[id_col];
    auto [it, inserted] = position.try_emplace(id, sets.size());
    if (inserted) sets.push_back({id, {{}, parse_provenance(row[prov_col])}});
    try {
      sets[it->second].set.indices.push_back(std::stoll(row[idx_col]));
    } catch (const std::exception&) {
      throw Error(fmt::format("{}: bad sensor index '{}'", path.string(), row[idx_col]));
    }
  }
  return sets;
}

RBBuildResult cmd_build_rb(const RunOptions& o) {
  ManifestEntry manifest(o, "build-rb");
  const Model model = make_model(o.config);
  const std::vector<Vector> xi_train = o.config.xi_train();
  log_line(o, "build-rb: {} free dofs, {} training points, eps_target {}", model.n_dof(), xi_train.size(),
           o.config.rb.eps_target);
  RBBuildResult result = build_rb(model, xi_train, {o.config.rb.eps_target, o.config.rb.max_basis});

  {
    std::ofstream out(o.out_dir / artifact::kRBSpace, std::ios::binary | std::ios::trunc);
    result.space.save(out, rb_config_hash(o.config));
    if (!out) throw Error("failed writing the RB artifact");
  }
  manifest.add_artifact(artifact::kRBSpace);

  CsvTable cert{theta_columns("theta", model.domain.dim()), {}};
  cert.header.push_back("eps_theta");
  for (std::size_t i = 0; i < result.certificate.thetas.size(); ++i) {
    std::vector<std::string> row;
    append_vector(row, result.certificate.thetas[i]);
    row.push_back(format_real(result.certificate.eps_theta[static_cast<Index>(i)]));
    cert.rows.push_back(std::move(row));
  }
  write_csv(o.out_dir / artifact::kCertificate, cert);
  manifest.add_artifact(artifact::kCertificate);
  log_line(o, "build-rb: basis size {}, certified eps_max {:.4g}", result.space.size(), result.certificate.eps_max);
  manifest.finish("complete");
  return result;
}

std::vector<GreedyResult> cmd_select(const RunOptions& o) {
  ManifestEntry manifest(o, "select");
  RBSpace rb = load_rb(o);
  const Model model = make_model(o.config);
  const SensorLibrary library = make_library(o.config, model);
  if (library.under_resolved) {
    log_line(o, "warning: sensor std {} is below the mesh size {}; sensors are under-resolved", library.std_dev,
             model.grid.spacing());
  }
  rb.attach_library(library);
  write_library(o.out_dir / artifact::kSensors, library);
  manifest.add_artifact(artifact::kSensors);

  GreedyConfig gc;
  gc.beta_target = o.config.greedy.beta_target;
  gc.k_max = o.config.greedy.k_max;
  gc.xi_train = o.config.xi_train();
  gc.theta_start = o.config.theta_start_or_default();
  gc.pair_stride = o.config.greedy.pair_stride;
  const GaussianPrior prior = o.config.prior_distribution();

  std::vector<Criterion> criteria;
  if (o.config.greedy.criterion != CriterionMode::beta2) criteria.push_back(Criterion::beta);
  if (o.config.greedy.criterion != CriterionMode::beta) criteria.push_back(Criterion::beta2);

  std::vector<GreedyResult> results;
  std::vector<NamedSet> named;
  for (Criterion criterion : criteria) {
    gc.criterion = criterion;
    GreedyResult result = run_greedy(rb, library, prior, gc);
    const bool pair = criterion == Criterion::beta2;
    const char* trace_name = pair ? artifact::kGreedyTraceBeta2 : artifact::kGreedyTrace;
    write_trace(o.out_dir / trace_name, result, library, model.domain.dim(), pair);
    manifest.add_artifact(trace_name);
    log_line(o, "select[{}]: {} sensors, worst-case beta_R {:.4g}, target {}", pair ? "beta2" : "beta",
             result.set.indices.size(), result.trace.empty() ? 0.0 : result.trace.back().beta,
             result.target_reached ? "reached" : "not reached");
    named.push_back({std::string(to_string(result.set.provenance)), result.set});
    results.push_back(std::move(result));
  }
  write_sets(o.out_dir / artifact::kSelection, named, library);
  manifest.add_artifact(artifact::kSelection);
  manifest.finish("complete");
  return results;
}

std::vector<NamedSet> cmd_baselines(const RunOptions& o) {
  ManifestEntry manifest(o, "baselines");
  const Model model = make_model(o.config);
  const SensorLibrary library = make_library(o.config, model);
  const auto& b = o.config.baselines;
  const std::uint64_t seed = o.baseline_seed();

  std::vector<NamedSet> sets;
  const auto random = random_baseline(library, b.k, b.n_sets, seed);
  for (std::size_t i = 0; i < random.size(); ++i) sets.push_back({fmt::format("random_{:02}", i), random[i]});
  const auto inflow = random_inflow_baseline(library, b.k, b.inflow_min, b.n_sets, seed + 1);
  for (std::size_t i = 0; i < inflow.size(); ++i) sets.push_back({fmt::format("random_inflow_{:02}", i), inflow[i]});
  sets.push_back({"chebyshev", chebyshev_reference(library)});

  write_sets(o.out_dir / artifact::kBaselines, sets, library);
  manifest.add_artifact(artifact::kBaselines);
  log_line(o, "baselines: {} sets written", sets.size());
  manifest.finish("complete");
  return sets;
}

std::vector<SetEvaluation> cmd_evaluate(const RunOptions& o) {
  ManifestEntry manifest(o, "evaluate");
  const std::vector<NamedSet> named = read_all_sets(o);
  const Model model = make_model(o.config);
  const SensorLibrary library = make_library(o.config, model);
  const std::vector<Vector> xi_test = o.config.xi_test();
  std::vector<SensorSet> sets;
  for (const auto& n : named) sets.push_back(n.set);
  log_line(o, "evaluate: {} sets on {} test hyper-parameters", sets.size(), xi_test.size());
  const std::vector<SetEvaluation> evals =
      evaluate_sensor_sets(model, library, sets, xi_test, o.config.noise.sigma, o.config.prior_distribution());

  CsvTable summary{
      {"set_id", "provenance", "mean_beta", "mean_trace", "min_beta", "max_trace", "failures", "status"}, {}};
  CsvTable full{{"set_id", "provenance"}, {}};
  for (auto& c : theta_columns("theta", model.domain.dim())) full.header.push_back(c);
  full.header.push_back("beta");
  full.header.push_back("trace");
  for (std::size_t s = 0; s < named.size(); ++s) {
    const SetEvaluation& e = evals[s];
    const std::string prov(to_string(named[s].set.provenance));
    summary.rows.push_back({named[s].id, prov, format_real(e.mean_beta), format_real(e.mean_trace),
                            format_real(e.min_beta), format_real(e.max_trace), std::to_string(e.failures),
                            sanitize(e.status)});
    for (std::size_t t = 0; t < xi_test.size(); ++t) {
      std::vector<std::string> row{named[s].id, prov};
      append_vector(row, xi_test[t]);
      row.push_back(format_real(e.beta[static_cast<Index>(t)]));
      row.push_back(format_real(e.trace[static_cast<Index>(t)]));
      full.rows.push_back(std::move(row));
    }
  }
  write_csv(o.out_dir / artifact::kResults, summary);
  write_csv(o.out_dir / artifact::kResultsFull, full);
  manifest.add_artifact(artifact::kResults);
  manifest.add_artifact(artifact::kResultsFull);
  manifest.finish("complete");
  return evals;
}

ReportSummary cmd_report(const RunOptions& o) {
  ManifestEntry manifest(o, "report");
  const CsvTable results = read_csv(o.out_dir / artifact::kResults);
  const std::size_t id_col = results.column("set_id");
  const std::size_t prov_col = results.column("provenance");
  const std::size_t beta_col = results.column("mean_beta");
  const std::size_t trace_col = results.column("mean_trace");

  ReportSummary summary;
  summary.set_count = static_cast<Index>(results.rows.size());
  CsvTable scatter{{"set_id", "provenance", "mean_beta", "mean_trace"}, {}};
  std::vector<double> betas;
  std::vector<double> traces;
  struct Row {
    std::string id;
    Provenance provenance;
    double beta;
    double trace;
  };
  std::vector<Row> rows;
  for (const auto& r : results.rows) {
    const double beta = std::stod(r[beta_col]);
    const double trace = std::stod(r[trace_col]);
    scatter.rows.push_back({r[id_col], r[prov_col], r[beta_col], r[trace_col]});
    rows.push_back({r[id_col], parse_provenance(r[prov_col]), beta, trace});
    if (std::isfinite(beta) && std::isfinite(trace)) {
      betas.push_back(beta);
      traces.push_back(trace);
    }
  }
  write_csv(o.out_dir / artifact::kScatter, scatter);
  manifest.add_artifact(artifact::kScatter);

  CsvTable map{{"set_id", "provenance", "slot", "x1", "x2"}, {}};
  for (const char* name : {artifact::kSelection, artifact::kBaselines}) {
    const fs::path path = o.out_dir / name;
    if (!fs::exists(path)) continue;
    const CsvTable sets = read_csv(path);
    for (const auto& r : sets.rows) {
      map.rows.push_back({r[sets.column("set_id")], r[sets.column("provenance")], r[sets.column("slot")],
                          r[sets.column("x1")], r[sets.column("x2")]});
    }
  }
  write_csv(o.out_dir / artifact::kSensorMap, map);
  manifest.add_artifact(artifact::kSensorMap);

  summary.spearman = betas.size() >= 2 ? spearman(betas, traces) : std::numeric_limits<double>::quiet_NaN();

  const auto reference = std::find_if(rows.begin(), rows.end(), [](const Row& r) {
    return r.provenance == Provenance::greedy;
  });
  const auto fallback = std::find_if(rows.begin(), rows.end(), [](const Row& r) {
    return r.provenance == Provenance::greedy_beta2;
  });
  const auto ref = reference != rows.end() ? reference : fallback;
  std::vector<double> random_traces;
  if (ref != rows.end()) {
    summary.reference_id = ref->id;
    summary.reference_mean_beta = ref->beta;
    summary.reference_mean_trace = ref->trace;
    for (const Row& r : rows) {
      if (r.provenance == Provenance::random) {
        ++summary.random_total;
        summary.random_wins += ref->beta > r.beta ? 1 : 0;
        random_traces.push_back(r.trace);
      } else if (r.provenance == Provenance::random_inflow) {
        ++summary.inflow_total;
        summary.inflow_wins += ref->beta > r.beta ? 1 : 0;
        random_traces.push_back(r.trace);
      }
    }
    summary.random_median_trace = median(random_traces);
    // At least 90% wins in every random family that is present.
    auto dominates = [](Index wins, Index total) { return total == 0 || 10 * wins >= 9 * total; };
    summary.beta_dominates = summary.random_total + summary.inflow_total > 0 &&
                             dominates(summary.random_wins, summary.random_total) &&
                             dominates(summary.inflow_wins, summary.inflow_total);
    summary.trace_below_median = !random_traces.empty() && ref->trace < summary.random_median_trace;
  }

  log_line(o, "report: {} sets, Spearman(mean_beta, mean_trace) = {:.4f}", summary.set_count, summary.spearman);
  if (ref != rows.end()) {
    log_line(o, "report: {} mean_beta {:.4g} beats random {}/{} and random_inflow {}/{}", summary.reference_id,
             summary.reference_mean_beta, summary.random_wins, summary.random_total, summary.inflow_wins,
             summary.inflow_total);
    log_line(o, "report: {} mean_trace {:.4g} vs random median {:.4g}", summary.reference_id,
             summary.reference_mean_trace, summary.random_median_trace);
    log_line(o, "verdict: greedy dominates random means: {}", summary.verdict() ? "yes" : "no");
  } else {
    log_line(o, "verdict: no greedy set in results");
  }
  manifest.finish("complete");
  return summary;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return kExitConfig;
  if (dynamic_cast<const CertificateError*>(&e) != nullptr) return kExitCertificate;
  if (dynamic_cast<const StaleArtifactError*>(&e) != nullptr) return kExitStaleArtifact;
  return kExitFailure;
}

}  // namespace optsens

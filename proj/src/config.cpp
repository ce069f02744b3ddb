#include "optsens/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace optsens {

namespace {

namespace pt = boost::property_tree;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, text));
  }
  return value;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  Int value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError(fmt::format("{}: '{}' is not an integer", key, text));
  }
  return value;
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  return out;
}

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

std::string format_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ", ";
    out += format_double(values[i]);
  }
  return out;
}

std::string_view to_string(CriterionMode mode) {
  switch (mode) {
    case CriterionMode::beta:
      return "beta";
    case CriterionMode::beta2:
      return "beta2";
    case CriterionMode::both:
      return "both";
  }
  return "both";
}

// Reads one section, recording which keys were consumed so leftovers can be reported.
class SectionReader {
 public:
  SectionReader(const pt::ptree& root, std::string name) : name_(std::move(name)) {
    if (const auto child = root.get_child_optional(name_)) section_ = &*child;
  }

  template <typename F>
  void read(const std::string& key, F&& apply) {
    if (section_ == nullptr) return;
    if (const auto value = section_->get_optional<std::string>(pt::ptree::path_type(key, '\0'))) {
      apply(fmt::format("{}.{}", name_, key), *value);
    }
    seen_.insert(key);
  }

  void reject_unknown() const {
    if (section_ == nullptr) return;
    for (const auto& [key, _] : *section_) {
      if (!seen_.contains(key)) throw ConfigError(fmt::format("unknown key '{}' in section [{}]", key, name_));
    }
  }

 private:
  std::string name_;
  const pt::ptree* section_ = nullptr;
  std::set<std::string> seen_;
};

std::string model_section_text(const ExperimentConfig& c) {
  return fmt::format(
      "[model]\nmesh_n = {}\nstrip_bounds = {}\npinned_subdomain = {}\ntheta_lower = {}\ntheta_upper = {}\n",
      c.model.mesh_n, format_list(c.model.strip_bounds), c.model.pinned_subdomain, format_double(c.model.theta_lower),
      format_double(c.model.theta_upper));
}

std::string rb_section_text(const ExperimentConfig& c) {
  return fmt::format("[rb]\neps_target = {}\ntrain_n = {}\nmax_basis = {}\n", format_double(c.rb.eps_target),
                     c.rb.train_n, c.rb.max_basis);
}

}  // namespace

ThermalBlockConfig ExperimentConfig::thermal_block() const {
  ThermalBlockConfig tb;
  tb.mesh_n = model.mesh_n;
  tb.strip_bounds = model.strip_bounds;
  tb.pinned_subdomain = model.pinned_subdomain;
  tb.theta_min = model.theta_lower;
  tb.theta_max = model.theta_upper;
  return tb;
}

HyperParameterDomain ExperimentConfig::domain() const {
  const int strips = static_cast<int>(model.strip_bounds.size()) + 1;
  const Index dim = model.pinned_subdomain < 0 ? strips : strips - 1;
  return {Vector::Constant(dim, model.theta_lower), Vector::Constant(dim, model.theta_upper)};
}

std::vector<Vector> ExperimentConfig::xi_train() const { return sample_hyper_grid(domain(), rb.train_n, true); }

std::vector<Vector> ExperimentConfig::xi_test() const { return sample_hyper_grid(domain(), evaluation.test_n, true); }

Vector ExperimentConfig::theta_start_or_default() const {
  if (greedy.theta_start.empty()) return xi_train().front();
  return Eigen::Map<const Vector>(greedy.theta_start.data(), static_cast<Index>(greedy.theta_start.size()));
}

GaussianPrior ExperimentConfig::prior_distribution() const {
  const auto m = static_cast<Index>(prior.mean.size());
  Vector diag = Eigen::Map<const Vector>(prior.cov_diag.data(), static_cast<Index>(prior.cov_diag.size()));
  return optsens::make_prior(Eigen::Map<const Vector>(prior.mean.data(), m), diag.asDiagonal().toDenseMatrix());
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, std::string_view what) {
    if (!ok) throw ConfigError(std::string(what));
  };
  require(model.mesh_n >= 3, "model.mesh_n must be at least 3");
  require(!model.strip_bounds.empty(), "model.strip_bounds must list at least one interior bound");
  for (std::size_t i = 0; i < model.strip_bounds.size(); ++i) {
    require(model.strip_bounds[i] > 0.0 && model.strip_bounds[i] < 1.0, "model.strip_bounds must lie in (0, 1)");
    require(i == 0 || model.strip_bounds[i] > model.strip_bounds[i - 1], "model.strip_bounds must increase");
  }
  require(model.pinned_subdomain >= -1 && model.pinned_subdomain <= static_cast<int>(model.strip_bounds.size()),
          "model.pinned_subdomain must be -1 or a subdomain index");
  require(model.theta_lower > 0.0 && model.theta_lower < model.theta_upper,
          "model.theta_lower/theta_upper must satisfy 0 < lower < upper");
  require(library.grid_n >= 2, "library.grid_n must be at least 2");
  require(library.lower >= 0.0 && library.lower < library.upper && library.upper <= 1.0,
          "library bounds must satisfy 0 <= lower < upper <= 1");
  require(library.std_dev > 0.0, "library.std must be positive");
  require(noise.sigma > 0.0, "noise.sigma must be positive");
  require(prior.mean.size() == 4, "prior.mean needs one entry per Legendre coefficient (4)");
  require(prior.cov_diag.size() == prior.mean.size(), "prior.cov_diag must match prior.mean in length");
  for (double v : prior.cov_diag) require(v > 0.0, "prior.cov_diag entries must be positive");
  require(rb.eps_target > 0.0 && rb.eps_target < 1.0, "rb.eps_target must lie in (0, 1)");
  require(rb.train_n >= 2, "rb.train_n must be at least 2");
  require(rb.max_basis >= 1, "rb.max_basis must be positive");
  require(greedy.beta_target > 0.0, "greedy.beta_target must be positive");
  require(greedy.k_max >= 1, "greedy.k_max must be at least 1");
  require(greedy.pair_stride >= 1, "greedy.pair_stride must be at least 1");
  if (!greedy.theta_start.empty()) {
    require(static_cast<Index>(greedy.theta_start.size()) == domain().dim(),
            "greedy.theta_start has the wrong dimension");
    const Vector start = theta_start_or_default();
    bool member = false;
    for (const Vector& t : xi_train()) member = member || (t - start).norm() <= 1e-12 * start.norm();
    require(member, "greedy.theta_start must be a point of the training grid");
  }
  const Index lib_size = library.grid_n * library.grid_n;
  require(baselines.n_sets >= 0, "baselines.n_sets must be non-negative");
  require(baselines.k >= 1 && baselines.k <= lib_size, "baselines.k must lie in [1, library size]");
  require(baselines.inflow_min >= 0 && baselines.inflow_min <= baselines.k &&
              baselines.inflow_min <= library.grid_n,
          "baselines.inflow_min must lie in [0, min(k, library.grid_n)]");
  require(evaluation.test_n >= 2, "evaluation.test_n must be at least 2");
  require(!output_dir.empty(), "output.dir must not be empty");
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree root;
  try {
    std::istringstream in(text);
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config syntax error at line {}: {}", e.line(), e.message()));
  }
  const std::set<std::string> known{"model", "library", "noise", "prior", "rb", "greedy", "baselines", "evaluation", "output"};
  for (const auto& [name, child] : root) {
    if (!known.contains(name)) throw ConfigError(fmt::format("unknown section [{}]", name));
    if (child.empty()) throw ConfigError(fmt::format("key '{}' outside any section", name));
  }

  ExperimentConfig c;
  auto as_index = [](const std::string& k, const std::string& v) { return parse_int<Index>(k, v); };

  SectionReader model(root, "model");
  model.read("mesh_n", [&](const auto& k, const auto& v) { c.model.mesh_n = as_index(k, v); });
  model.read("strip_bounds", [&](const auto& k, const auto& v) { c.model.strip_bounds = parse_list(k, v); });
  model.read("pinned_subdomain", [&](const auto& k, const auto& v) { c.model.pinned_subdomain = parse_int<int>(k, v); });
  model.read("theta_lower", [&](const auto& k, const auto& v) { c.model.theta_lower = parse_double(k, v); });
  model.read("theta_upper", [&](const auto& k, const auto& v) { c.model.theta_upper = parse_double(k, v); });
  model.reject_unknown();

  SectionReader library(root, "library");
  library.read("grid_n", [&](const auto& k, const auto& v) { c.library.grid_n = as_index(k, v); });
  library.read("lower", [&](const auto& k, const auto& v) { c.library.lower = parse_double(k, v); });
  library.read("upper", [&](const auto& k, const auto& v) { c.library.upper = parse_double(k, v); });
  library.read("std", [&](const auto& k, const auto& v) { c.library.std_dev = parse_double(k, v); });
  library.reject_unknown();

  SectionReader noise(root, "noise");
  noise.read("sigma", [&](const auto& k, const auto& v) { c.noise.sigma = parse_double(k, v); });
  noise.read("covariance", [&](const auto& k, const auto& v) {
    const std::string mode = trim(v);
    if (mode == "riesz") {
      c.noise.covariance = NoiseCovariance::riesz;
    } else if (mode == "identity") {
      c.noise.covariance = NoiseCovariance::identity;
    } else {
      throw ConfigError(fmt::format("{}: expected riesz or identity, got '{}'", k, v));
    }
  });
  noise.reject_unknown();

  SectionReader prior(root, "prior");
  prior.read("mean", [&](const auto& k, const auto& v) { c.prior.mean = parse_list(k, v); });
  prior.read("cov_diag", [&](const auto& k, const auto& v) { c.prior.cov_diag = parse_list(k, v); });
  prior.reject_unknown();

  SectionReader rb(root, "rb");
  rb.read("eps_target", [&](const auto& k, const auto& v) { c.rb.eps_target = parse_double(k, v); });
  rb.read("train_n", [&](const auto& k, const auto& v) { c.rb.train_n = as_index(k, v); });
  rb.read("max_basis", [&](const auto& k, const auto& v) { c.rb.max_basis = as_index(k, v); });
  rb.reject_unknown();

  SectionReader greedy(root, "greedy");
  greedy.read("beta_target", [&](const auto& k, const auto& v) { c.greedy.beta_target = parse_double(k, v); });
  greedy.read("k_max", [&](const auto& k, const auto& v) { c.greedy.k_max = as_index(k, v); });
  greedy.read("criterion", [&](const auto& k, const auto& v) {
    const std::string mode = trim(v);
    if (mode == "beta") {
      c.greedy.criterion = CriterionMode::beta;
    } else if (mode == "beta2") {
      c.greedy.criterion = CriterionMode::beta2;
    } else if (mode == "both") {
      c.greedy.criterion = CriterionMode::both;
    } else {
      throw ConfigError(fmt::format("{}: expected beta, beta2 or both, got '{}'", k, v));
    }
  });
  greedy.read("theta_start", [&](const auto& k, const auto& v) { c.greedy.theta_start = parse_list(k, v); });
  greedy.read("pair_stride", [&](const auto& k, const auto& v) { c.greedy.pair_stride = as_index(k, v); });
  greedy.reject_unknown();

  SectionReader baselines(root, "baselines");
  baselines.read("n_sets", [&](const auto& k, const auto& v) { c.baselines.n_sets = as_index(k, v); });
  baselines.read("k", [&](const auto& k, const auto& v) { c.baselines.k = as_index(k, v); });
  baselines.read("inflow_min", [&](const auto& k, const auto& v) { c.baselines.inflow_min = as_index(k, v); });
  baselines.read("seed", [&](const auto& k, const auto& v) { c.baselines.seed = parse_int<std::uint64_t>(k, v); });
  baselines.reject_unknown();

  SectionReader evaluation(root, "evaluation");
  evaluation.read("test_n", [&](const auto& k, const auto& v) { c.evaluation.test_n = as_index(k, v); });
  evaluation.reject_unknown();

  SectionReader output(root, "output");
  output.read("dir", [&](const auto&, const auto& v) { c.output_dir = trim(v); });
  output.reject_unknown();

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::string out = model_section_text(c);
  out += fmt::format("\n[library]\ngrid_n = {}\nlower = {}\nupper = {}\nstd = {}\n", c.library.grid_n,
                     format_double(c.library.lower), format_double(c.library.upper), format_double(c.library.std_dev));
  out += fmt::format("\n[noise]\nsigma = {}\ncovariance = {}\n", format_double(c.noise.sigma),
                     c.noise.covariance == NoiseCovariance::riesz ? "riesz" : "identity");
  out += fmt::format("\n[prior]\nmean = {}\ncov_diag = {}\n", format_list(c.prior.mean), format_list(c.prior.cov_diag));
  out += "\n" + rb_section_text(c);
  out += fmt::format("\n[greedy]\nbeta_target = {}\nk_max = {}\ncriterion = {}\ntheta_start = {}\npair_stride = {}\n",
                     format_double(c.greedy.beta_target), c.greedy.k_max, to_string(c.greedy.criterion),
                     format_list(c.greedy.theta_start), c.greedy.pair_stride);
  out += fmt::format("\n[baselines]\nn_sets = {}\nk = {}\ninflow_min = {}\nseed = {}\n", c.baselines.n_sets,
                     c.baselines.k, c.baselines.inflow_min, c.baselines.seed);
  out += fmt::format("\n[evaluation]\ntest_n = {}\n", c.evaluation.test_n);
  out += fmt::format("\n[output]\ndir = {}\n", c.output_dir);
  return out;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string rb_config_hash(const ExperimentConfig& config) {
  return fnv1a_hex(model_section_text(config) + rb_section_text(config));
}

std::string config_hash(const ExperimentConfig& config) { return fnv1a_hex(serialize_config(config)); }

}  // namespace optsens

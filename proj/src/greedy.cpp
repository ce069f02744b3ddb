#include "optsens/greedy.hpp"

#include "optsens/observability.hpp"
#include "optsens/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace optsens {

namespace {

// Schur complements below this fraction of the candidate variance count as redundant.
constexpr double kRedundancyTolerance = 1e-10;
// Scores within this relative distance are ties; the lower library index wins.
constexpr double kTieTolerance = 1e-12;

std::vector<Index> draw_without_replacement(std::vector<Index> pool, Index count, std::mt19937_64& rng) {
  for (Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

// Reduced state of largest norm per unit prior norm at theta.
Vector principal_state(const RBSpace& rb, const Vector& theta, const GaussianPrior& prior) {
  const Matrix states = rb.reduced_state_matrix(theta);
  const SymmetricEigen eig = generalized_eigen(states.transpose() * states, prior.cov_inv);
  Vector m = eig.vectors.col(eig.vectors.cols() - 1);
  Index arg = 0;
  m.cwiseAbs().maxCoeff(&arg);
  if (m[arg] < 0) m = -m;
  return states * m;
}

// Training points entering the pair scan.
std::vector<Vector> pair_candidates(const std::vector<Vector>& xi_train, Index stride) {
  std::vector<Vector> out;
  for (std::size_t i = 0; i < xi_train.size(); i += static_cast<std::size_t>(std::max<Index>(1, stride))) {
    out.push_back(xi_train[i]);
  }
  return out;
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::greedy:
      return "greedy";
    case Provenance::greedy_beta2:
      return "greedy_beta2";
    case Provenance::random:
      return "random";
    case Provenance::random_inflow:
      return "random_inflow";
    case Provenance::chebyshev:
      return "chebyshev";
  }
  return "unknown";
}

Provenance parse_provenance(std::string_view tag) {
  for (Provenance p : {Provenance::greedy, Provenance::greedy_beta2, Provenance::random, Provenance::random_inflow,
                       Provenance::chebyshev}) {
    if (to_string(p) == tag) return p;
  }
  throw Error(fmt::format("unknown provenance tag '{}'", tag));
}

CandidateScorer::CandidateScorer(const ObservationOperator& current, const Vector& current_data)
    : current_(&current) {
  if (!current.empty()) {
    whitened_data_ = current.whiten(current_data);
    base_ = whitened_data_.squaredNorm();
  }
}

CandidateScorer::Score CandidateScorer::score(double value, const Vector& cross_cov, double variance) const {
  if (current_->empty()) {
    if (!(variance > 0.0)) return {0.0, true};
    return {value * value / variance, false};
  }
  const Vector t = current_->whiten(cross_cov);
  const double schur = variance - t.squaredNorm();
  if (!(schur > kRedundancyTolerance * variance)) return {base_, true};
  const double innovation = value - t.dot(whitened_data_);
  return {base_ + innovation * innovation / schur, false};
}

CandidateScorer::Score score_candidate(const ObservationOperator& current, const Vector& current_data, double value,
                                       const Vector& cross_cov, double variance) {
  return CandidateScorer(current, current_data).score(value, cross_cov, variance);
}

double dense_extended_score(const Matrix& cov, const Vector& data) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw Error("dense_extended_score: covariance is not SPD");
  return data.dot(llt.solve(data));
}

GreedyResult run_greedy(const RBSpace& rb, const SensorLibrary& library, const GaussianPrior& prior,
                        const GreedyConfig& config) {
  using clock = std::chrono::steady_clock;
  if (config.k_max < 1) throw Error("run_greedy: k_max must be at least 1");
  if (config.xi_train.empty()) throw Error("run_greedy: empty training set");
  const auto start_it = std::find_if(config.xi_train.begin(), config.xi_train.end(), [&](const Vector& t) {
    return t.size() == config.theta_start.size() && (t - config.theta_start).norm() <= 1e-12 * t.norm();
  });
  if (start_it == config.xi_train.end()) throw Error("run_greedy: theta_start must be a member of the training set");
  if (rb.library_projection().rows() != library.size()) throw Error("run_greedy: RB space has no library attached");

  const Index n_lib = library.size();
  const Vector variances = library.noise_cov_diagonal();
  const std::vector<Vector> pair_points =
      config.criterion == Criterion::beta2 ? pair_candidates(config.xi_train, config.pair_stride) : std::vector<Vector>{};

  GreedyResult result;
  result.set.provenance = config.criterion == Criterion::beta ? Provenance::greedy : Provenance::greedy_beta2;
  std::vector<Index>& selected = result.set.indices;
  std::vector<char> taken(static_cast<std::size_t>(n_lib), 0);
  Matrix cov_rows(0, n_lib);  // noise covariance rows of the selected sensors
  ObservationOperator op;
  double beta = 0.0;
  Vector theta_a = *start_it;
  Vector theta_b = *start_it;

  while (beta < config.beta_target && static_cast<Index>(selected.size()) < config.k_max &&
         static_cast<Index>(selected.size()) < n_lib) {
    const auto start = clock::now();
    GreedyIteration record;

    // Worst-observed reduced state at the current hyper-parameter(s).
    Vector state;
    if (op.empty()) {
      state = principal_state(rb, theta_a, prior);
    } else if (config.criterion == Criterion::beta) {
      state = rb.beta_rb(theta_a, op).minimizer_state;
    } else {
      state = rb.beta_rb_pair(theta_a, theta_b, op).minimizer_state;
    }

    // Best sensor to observe that state.
    const Vector values = rb.library_projection() * state;
    Vector current_data(static_cast<Index>(selected.size()));
    for (std::size_t i = 0; i < selected.size(); ++i) current_data[static_cast<Index>(i)] = values[selected[i]];
    const CandidateScorer scorer(op, current_data);
    std::vector<CandidateScorer::Score> scores(static_cast<std::size_t>(n_lib));
    parallel_for(static_cast<std::size_t>(n_lib), [&](std::size_t k) {
      if (taken[k]) return;
      const Vector cross = cov_rows.col(static_cast<Index>(k));
      scores[k] = scorer.score(values[static_cast<Index>(k)], cross, variances[static_cast<Index>(k)]);
    });
    Index best = -1;
    for (Index k = 0; k < n_lib; ++k) {
      if (taken[static_cast<std::size_t>(k)]) continue;
      if (best < 0) {
        best = k;
        continue;
      }
      const auto& s = scores[static_cast<std::size_t>(k)];
      const auto& b = scores[static_cast<std::size_t>(best)];
      if (s.redundant != b.redundant) {
        if (!s.redundant) best = k;
        continue;
      }
      if (s.squared > b.squared + kTieTolerance * std::abs(b.squared)) best = k;
    }

    if (config.verify_scores) {
      const Index kcur = static_cast<Index>(selected.size());
      Matrix ext_cov(kcur + 1, kcur + 1);
      if (kcur > 0) ext_cov.topLeftCorner(kcur, kcur) = op.cov();
      Vector ext_data(kcur + 1);
      ext_data.head(kcur) = current_data;
      double mismatch = 0.0;
      for (Index k = 0; k < n_lib; ++k) {
        const auto& s = scores[static_cast<std::size_t>(k)];
        if (taken[static_cast<std::size_t>(k)] || s.redundant) continue;
        for (Index i = 0; i < kcur; ++i) {
          ext_cov(i, kcur) = cov_rows(i, k);
          ext_cov(kcur, i) = cov_rows(i, k);
        }
        ext_cov(kcur, kcur) = variances[k];
        ext_data[kcur] = values[k];
        const double dense = dense_extended_score(ext_cov, ext_data);
        mismatch = std::max(mismatch, std::abs(dense - s.squared) / std::max(std::abs(dense), 1e-300));
      }
      record.max_score_mismatch = mismatch;
    }

    selected.push_back(best);
    taken[static_cast<std::size_t>(best)] = 1;
    record.sensor_index = best;
    record.score = std::sqrt(scores[static_cast<std::size_t>(best)].squared);
    const std::array<Index, 1> new_index{best};
    cov_rows.conservativeResize(cov_rows.rows() + 1, Eigen::NoChange);
    cov_rows.row(cov_rows.rows() - 1) = library.noise_cov_rows(new_index);
    op = ObservationOperator(library, selected);

    // Worst training hyper-parameter(s) for the extended operator.
    if (config.criterion == Criterion::beta) {
      std::vector<double> betas(config.xi_train.size());
      parallel_for(betas.size(), [&](std::size_t i) { betas[i] = rb.beta_rb(config.xi_train[i], op).beta; });
      const auto worst = static_cast<std::size_t>(std::min_element(betas.begin(), betas.end()) - betas.begin());
      beta = betas[worst];
      theta_a = config.xi_train[worst];
      theta_b = theta_a;
    } else {
      std::vector<std::pair<std::size_t, std::size_t>> pairs;
      for (std::size_t a = 0; a < pair_points.size(); ++a) {
        for (std::size_t b = a; b < pair_points.size(); ++b) pairs.emplace_back(a, b);
      }
      std::vector<double> betas(pairs.size());
      parallel_for(pairs.size(), [&](std::size_t i) {
        betas[i] = rb.beta_rb_pair(pair_points[pairs[i].first], pair_points[pairs[i].second], op).beta;
      });
      const auto worst = static_cast<std::size_t>(std::min_element(betas.begin(), betas.end()) - betas.begin());
      beta = betas[worst];
      theta_a = pair_points[pairs[worst].first];
      theta_b = pair_points[pairs[worst].second];
    }
    record.worst_theta = theta_a;
    record.worst_theta_second = theta_b;
    record.beta = beta;
    record.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
    result.trace.push_back(std::move(record));
  }
  result.target_reached = beta >= config.beta_target;
  return result;
}

std::vector<SensorSet> random_baseline(const SensorLibrary& library, Index k, Index n_sets, std::uint64_t seed) {
  if (k < 1 || k > library.size()) throw Error("random_baseline: set size out of range");
  std::mt19937_64 rng(seed);
  std::vector<Index> all(static_cast<std::size_t>(library.size()));
  std::iota(all.begin(), all.end(), Index{0});
  std::vector<SensorSet> sets;
  for (Index s = 0; s < n_sets; ++s) sets.push_back({draw_without_replacement(all, k, rng), Provenance::random});
  return sets;
}

std::vector<SensorSet> random_inflow_baseline(const SensorLibrary& library, Index k, Index n_inflow_min, Index n_sets,
                                              std::uint64_t seed) {
  if (k < 1 || k > library.size() || n_inflow_min < 0 || n_inflow_min > k) {
    throw Error("random_inflow_baseline: set sizes out of range");
  }
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& c : library.centers) lowest = std::min(lowest, c.x2);
  std::vector<Index> bottom;
  for (Index i = 0; i < library.size(); ++i) {
    if (std::abs(library.centers[static_cast<std::size_t>(i)].x2 - lowest) < 1e-12) bottom.push_back(i);
  }
  if (static_cast<Index>(bottom.size()) < n_inflow_min) throw Error("random_inflow_baseline: inflow row too short");

  std::mt19937_64 rng(seed);
  std::vector<SensorSet> sets;
  for (Index s = 0; s < n_sets; ++s) {
    std::vector<Index> chosen = draw_without_replacement(bottom, n_inflow_min, rng);
    std::vector<Index> rest;
    for (Index i = 0; i < library.size(); ++i) {
      if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) rest.push_back(i);
    }
    const std::vector<Index> extra = draw_without_replacement(std::move(rest), k - n_inflow_min, rng);
    chosen.insert(chosen.end(), extra.begin(), extra.end());
    sets.push_back({std::move(chosen), Provenance::random_inflow});
  }
  return sets;
}

std::vector<double> chebyshev_nodes(int degree_max) {
  const int count = degree_max + 1;
  std::vector<double> nodes;
  for (int j = 0; j < count; ++j) nodes.push_back(std::cos((2 * j + 1) * std::numbers::pi / (2.0 * count)));
  return nodes;
}

SensorSet chebyshev_reference(const SensorLibrary& library, int degree_max) {
  const Index n = library.grid_n;
  const auto count = static_cast<Index>(degree_max + 1);
  if (count > n) throw Error("chebyshev_reference: library grid is too coarse");
  // Library centres are row-major: index = row * n + column, row 0 nearest the inflow edge.
  const double lo = library.centers.front().x1;
  const double hi = library.centers[static_cast<std::size_t>(n - 1)].x1;
  std::vector<Index> columns;
  for (double t : chebyshev_nodes(degree_max)) {
    const double x1 = lo + 0.5 * (t + 1.0) * (hi - lo);
    Index nearest = 0;
    for (Index c = 1; c < n; ++c) {
      if (std::abs(library.centers[static_cast<std::size_t>(c)].x1 - x1) <
          std::abs(library.centers[static_cast<std::size_t>(nearest)].x1 - x1)) {
        nearest = c;
      }
    }
    columns.push_back(nearest);
  }
  std::sort(columns.begin(), columns.end());
  if (std::adjacent_find(columns.begin(), columns.end()) != columns.end()) {
    throw Error("chebyshev_reference: Chebyshev nodes collapse onto the same library column");
  }
  SensorSet set{{}, Provenance::chebyshev};
  for (Index row = 0; row < count; ++row) {
    for (Index c : columns) set.indices.push_back(row * n + c);
  }
  return set;
}

std::vector<SetEvaluation> evaluate_sensor_sets(const Model& model, const SensorLibrary& library,
                                                const std::vector<SensorSet>& sets,
                                                const std::vector<Vector>& xi_test, double sigma,
                                                const GaussianPrior& prior) {
  if (xi_test.empty()) throw Error("evaluate_sensor_sets: empty test set");
  std::vector<ObservationOperator> ops;
  ops.reserve(sets.size());
  for (const auto& set : sets) ops.emplace_back(library, set.indices);

  const auto n_theta = static_cast<Index>(xi_test.size());
  std::vector<SetEvaluation> out(sets.size());
  for (auto& e : out) {
    e.beta = Vector::Constant(n_theta, std::numeric_limits<double>::quiet_NaN());
    e.trace = Vector::Constant(n_theta, std::numeric_limits<double>::quiet_NaN());
  }
  std::vector<std::vector<std::string>> errors(xi_test.size(), std::vector<std::string>(sets.size()));

  parallel_for(xi_test.size(), [&](std::size_t t) {
    StateSnapshot snap;
    Matrix observed;
    try {
      snap = make_snapshot(model, xi_test[t]);
      observed = library.apply(snap.states);
    } catch (const Error& e) {
      for (auto& msg : errors[t]) msg = e.what();
      return;
    }
    for (std::size_t s = 0; s < sets.size(); ++s) {
      try {
        Matrix ptg(ops[s].size(), observed.cols());
        for (Index r = 0; r < ops[s].size(); ++r) ptg.row(r) = observed.row(ops[s].indices()[static_cast<std::size_t>(r)]);
        const double beta = observability_beta(snap, ptg, ops[s]).beta;
        const double trace = posterior_covariance(ptg, ops[s], sigma, prior).trace();
        out[s].beta[static_cast<Index>(t)] = beta;
        out[s].trace[static_cast<Index>(t)] = trace;
      } catch (const Error& e) {
        errors[t][s] = e.what();
      }
    }
  });

  for (std::size_t s = 0; s < sets.size(); ++s) {
    SetEvaluation& e = out[s];
    double sum_beta = 0.0;
    double sum_trace = 0.0;
    Index ok = 0;
    e.min_beta = std::numeric_limits<double>::infinity();
    e.max_trace = -std::numeric_limits<double>::infinity();
    for (Index t = 0; t < n_theta; ++t) {
      if (!errors[static_cast<std::size_t>(t)][s].empty()) {
        if (e.failures == 0) e.status = "failed: " + errors[static_cast<std::size_t>(t)][s];
        ++e.failures;
        continue;
      }
      sum_beta += e.beta[t];
      sum_trace += e.trace[t];
      e.min_beta = std::min(e.min_beta, e.beta[t]);
      e.max_trace = std::max(e.max_trace, e.trace[t]);
      ++ok;
    }
    if (ok == 0) {
      e.mean_beta = e.mean_trace = e.min_beta = e.max_trace = std::numeric_limits<double>::quiet_NaN();
    } else {
      e.mean_beta = sum_beta / static_cast<double>(ok);
      e.mean_trace = sum_trace / static_cast<double>(ok);
    }
  }
  return out;
}

SetEvaluation evaluate_sensor_set(const Model& model, const SensorLibrary& library, const SensorSet& set,
                                  const std::vector<Vector>& xi_test, double sigma, const GaussianPrior& prior) {
  return evaluate_sensor_sets(model, library, {set}, xi_test, sigma, prior).front();
}

}  // namespace optsens

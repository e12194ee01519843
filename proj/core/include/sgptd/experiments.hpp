#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <sgptd/agent.hpp>
#include <sgptd/envs.hpp>
#include <sgptd/estimators.hpp>
#include <sgptd/trajectory.hpp>

namespace sgptd {

enum class TaskKind { MountainCar, Usv, Uuv, SyntheticPrior };
enum class EstimatorKind { Exact, Sparse, LowRank };

/// Synthetic-data settings: inputs drawn uniformly from a box, latent
/// values from the kernel prior, rewards through the TD map plus noise.
struct SyntheticConfig {
  Index transitions = 100;
  Index dim = 1;
  double input_lo = -5.0;
  double input_hi = 5.0;
  /// Minimum pairwise distance between sampled inputs (0 = unconstrained).
  /// Plain uniform draws occasionally land two inputs close enough that the
  /// covariance spectrum dips to the factorization regularizer, where model
  /// comparisons churn in the last few digits; studies that quote tight
  /// tolerances should keep the design separated instead.
  double min_separation = 0.0;
  std::vector<Index> subset_sizes;  // support sweep; empty = default grid
  int subsets_per_cell = 100;
};

struct RetentionSweepConfig {
  double nu_min = 1e-6;
  double nu_max = 10.0;
  int nu_count = 13;
  int trajectories_per_source = 50;
};

struct BenchConfig {
  std::vector<Index> transition_counts = {100, 250, 500, 1000, 2000};
  std::vector<Index> support_counts = {5, 10, 25};
  int repetitions = 3;
};

struct ExperimentConfig {
  TaskKind task = TaskKind::MountainCar;
  EstimatorKind estimator = EstimatorKind::Sparse;
  ValueMode mode = ValueMode::ActionValue;
  Index support_count = 5;  // M
  double nu = 0.1;
  int episodes = 100;
  std::vector<std::uint64_t> seeds = {0};
  bool optimize_on_fit = false;
  bool landscape = false;

  OptimConfig optimizer;
  std::optional<ModelParams> model;  // empty = per-task defaults
  MountainCarConfig mountain_car;
  UsvConfig usv;
  UuvConfig uuv;
  double epsilon = 0.1;
  Index window_episodes = 20;
  int reoptimize_every = 5;
  Index eval_state_count = 64;

  SyntheticConfig synthetic;
  RetentionSweepConfig retention;
  BenchConfig bench;
  std::filesystem::path out_dir = ".";

  void validate() const;
  /// Model parameters to use: the explicit ones, or defaults sized for the
  /// task and value mode.
  ModelParams resolved_model() const;
  Index input_dim() const;

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& file);
  std::string canonical_json() const;
};

/// FNV-1a hash of the canonical configuration text; stamped into every
/// output file so results can be traced to their settings.
std::uint64_t config_hash(const ExperimentConfig& cfg);

/// CSV sink: a config-hash comment line, a header, then rows.
class CsvFile {
 public:
  CsvFile(const std::filesystem::path& path, std::uint64_t hash,
          std::string_view header);
  void row(const std::vector<std::string>& fields);

 private:
  std::ofstream out_;
};

std::string format_double(double value);  // round-trip exact

/// Worker count for sweep dispatch: the SPARSE_GPTD_THREADS environment
/// variable when set (clamped to at least 1), otherwise the hardware
/// concurrency.
int worker_count();

/// Runs fn(i) for i in [0, n) on the worker pool. Each index owns its
/// output slot, so results are independent of scheduling order.
template <typename Fn>
void parallel_for_index(Index n, Fn&& fn) {
  const int workers =
      static_cast<int>(std::min<Index>(worker_count(), n));
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (Index i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

/// Single-episode draw from the generative reward model on random inputs.
/// A positive min_separation keeps every input pair at least that far apart
/// (rejection sampling; throws when the box cannot hold that many points).
Trajectory sample_prior_trajectory(const ModelParams& params, Index n,
                                   Index dim, double lo, double hi,
                                   std::uint64_t seed,
                                   double min_separation = 0.0);

/// Mountain Car rollout with uniformly random actions, action-value inputs.
Trajectory random_mountain_car_trajectory(const MountainCarConfig& cfg,
                                          std::uint64_t seed);

double pearson(const Vector& a, const Vector& b);

// ---- fit ----

struct FitReport {
  double log_marginal = 0.0;
  double fit_ms = 0.0;
  std::optional<double> retention;
  std::filesystem::path model_file;
};

FitReport cmd_fit(const ExperimentConfig& cfg,
                  const std::filesystem::path& trajectory_file);

void save_model(const ExactPosterior& post, const std::filesystem::path& file);
void save_model(const SparsePosterior& post,
                const std::filesystem::path& file);
void save_model(const LowRankPosterior& post,
                const std::filesystem::path& file);

// ---- compare-approx ----

struct CompareApproxRow {
  Index support_count = 0;
  int subset = 0;
  double sparse_before = 0.0;  // log marginal with the drawn support set
  double sparse_after = 0.0;   // after optimizing the support locations
  double exact = 0.0;
  double ratio_before = 0.0;
  double ratio_after = 0.0;
};

std::vector<CompareApproxRow> run_compare_approx(const ExperimentConfig& cfg);
void cmd_compare_approx(const ExperimentConfig& cfg);

// ---- retention ----

struct RetentionRow {
  std::string source;  // "mountain_car" or "prior"
  double nu = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
};

std::vector<RetentionRow> run_retention(const ExperimentConfig& cfg);
void cmd_retention(const ExperimentConfig& cfg);

// ---- learn ----

struct LearnRow {
  std::uint64_t seed = 0;
  int episode = 0;
  double total_reward = 0.0;
  std::string estimator;
  double wall_ms = 0.0;
};

std::vector<LearnRow> run_learning(const ExperimentConfig& cfg);

/// 50 x 50 grid of predicted state values (max over the action grid) for
/// an exact and a sparse model fitted on the same rollouts with shared,
/// evidence-optimized hyperparameters.
struct LandscapeResult {
  Vector grid_s;
  Vector grid_v;
  Matrix exact_means;   // 50 x 50
  Matrix sparse_means;  // 50 x 50
  double correlation = 0.0;
  ModelParams shared_params;
};

LandscapeResult run_landscape(const ExperimentConfig& cfg,
                              std::uint64_t seed);
void cmd_learn(const ExperimentConfig& cfg);

// ---- bench ----

struct BenchRow {
  std::string estimator;
  Index transitions = 0;
  Index support_count = 0;  // 0 for the exact model
  double fit_ms = 0.0;
  double predict_us = 0.0;
};

std::vector<BenchRow> run_bench(const ExperimentConfig& cfg);
void cmd_bench(const ExperimentConfig& cfg);

}  // namespace sgptd

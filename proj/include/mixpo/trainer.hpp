#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "mixpo/environment.hpp"
#include "mixpo/objectives.hpp"
#include "mixpo/policy.hpp"
#include "mixpo/sampler.hpp"

namespace mixpo {

enum class ScheduleKind { Theorem1, Constant };

struct Schedule {
  ScheduleKind kind = ScheduleKind::Theorem1;
  /// Step size for ScheduleKind::Constant.
  double alpha = 0.0;
};

struct TrainConfig {
  Mode mode = Mode::Method2;
  std::size_t iterations = 300;
  SamplingPlan sampling;
  MixConfig mix;
  std::uint64_t seed = 0;
  Schedule schedule;
  std::size_t sigma_estimate_samples = 20;
  std::size_t lipschitz_probe_count = 20;
  std::uint32_t context_window = 2;
  /// Mean-reward level used for iterations-to-threshold summaries.
  double reward_threshold = 0.5;

  void validate() const;
};

struct IterationRecord {
  std::size_t k = 0;
  double objective = 0.0;
  double j_on = 0.0;
  double j_off = 0.0;
  double j_zero = 0.0;
  double grad_norm_sq = 0.0;
  double min_grad_norm_sq = 0.0;
  /// Exact expected reward of the iterate the batch was drawn from.
  double mean_reward = 0.0;
  /// NaN outside Method2.
  double l1 = 0.0;
  double l2 = 0.0;
  double clamp_frac = 0.0;
  std::size_t degenerate_groups = 0;
  // Sample accounting: trajectories consumed by each objective component and
  // the zero-reward samples set aside by the mode.
  std::size_t used_on = 0;
  std::size_t used_off = 0;
  std::size_t used_zero = 0;
  std::size_t discarded_zero = 0;
  std::size_t sampled_total = 0;
};

struct ScheduleReport {
  ScheduleKind kind = ScheduleKind::Theorem1;
  double alpha = 0.0;
  double c = 0.0;
  double j_opt_proxy = 0.0;
  double j_init = 0.0;
  double lipschitz = 0.0;
  double sigma = 0.0;
  /// Right-hand side of the Theorem 1 bound at the run's K (Theorem1 runs only).
  double bound = 0.0;
};

struct RunMetrics {
  std::vector<IterationRecord> records;
  ScheduleReport schedule;
  double final_reward = 0.0;

  double min_grad_norm_sq() const;
  /// First k with mean_reward >= threshold; records.size() + 1 if never.
  std::size_t iterations_to_threshold(double threshold) const;
};

struct TrainResult {
  PolicyParams params;
  RunMetrics metrics;
};

/// Cross-entropy fit of a logit table toward the accepted sequences, stopped
/// as soon as the exact expected reward reaches `target_success`. Throws
/// GuideTrainingError when the target is unreachable or the budget runs out.
PolicyParams pretrain_guide(const TaskSpec& spec, double target_success, std::size_t budget, std::uint64_t seed,
                            std::uint32_t context_window = 2);

/// alpha = c / sqrt(K), c = sqrt(2 (J* - J0) / (L sigma^2 w_upper)).
double theorem1_learning_rate(double j_opt_proxy, double j_init, double lipschitz_est, double sigma_est,
                              double w_upper, std::size_t iterations);

/// sqrt(2 (J* - J0) L w_upper / (K w_lower)) * sigma.
double theorem1_bound(double j_opt_proxy, double j_init, double lipschitz_est, double sigma_est, double w_lower,
                      double w_upper, std::size_t iterations);

struct SmoothnessEstimate {
  double lipschitz = 0.0;
  double sigma = 0.0;
};

/// Stochastic gradient at `at` on the batch identified by `probe_seed`.
/// The same seed must give the same batch for every evaluation point.
using GradientOracle = std::function<Table(const PolicyParams& at, std::uint64_t probe_seed)>;

/// sigma: max gradient norm at `params` over `sigma_probes` batches.
/// L: max of |g(a) - g(b)| / |a - b| over `lipschitz_probes` random pairs
/// within `radius` of `params`, each pair sharing one batch.
SmoothnessEstimate estimate_smoothness_constants(const PolicyParams& params, const GradientOracle& oracle,
                                                 std::size_t sigma_probes, std::size_t lipschitz_probes,
                                                 std::uint64_t seed, double radius = 0.1);

/// The selected mode's objective on one batch.
ObjectiveReport evaluate_objective(Mode mode, const PolicyParams& params, const PolicyParams& old_params,
                                   const PolicyParams* guide, const SampleBatch& batch, const MixConfig& mix);

/// Oracle that draws batches from `anchor` and evaluates the mode objective at any point.
GradientOracle make_objective_oracle(const TrainConfig& config, const TaskSpec& spec, const PolicyParams& anchor,
                                     const PolicyParams* guide);

using IterationCallback = std::function<void(const IterationRecord&)>;

/// Gradient ascent from the uniform policy. Throws NumericalError when the
/// parameters or the gradient stop being finite.
TrainResult train(const TrainConfig& config, const TaskSpec& spec, const PolicyParams* guide,
                  const IterationCallback& on_iteration = {});

/// Column order: k, objective, j_on, j_off, j_zero, grad_norm_sq,
/// min_grad_norm_sq, mean_reward, l1, l2, clamp_frac, degenerate_groups.
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const IterationRecord& rec);
void write_metrics_csv(std::ostream& out, const RunMetrics& metrics);

struct ModeSummary {
  Mode mode = Mode::Method2;
  std::size_t runs = 0;
  double median_iterations_to_threshold = 0.0;
  double final_reward_q1 = 0.0;
  double final_reward_median = 0.0;
  double final_reward_q3 = 0.0;
  double min_grad_norm_sq_q1 = 0.0;
  double min_grad_norm_sq_median = 0.0;
  double min_grad_norm_sq_q3 = 0.0;
};

struct CompareRun {
  Mode mode;
  std::size_t seed_index;
  std::uint64_t seed;
  std::size_t iterations_to_threshold;
  double final_reward;
  double min_grad_norm_sq;
};

struct CompareResult {
  std::vector<CompareRun> runs;
  std::vector<ModeSummary> summaries;
};

/// Runs every mode in `modes` over `seeds` paired seeds: run i of each mode
/// uses base seed config.seed + i.
CompareResult compare_modes(const TrainConfig& config, const TaskSpec& spec, const PolicyParams& guide,
                            std::size_t seeds,
                            const std::vector<Mode>& modes = {Mode::DapoBaseline, Mode::Method1, Mode::Method2});

/// Linear-interpolation quantile (q in [0, 1]) of an unsorted sample.
double quantile(std::vector<double> values, double q);

}  // namespace mixpo

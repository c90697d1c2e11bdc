#pragma once

// Independent oracles: central finite differences, exhaustive enumeration of
// small tasks, Monte Carlo reward estimates and the estimator-variance
// experiment. None of these share code paths with the analytic gradients.

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "mixpo/environment.hpp"
#include "mixpo/objectives.hpp"
#include "mixpo/policy.hpp"

namespace mixpo {

inline constexpr double kLogprobStep = 1e-5;
inline constexpr double kObjectiveStep = 1e-6;

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_context = 0;
  std::size_t worst_token = 0;
  std::size_t num_entries_checked = 0;
  std::size_t boundary_exclusions = 0;
};

using ScalarObjective = std::function<double(const PolicyParams&)>;

/// (f(theta + h e_i) - f(theta - h e_i)) / (2h) for every entry. Throws
/// std::domain_error naming the entry when f is not finite there.
Table finite_diff_gradient(const ScalarObjective& fn, const PolicyParams& params, double h);

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

/// Entry-wise comparison. `floor` keeps near-zero entries from dominating.
GradCheckReport compare_gradients(const Table& analytic, const Table& numeric, double floor = 1e-6);

enum class ObjectiveKind { On, Off, Mix1, MixMethod2, Mix2 };
std::string_view objective_kind_name(ObjectiveKind k);
inline constexpr ObjectiveKind kAllObjectiveKinds[] = {ObjectiveKind::On, ObjectiveKind::Off, ObjectiveKind::Mix1,
                                                      ObjectiveKind::MixMethod2, ObjectiveKind::Mix2};

struct InstanceShape {
  std::uint32_t vocab_size = 4;
  std::uint32_t num_queries = 2;
  std::uint32_t context_window = 2;
  std::uint32_t max_len = 4;
  std::size_t group_size = 4;
  /// Standard deviation of the random logits.
  double logit_scale = 1.0;
  /// Offsets of theta_old and the guide from theta.
  double old_offset = 0.2;
  double guide_offset = 0.4;
};

/// Random target/old/guide policies plus batches laid out as the sampler
/// would. Rewards are random Bernoulli(1/2) draws so that every objective
/// term sees non-zero advantages.
struct GradCheckInstance {
  PolicyParams params;
  PolicyParams old_params;
  PolicyParams guide;
  MixConfig mix;
  std::vector<Trajectory> on;     // reward > 0, from old_params
  std::vector<Trajectory> zero;   // reward == 0, from old_params
  std::vector<Trajectory> off;    // from guide
  std::vector<double> on_adv;     // per-query on-policy group
  std::vector<double> zero_adv;   // shared baseline over off and zero
  std::vector<double> off_adv_method1;
  std::vector<double> off_adv_shared;
  /// Rejected draws with a ratio within the exclusion distance of a kink.
  std::size_t boundary_exclusions = 0;
};

GradCheckInstance make_random_instance(const InstanceShape& shape, const MixConfig& mix, std::uint64_t seed,
                                       double exclusion = 1e-3);

/// Builds an instance whose shape follows `spec` (vocabulary, queries,
/// max_len); used by the CLI gradient check.
GradCheckInstance make_task_instance(const TaskSpec& spec, std::uint32_t context_window, std::size_t group_size,
                                     const MixConfig& mix, std::uint64_t seed, double exclusion = 1e-3);

/// True when some ratio of the instance sits within `exclusion` of a
/// clip/clamp kink at `params`.
bool near_kink(const GradCheckInstance& inst, const PolicyParams& at, double exclusion);

ObjectiveReport evaluate_instance(ObjectiveKind kind, const GradCheckInstance& inst, const PolicyParams& at);

/// Analytic vs central-difference gradient of one objective. `corrupt`
/// modifies the analytic gradient before comparison (fault injection).
GradCheckReport check_objective_gradient(ObjectiveKind kind, const GradCheckInstance& inst,
                                         double h = kObjectiveStep, double floor = 1e-6,
                                         const std::function<void(Table&)>& corrupt = {});

/// Exact expected reward by walking every generation path (enumeration
/// oracle). Throws CapacityError above `max_paths` paths per query.
double enumerate_expected_reward(const TaskSpec& spec, const PolicyParams& params, std::size_t max_paths = 20'000'000);

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t samples = 0;
};

/// Mean reward over `samples` trajectories, queries taken round-robin.
MonteCarloEstimate monte_carlo_reward(const TaskSpec& spec, const PolicyParams& params, std::size_t samples,
                                      std::uint64_t seed);

struct VarianceRatioOptions {
  /// Multiplies every advantage.
  double advantage_scale = 1.0;
  /// Gaussian offset applied to the target logits (0 = target equals guide).
  double target_perturbation = 0.0;
  /// Seed of that offset; independent of the sampling seed.
  std::uint64_t perturbation_seed = 0;
  /// Entries with unscaled variance below floor * max variance are skipped.
  double relative_variance_floor = 1e-8;
};

struct VarianceRatioSummary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  std::size_t entries = 0;
};

/// Per-entry Var(f-scaled estimator) / Var(r_hat * grad log pi * B) over
/// `n_samples` single-trajectory estimates drawn from the guide.
VarianceRatioSummary variance_ratio_experiment(const PolicyParams& guide, const TaskSpec& spec, double gamma,
                                               std::size_t n_samples, std::uint64_t seed,
                                               const VarianceRatioOptions& options = {});

}  // namespace mixpo

#pragma once

#include <span>
#include <utility>
#include <vector>

namespace mixpo {

/// Group-standardized advantages, one value per trajectory.
struct AdvantageSet {
  std::vector<double> values;
  double group_mean = 0.0;
  /// Population (divide-by-N) standard deviation.
  double group_std = 0.0;
  /// All rewards in the group were equal; values are then all zero.
  bool degenerate = false;
};

/// (R_i - mean) / std over the on-policy group. Needs at least two rewards.
AdvantageSet on_policy_advantages(std::span<const double> rewards);

/// Same normalization over the off-policy group alone.
AdvantageSet off_policy_advantages_method1(std::span<const double> rewards);

/// Mean and std computed once over the pooled off-policy and zero-reward
/// samples; both returned sets share that baseline.
std::pair<AdvantageSet, AdvantageSet> shared_baseline_advantages(std::span<const double> off_rewards,
                                                                 std::span<const double> zero_rewards);

}  // namespace mixpo

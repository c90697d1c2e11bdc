#include "mixpo/advantages.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mixpo {

namespace {

struct GroupStats {
  double mean = 0.0;
  double std = 0.0;
  bool degenerate = false;
};

GroupStats pooled_stats(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size() + b.size();
  if (n < 2) throw std::invalid_argument("advantage group needs at least two rewards");
  double lo = a.empty() ? b.front() : a.front();
  double hi = lo;
  double sum = 0.0;
  for (auto part : {a, b})
    for (double r : part) {
      if (!std::isfinite(r)) throw std::invalid_argument("reward is not finite");
      sum += r;
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
  GroupStats s;
  s.mean = sum / static_cast<double>(n);
  // Equality test on the raw rewards; a variance test would be fooled by rounding.
  if (lo == hi) {
    s.degenerate = true;
    return s;
  }
  double ss = 0.0;
  for (auto part : {a, b})
    for (double r : part) ss += (r - s.mean) * (r - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(n));
  return s;
}

AdvantageSet standardize(std::span<const double> rewards, const GroupStats& s) {
  AdvantageSet out;
  out.group_mean = s.mean;
  out.group_std = s.std;
  out.degenerate = s.degenerate;
  out.values.assign(rewards.size(), 0.0);
  if (!s.degenerate)
    for (std::size_t i = 0; i < rewards.size(); ++i) out.values[i] = (rewards[i] - s.mean) / s.std;
  return out;
}

}  // namespace

AdvantageSet on_policy_advantages(std::span<const double> rewards) {
  return standardize(rewards, pooled_stats(rewards, {}));
}

AdvantageSet off_policy_advantages_method1(std::span<const double> rewards) {
  return standardize(rewards, pooled_stats(rewards, {}));
}

std::pair<AdvantageSet, AdvantageSet> shared_baseline_advantages(std::span<const double> off_rewards,
                                                                 std::span<const double> zero_rewards) {
  const GroupStats s = pooled_stats(off_rewards, zero_rewards);
  return {standardize(off_rewards, s), standardize(zero_rewards, s)};
}

}  // namespace mixpo

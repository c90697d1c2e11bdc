#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "mixpo/advantages.hpp"
#include "mixpo/environment.hpp"
#include "mixpo/objectives.hpp"
#include "mixpo/policy.hpp"

namespace mixpo {

enum class Mode { Method1, Method2, DapoBaseline };

std::string_view mode_name(Mode m);
/// Accepts "Method1", "Method2", "DapoBaseline" (case-insensitive).
Mode parse_mode(std::string_view text);

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
};

/// Where one query's samples landed in the batch lists.
struct QueryGroup {
  std::uint32_t query_id = 0;
  IndexRange on_nonzero;
  IndexRange on_zero;
  IndexRange off;
  bool on_degenerate = false;
  /// Off-policy group (Method1) or shared off/zero pool (Method2).
  bool off_degenerate = false;
  /// On-policy resampling attempts beyond the first (DapoBaseline only).
  std::size_t retries = 0;
};

struct SampleCounts {
  std::size_t on_nonzero = 0;
  std::size_t on_zero = 0;
  std::size_t off = 0;
  friend bool operator==(const SampleCounts&, const SampleCounts&) = default;
};

struct SampleBatch {
  Mode mode = Mode::Method2;
  std::vector<Trajectory> on_nonzero;
  std::vector<Trajectory> on_zero;
  std::vector<Trajectory> off;
  /// Advantages aligned with each list. on_nonzero values come from the full
  /// per-query on-policy group, as do on_zero values outside Method2. In
  /// Method2 the off and on_zero lists share one baseline per query.
  std::vector<double> on_nonzero_advantages;
  std::vector<double> on_zero_advantages;
  std::vector<double> off_advantages;
  std::vector<QueryGroup> query_groups;
  SampleCounts counts;
  /// Zero-reward on-policy samples are kept for accounting but excluded from objectives.
  bool zero_discarded = true;

  BatchView on_view() const { return {on_nonzero, on_nonzero_advantages}; }
  BatchView off_view() const { return {off, off_advantages}; }
  BatchView zero_view() const { return {on_zero, on_zero_advantages}; }

  std::size_t degenerate_groups() const;
  /// Every list invariant (rewards, source tags, counts, ranges).
  void validate() const;
};

struct SamplingPlan {
  std::size_t group_size = 8;
  /// 0 means "same as group_size".
  std::size_t off_group_size = 0;
  /// DapoBaseline resampling cap for degenerate on-policy groups.
  std::size_t max_retries = 10;
};

/// Samples every query's on-policy group from `params` and (outside
/// DapoBaseline) its off-policy group from `guide`. Deterministic in `seed`.
/// `guide` may be null only in DapoBaseline mode.
SampleBatch collect_batch(const PolicyParams& params, const PolicyParams* guide, const TaskSpec& spec,
                          const SamplingPlan& plan, Mode mode, std::uint64_t seed);

SampleBatch collect_batch(const PolicyParams& params, const PolicyParams* guide, const TaskSpec& spec,
                          std::size_t group_size, Mode mode, std::uint64_t seed);

}  // namespace mixpo

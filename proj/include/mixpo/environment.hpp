#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mixpo/policy.hpp"

namespace mixpo {

/// Sparse binary-reward sequence task.
struct TaskSpec {
  Vocab vocab{8};
  std::vector<Query> queries;
  /// query id -> accepted emitted sequences (end-of-sequence excluded).
  std::map<std::uint32_t, std::set<std::vector<TokenId>>> target_map;
  std::uint32_t max_len = 6;

  /// Throws std::invalid_argument on any invariant violation.
  void validate() const;

  /// One past the largest query id; the row-block count of a matching policy.
  std::uint32_t num_query_slots() const;

  const Query& query(std::uint32_t id) const;
};

/// Vocab 8, four queries, one accepted length-4 sequence each, max_len 6.
TaskSpec default_task();

/// Zero-logit (uniform) policy shaped for `spec`.
PolicyParams uniform_policy(const TaskSpec& spec, std::uint32_t context_window = 2);

/// Emitted tokens of a trajectory: its tokens with a trailing end-of-sequence removed.
std::vector<TokenId> emitted_tokens(const Vocab& vocab, std::span<const TokenId> tokens);

/// 1.0 if the emitted sequence is accepted for the trajectory's query, else 0.0.
double reward(const TaskSpec& spec, const Trajectory& traj);

struct ExpectedReward {
  /// Exact expected reward of the evaluated policy, averaged uniformly over queries.
  double expected = 0.0;
  /// Supremum over deterministic policies with the same context indexing.
  double best_deterministic = 0.0;
};

/// Exact evaluation; throws CapacityError when num_contexts * vocab > 1e6.
ExpectedReward optimal_expected_reward(const TaskSpec& spec, const PolicyParams& params);

/// Shorthand for optimal_expected_reward(...).expected.
double expected_reward(const TaskSpec& spec, const PolicyParams& params);

/// Per-query exact success probability.
double query_success_probability(const TaskSpec& spec, const PolicyParams& params, const Query& query);

/// Task file (YAML):
///
///   vocab_size: 8
///   max_len: 6
///   queries:
///     - id: 0
///       context: []          # optional
///       accepted: [[1, 4, 2, 6]]
///
/// Unknown keys are rejected; errors carry the offending line.
TaskSpec load_task(const std::filesystem::path& path);
TaskSpec parse_task(const std::string& text);
std::string format_task(const TaskSpec& spec);

}  // namespace mixpo

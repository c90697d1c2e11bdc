#pragma once

// Tabular autoregressive softmax policy over a finite vocabulary.
//
// A decoding state ("context") is the pair (query id, last `context_window`
// tokens of query context ++ generated history). Missing positions at the
// start of a sequence are filled with a pad symbol, so each window slot takes
// one of vocab_size + 1 values. The logit table has one row per context.

#include <cstdint>
#include <span>
#include <vector>

#include "mixpo/table.hpp"

namespace mixpo {

using TokenId = std::uint32_t;

class Vocab {
 public:
  explicit Vocab(std::uint32_t size);
  std::uint32_t size() const noexcept { return size_; }
  /// Reserved end-of-sequence id, always the last token.
  TokenId eos() const noexcept { return size_ - 1; }
  bool contains(TokenId t) const noexcept { return t < size_; }
  friend bool operator==(const Vocab&, const Vocab&) = default;

 private:
  std::uint32_t size_;
};

struct Query {
  std::uint32_t id = 0;
  std::vector<TokenId> context_tokens;
  friend bool operator==(const Query&, const Query&) = default;
};

enum class Source { OnPolicy, OffPolicy };

struct Trajectory {
  Query query;
  std::vector<TokenId> tokens;
  double reward = 0.0;
  std::vector<double> behavior_logprobs;
  Source source = Source::OnPolicy;

  std::size_t length() const noexcept { return tokens.size(); }
};

class PolicyParams {
 public:
  /// All-zero logits (uniform policy).
  PolicyParams(Vocab vocab, std::uint32_t num_queries, std::uint32_t context_window = 2);
  /// Adopts `table`; its shape must match the indexing scheme.
  PolicyParams(Vocab vocab, std::uint32_t num_queries, std::uint32_t context_window, Table table);

  const Vocab& vocab() const noexcept { return vocab_; }
  std::uint32_t num_queries() const noexcept { return num_queries_; }
  std::uint32_t context_window() const noexcept { return context_window_; }
  std::size_t num_contexts() const noexcept { return table_.rows(); }
  std::size_t contexts_per_query() const noexcept { return contexts_per_query_; }

  const Table& table() const noexcept { return table_; }
  Table& table() noexcept { return table_; }

  /// Row index of the state reached after `history` under `query`.
  std::size_t context_index(const Query& query, std::span<const TokenId> history) const;

  std::span<const double> logits(std::size_t context) const { return table_.row(context); }

  /// Same vocabulary, query count and window.
  bool same_shape(const PolicyParams& o) const noexcept {
    return vocab_ == o.vocab_ && num_queries_ == o.num_queries_ &&
           context_window_ == o.context_window_;
  }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

 private:
  Vocab vocab_;
  std::uint32_t num_queries_;
  std::uint32_t context_window_;
  std::size_t contexts_per_query_;
  Table table_;
};

/// Numerically stable softmax of one logit row.
std::vector<double> softmax(std::span<const double> logits);

/// log softmax(logits[context])[token].
double token_logprob(const PolicyParams& params, const Query& query,
                     std::span<const TokenId> history, TokenId token);

/// Per-step log-probabilities of every token in `traj` under `params`.
std::vector<double> step_logprobs(const PolicyParams& params, const Trajectory& traj);

/// Context row visited at each step of `traj`.
std::vector<std::size_t> step_contexts(const PolicyParams& params, const Trajectory& traj);

double trajectory_logprob(const PolicyParams& params, const Trajectory& traj);

/// grad += scale * d/dlogits log pi(token | context); touches one row.
void add_score(const PolicyParams& params, std::size_t context, TokenId token, double scale,
               Table& grad);

/// Analytic gradient of trajectory_logprob w.r.t. the logit table.
Table grad_trajectory_logprob(const PolicyParams& params, const Trajectory& traj);

/// Samples until end-of-sequence or `max_len` tokens. Deterministic in
/// (params, query, seed).
Trajectory sample_trajectory(const PolicyParams& params, const Query& query, std::uint32_t max_len,
                             std::uint64_t seed, Source source = Source::OnPolicy);

/// Checks token ids and length invariants; throws std::invalid_argument.
void validate_trajectory(const PolicyParams& params, const Trajectory& traj);

}  // namespace mixpo

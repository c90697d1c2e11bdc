#include "mixpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "mixpo/rng.hpp"

namespace mixpo {

Vocab::Vocab(std::uint32_t size) : size_(size) {
  if (size < 2) throw std::invalid_argument("vocabulary needs at least one content token plus end-of-sequence");
}

namespace {

std::size_t checked_contexts_per_query(const Vocab& vocab, std::uint32_t window) {
  if (window == 0) throw std::invalid_argument("context window must be positive");
  const std::size_t base = static_cast<std::size_t>(vocab.size()) + 1;
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < window; ++i) {
    if (n > std::numeric_limits<std::size_t>::max() / base)
      throw std::invalid_argument("context window too large for vocabulary");
    n *= base;
  }
  return n;
}

double log_softmax_at(std::span<const double> logits, TokenId token) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return logits[token] - mx - std::log(z);
}

}  // namespace

PolicyParams::PolicyParams(Vocab vocab, std::uint32_t num_queries, std::uint32_t context_window)
    : vocab_(vocab),
      num_queries_(num_queries),
      context_window_(context_window),
      contexts_per_query_(checked_contexts_per_query(vocab, context_window)),
      table_(static_cast<std::size_t>(num_queries) * contexts_per_query_, vocab.size(), 0.0) {
  if (num_queries == 0) throw std::invalid_argument("policy needs at least one query");
}

PolicyParams::PolicyParams(Vocab vocab, std::uint32_t num_queries, std::uint32_t context_window,
                           Table table)
    : PolicyParams(vocab, num_queries, context_window) {
  if (!table.same_shape(table_))
    throw std::invalid_argument("logit table shape does not match vocabulary/window/query count");
  if (!table.all_finite()) throw std::invalid_argument("logit table has non-finite entries");
  table_ = std::move(table);
}

std::size_t PolicyParams::context_index(const Query& query, std::span<const TokenId> history) const {
  if (query.id >= num_queries_)
    throw std::invalid_argument("query id " + std::to_string(query.id) + " out of range");
  const std::size_t base = static_cast<std::size_t>(vocab_.size()) + 1;
  const std::size_t pad = vocab_.size();
  const std::size_t ctx_len = query.context_tokens.size();
  const std::size_t total = ctx_len + history.size();

  std::size_t index = 0;
  std::size_t place = 1;
  // Slot 0 holds the most recent token.
  for (std::uint32_t j = 0; j < context_window_; ++j) {
    std::size_t slot = pad;
    if (j < total) {
      const std::size_t pos = total - 1 - j;
      const TokenId t = pos >= ctx_len ? history[pos - ctx_len] : query.context_tokens[pos];
      if (!vocab_.contains(t)) throw std::invalid_argument("token id " + std::to_string(t) + " out of vocabulary");
      slot = t;
    }
    index += slot * place;
    place *= base;
  }
  return static_cast<std::size_t>(query.id) * contexts_per_query_ + index;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

double token_logprob(const PolicyParams& params, const Query& query,
                     std::span<const TokenId> history, TokenId token) {
  if (!params.vocab().contains(token))
    throw std::invalid_argument("token id " + std::to_string(token) + " out of vocabulary");
  return log_softmax_at(params.logits(params.context_index(query, history)), token);
}

std::vector<std::size_t> step_contexts(const PolicyParams& params, const Trajectory& traj) {
  std::vector<std::size_t> out;
  out.reserve(traj.tokens.size());
  const std::span<const TokenId> tokens(traj.tokens);
  for (std::size_t t = 0; t < tokens.size(); ++t)
    out.push_back(params.context_index(traj.query, tokens.first(t)));
  return out;
}

std::vector<double> step_logprobs(const PolicyParams& params, const Trajectory& traj) {
  std::vector<double> out;
  out.reserve(traj.tokens.size());
  const std::span<const TokenId> tokens(traj.tokens);
  for (std::size_t t = 0; t < tokens.size(); ++t)
    out.push_back(token_logprob(params, traj.query, tokens.first(t), tokens[t]));
  return out;
}

double trajectory_logprob(const PolicyParams& params, const Trajectory& traj) {
  double total = 0.0;
  for (double lp : step_logprobs(params, traj)) total += lp;
  return total;
}

void add_score(const PolicyParams& params, std::size_t context, TokenId token, double scale,
               Table& grad) {
  const std::vector<double> p = softmax(params.logits(context));
  auto row = grad.row(context);
  for (std::size_t a = 0; a < p.size(); ++a) row[a] -= scale * p[a];
  row[token] += scale;
}

Table grad_trajectory_logprob(const PolicyParams& params, const Trajectory& traj) {
  Table grad(params.num_contexts(), params.vocab().size());
  const auto contexts = step_contexts(params, traj);
  for (std::size_t t = 0; t < contexts.size(); ++t) add_score(params, contexts[t], traj.tokens[t], 1.0, grad);
  return grad;
}

Trajectory sample_trajectory(const PolicyParams& params, const Query& query, std::uint32_t max_len,
                             std::uint64_t seed, Source source) {
  if (max_len == 0) throw std::invalid_argument("max_len must be at least 1");
  Rng rng(seed);
  Trajectory traj;
  traj.query = query;
  traj.source = source;
  const TokenId eos = params.vocab().eos();
  while (traj.tokens.size() < max_len) {
    const std::size_t ctx = params.context_index(query, traj.tokens);
    const auto logits = params.logits(ctx);
    const std::vector<double> p = softmax(logits);
    const double u = rng.uniform();
    // Inverse CDF; if rounding leaves cum < 1 the last supported token wins.
    TokenId chosen = 0;
    double cum = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
      if (p[a] <= 0.0) continue;
      chosen = static_cast<TokenId>(a);
      cum += p[a];
      if (u < cum) break;
    }
    traj.tokens.push_back(chosen);
    traj.behavior_logprobs.push_back(log_softmax_at(logits, chosen));
    if (chosen == eos) break;
  }
  return traj;
}

void validate_trajectory(const PolicyParams& params, const Trajectory& traj) {
  if (traj.tokens.empty()) throw std::invalid_argument("trajectory must contain at least one token");
  if (traj.tokens.size() != traj.behavior_logprobs.size())
    throw std::invalid_argument("behavior_logprobs length differs from token count");
  if (!std::isfinite(traj.reward)) throw std::invalid_argument("trajectory reward is not finite");
  for (TokenId t : traj.tokens)
    if (!params.vocab().contains(t)) throw std::invalid_argument("token id " + std::to_string(t) + " out of vocabulary");
  for (std::size_t s = 0; s + 1 < traj.tokens.size(); ++s)
    if (traj.tokens[s] == params.vocab().eos()) throw std::invalid_argument("end-of-sequence before the last token");
  for (TokenId t : traj.query.context_tokens)
    if (!params.vocab().contains(t)) throw std::invalid_argument("query context token out of vocabulary");
  if (traj.query.id >= params.num_queries()) throw std::invalid_argument("query id out of range");
}

}  // namespace mixpo

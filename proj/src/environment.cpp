#include "mixpo/environment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "mixpo/errors.hpp"
#include "yaml_util.hpp"

namespace mixpo {

void TaskSpec::validate() const {
  if (max_len == 0) throw std::invalid_argument("max_len must be positive");
  if (queries.empty()) throw std::invalid_argument("task has no queries");
  std::set<std::uint32_t> ids;
  for (const auto& q : queries) {
    if (!ids.insert(q.id).second) throw std::invalid_argument("duplicate query id " + std::to_string(q.id));
    for (TokenId t : q.context_tokens)
      if (!vocab.contains(t)) throw std::invalid_argument("query context token out of vocabulary");
    if (!target_map.contains(q.id))
      throw std::invalid_argument("query id " + std::to_string(q.id) + " has no target_map entry");
  }
  for (const auto& [id, accepted] : target_map) {
    if (!ids.contains(id)) throw std::invalid_argument("target_map names unknown query id " + std::to_string(id));
    for (const auto& seq : accepted) {
      if (seq.size() > max_len) throw std::invalid_argument("accepted sequence longer than max_len");
      for (TokenId t : seq)
        if (t >= vocab.eos())
          throw std::invalid_argument("accepted sequences may only contain content tokens");
    }
  }
}

std::uint32_t TaskSpec::num_query_slots() const {
  std::uint32_t n = 0;
  for (const auto& q : queries) n = std::max(n, q.id + 1);
  return n;
}

const Query& TaskSpec::query(std::uint32_t id) const {
  for (const auto& q : queries)
    if (q.id == id) return q;
  throw std::invalid_argument("unknown query id " + std::to_string(id));
}

TaskSpec default_task() {
  TaskSpec spec;
  spec.vocab = Vocab(8);
  spec.max_len = 6;
  const std::vector<std::vector<TokenId>> targets = {
      {1, 4, 2, 6}, {5, 0, 3, 1}, {2, 2, 6, 4}, {3, 6, 0, 5}};
  for (std::uint32_t q = 0; q < targets.size(); ++q) {
    spec.queries.push_back(Query{q, {}});
    spec.target_map[q] = {targets[q]};
  }
  spec.validate();
  return spec;
}

PolicyParams uniform_policy(const TaskSpec& spec, std::uint32_t context_window) {
  return PolicyParams(spec.vocab, spec.num_query_slots(), context_window);
}

std::vector<TokenId> emitted_tokens(const Vocab& vocab, std::span<const TokenId> tokens) {
  std::vector<TokenId> out(tokens.begin(), tokens.end());
  if (!out.empty() && out.back() == vocab.eos()) out.pop_back();
  return out;
}

double reward(const TaskSpec& spec, const Trajectory& traj) {
  const auto it = spec.target_map.find(traj.query.id);
  if (it == spec.target_map.end())
    throw std::invalid_argument("unknown query id " + std::to_string(traj.query.id));
  return it->second.contains(emitted_tokens(spec.vocab, traj.tokens)) ? 1.0 : 0.0;
}

namespace {

void check_capacity(const PolicyParams& params) {
  const double cells = static_cast<double>(params.num_contexts()) * params.vocab().size();
  if (cells > 1e6) throw CapacityError("state space too large for exact evaluation");
}

/// The full token sequence that produces `seq` as an accepted emission.
std::vector<TokenId> with_terminator(const TaskSpec& spec, const std::vector<TokenId>& seq) {
  std::vector<TokenId> full = seq;
  if (full.size() < spec.max_len) full.push_back(spec.vocab.eos());
  return full;
}

/// A deterministic policy can emit `full` iff no context must map to two tokens.
bool deterministically_reachable(const PolicyParams& params, const Query& q, const std::vector<TokenId>& full) {
  std::unordered_map<std::size_t, TokenId> choice;
  const std::span<const TokenId> tokens(full);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::size_t ctx = params.context_index(q, tokens.first(t));
    auto [it, inserted] = choice.emplace(ctx, tokens[t]);
    if (!inserted && it->second != tokens[t]) return false;
  }
  return true;
}

}  // namespace

double query_success_probability(const TaskSpec& spec, const PolicyParams& params, const Query& query) {
  const auto it = spec.target_map.find(query.id);
  if (it == spec.target_map.end()) throw std::invalid_argument("unknown query id " + std::to_string(query.id));
  // Distinct accepted sequences are disjoint events.
  double total = 0.0;
  for (const auto& seq : it->second) {
    const auto full = with_terminator(spec, seq);
    double logp = 0.0;
    const std::span<const TokenId> tokens(full);
    for (std::size_t t = 0; t < tokens.size(); ++t) logp += token_logprob(params, query, tokens.first(t), tokens[t]);
    total += std::exp(logp);
  }
  return total;
}

ExpectedReward optimal_expected_reward(const TaskSpec& spec, const PolicyParams& params) {
  check_capacity(params);
  if (params.vocab() != spec.vocab) throw std::invalid_argument("policy vocabulary differs from task");
  ExpectedReward out;
  for (const auto& q : spec.queries) {
    out.expected += query_success_probability(spec, params, q);
    const auto& accepted = spec.target_map.at(q.id);
    const bool reachable = std::any_of(accepted.begin(), accepted.end(), [&](const auto& seq) {
      return deterministically_reachable(params, q, with_terminator(spec, seq));
    });
    out.best_deterministic += reachable ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(spec.queries.size());
  out.expected /= n;
  out.best_deterministic /= n;
  return out;
}

double expected_reward(const TaskSpec& spec, const PolicyParams& params) {
  return optimal_expected_reward(spec, params).expected;
}

namespace {

std::uint32_t as_u32(const YAML::Node& node, const std::string& what) {
  const auto v = yaml::as<long long>(node, what);
  if (v < 0 || v > static_cast<long long>(UINT32_MAX))
    throw ParseError("'" + what + "' must be a non-negative 32-bit integer", yaml::line_of(node));
  return static_cast<std::uint32_t>(v);
}

std::vector<TokenId> token_list(const YAML::Node& node, const std::string& what) {
  if (!node.IsSequence()) throw ParseError("'" + what + "' must be a list of token ids", yaml::line_of(node));
  std::vector<TokenId> out;
  for (const auto& t : node) out.push_back(as_u32(t, what));
  return out;
}

}  // namespace

TaskSpec parse_task(const std::string& text) {
  const YAML::Node root = yaml::parse_document(text);
  yaml::reject_unknown_keys(root, {"vocab_size", "max_len", "queries"});
  TaskSpec spec;
  const auto vocab_node = yaml::require(root, "vocab_size");
  const auto vocab_size = as_u32(vocab_node, "vocab_size");
  if (vocab_size < 2) throw ParseError("vocab_size must be at least 2", yaml::line_of(vocab_node));
  spec.vocab = Vocab(vocab_size);
  spec.max_len = as_u32(yaml::require(root, "max_len"), "max_len");

  const auto queries = yaml::require(root, "queries");
  if (!queries.IsSequence()) throw ParseError("'queries' must be a list", yaml::line_of(queries));
  for (const auto& qn : queries) {
    yaml::require_map(qn, "query entry");
    yaml::reject_unknown_keys(qn, {"id", "context", "accepted"});
    Query q;
    q.id = as_u32(yaml::require(qn, "id"), "id");
    if (qn["context"]) q.context_tokens = token_list(qn["context"], "context");
    const auto acc = yaml::require(qn, "accepted");
    if (!acc.IsSequence()) throw ParseError("'accepted' must be a list of sequences", yaml::line_of(acc));
    auto& accepted = spec.target_map[q.id];
    for (const auto& seq : acc) accepted.insert(token_list(seq, "accepted"));
    spec.queries.push_back(std::move(q));
    try {
      spec.validate();
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), yaml::line_of(qn));
    }
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), yaml::line_of(root));
  }
  return spec;
}

TaskSpec load_task(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open task file " + path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_task(ss.str());
}

std::string format_task(const TaskSpec& spec) {
  std::ostringstream out;
  auto list = [&](const std::vector<TokenId>& v) {
    out << '[';
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? ", " : "") << v[i];
    out << ']';
  };
  out << "vocab_size: " << spec.vocab.size() << "\nmax_len: " << spec.max_len << "\nqueries:\n";
  for (const auto& q : spec.queries) {
    out << "  - id: " << q.id << "\n    context: ";
    list(q.context_tokens);
    out << "\n    accepted:\n";
    for (const auto& seq : spec.target_map.at(q.id)) {
      out << "      - ";
      list(seq);
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace mixpo

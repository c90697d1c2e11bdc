#include "doctest.h"

#include <cmath>
#include <sstream>

#include "mixpo/checkpoint.hpp"
#include "mixpo/rng.hpp"
#include "mixpo/verification.hpp"

using namespace mixpo;

namespace {

PolicyParams random_params(std::uint32_t vocab, std::uint32_t queries, std::uint64_t seed, double scale = 1.0) {
  PolicyParams p(Vocab(vocab), queries, 2);
  Rng rng(seed);
  for (double& v : p.table().flat()) v = scale * rng.normal();
  return p;
}

Trajectory make_traj(std::uint32_t query, std::vector<TokenId> tokens) {
  Trajectory t;
  t.query.id = query;
  t.tokens = std::move(tokens);
  return t;
}

}  // namespace

TEST_CASE("context indexing") {
  PolicyParams p(Vocab(4), 3, 2);
  CHECK(p.contexts_per_query() == 25);
  CHECK(p.num_contexts() == 75);
  Query q{1, {}};
  const std::vector<TokenId> h1{2}, h2{0, 2}, h3{3, 0, 2};
  CHECK(p.context_index(q, {}) != p.context_index(q, h1));
  CHECK(p.context_index(q, h2) == p.context_index(q, h3));
  CHECK(p.context_index(q, {}) / 25 == 1);
  Query with_ctx{1, {0}};
  CHECK(p.context_index(with_ctx, h1) == p.context_index(q, h2));
  CHECK_THROWS(p.context_index(Query{3, {}}, {}));
}

TEST_CASE("token logprob examples") {
  PolicyParams p(Vocab(4), 1, 2);
  Query q{0, {}};
  CHECK(token_logprob(p, q, {}, 2) == doctest::Approx(std::log(0.25)).epsilon(1e-14));
  const auto ctx = p.context_index(q, {});
  for (double& v : p.table().row(ctx)) v = 1.0;
  CHECK(token_logprob(p, q, {}, 2) == doctest::Approx(std::log(0.25)).epsilon(1e-14));
  p.table()(ctx, 0) = 2.0;
  p.table()(ctx, 1) = p.table()(ctx, 2) = p.table()(ctx, 3) = 0.0;
  CHECK(token_logprob(p, q, {}, 0) == doctest::Approx(-0.34075295391313104).epsilon(1e-14));
}

TEST_CASE("trajectory logprob") {
  PolicyParams uniform(Vocab(4), 2, 2);
  CHECK(trajectory_logprob(uniform, make_traj(1, {0, 1, 3})) == doctest::Approx(3 * std::log(0.25)));
  const PolicyParams p = random_params(4, 2, 5);
  const auto single = make_traj(0, {2});
  CHECK(trajectory_logprob(p, single) == doctest::Approx(token_logprob(p, single.query, {}, 2)).epsilon(1e-14));

  // Brute-force product of per-step softmax probabilities.
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto t = sample_trajectory(p, Query{static_cast<std::uint32_t>(trial % 2), {}}, 5, rng.next_u64());
    double prod = 1.0;
    for (std::size_t s = 0; s < t.tokens.size(); ++s) {
      const std::span<const TokenId> hist(t.tokens.data(), s);
      const auto row = p.logits(p.context_index(t.query, hist));
      double z = 0.0;
      for (double v : row) z += std::exp(v);
      prod *= std::exp(row[t.tokens[s]]) / z;
    }
    CHECK(trajectory_logprob(p, t) == doctest::Approx(std::log(prod)).epsilon(1e-12));
  }
}

TEST_CASE("score function") {
  PolicyParams uniform(Vocab(4), 1, 2);
  const auto g = grad_trajectory_logprob(uniform, make_traj(0, {0}));
  const auto row = g.row(uniform.context_index(Query{0, {}}, {}));
  CHECK(row[0] == doctest::Approx(0.75));
  CHECK(row[1] == doctest::Approx(-0.25));
  CHECK(row[2] == doctest::Approx(-0.25));
  CHECK(row[3] == doctest::Approx(-0.25));
  CHECK(g.norm() == doctest::Approx(std::sqrt(0.75)));

  // The window forgets history, so tokens 0 and 1 after "2 2" revisit one row.
  const auto t = make_traj(0, {2, 2, 0, 2, 2, 1});
  const auto contexts = step_contexts(uniform, t);
  CHECK(contexts[2] == contexts[5]);
  Table expected(uniform.num_contexts(), 4);
  for (std::size_t s = 0; s < t.tokens.size(); ++s) add_score(uniform, contexts[s], t.tokens[s], 1.0, expected);
  CHECK(grad_trajectory_logprob(uniform, t) == expected);
  CHECK(expected(contexts[2], 0) == doctest::Approx(0.5));
  CHECK(expected(contexts[2], 1) == doctest::Approx(0.5));
}

TEST_CASE("score function matches finite differences") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const PolicyParams p = random_params(4, 2, 100 + trial);
    const auto t = sample_trajectory(p, Query{static_cast<std::uint32_t>(trial % 2), {}}, 4, rng.next_u64());
    const Table numeric =
        finite_diff_gradient([&](const PolicyParams& at) { return trajectory_logprob(at, t); }, p, kLogprobStep);
    const auto report = compare_gradients(grad_trajectory_logprob(p, t), numeric, 1e-4);
    CHECK(report.max_rel_error < 1e-6);
  }
}

TEST_CASE("expected score is zero") {
  const PolicyParams p = random_params(3, 1, 9, 0.5);
  const Query q{0, {}};
  Table mean(p.num_contexts(), 3);
  constexpr int n = 100000;
  for (int i = 0; i < n; ++i) mean.axpy(1.0 / n, grad_trajectory_logprob(p, sample_trajectory(p, q, 3, derive_seed(1, {static_cast<std::uint64_t>(i)}))));
  for (double v : mean.flat()) CHECK(std::abs(v) < 0.01);
}

TEST_CASE("sampling") {
  PolicyParams det(Vocab(4), 1, 2);
  for (double& v : det.table().flat()) v = 0.0;
  for (std::size_t c = 0; c < det.num_contexts(); ++c) det.table()(c, c % 3) = 1e6;
  const Query q{0, {}};
  const auto first = sample_trajectory(det, q, 5, 1);
  for (std::uint64_t s = 2; s < 20; ++s) CHECK(sample_trajectory(det, q, 5, s).tokens == first.tokens);

  const PolicyParams p = random_params(4, 1, 4);
  const auto a = sample_trajectory(p, q, 6, 77);
  const auto b = sample_trajectory(p, q, 6, 77);
  CHECK(a.tokens == b.tokens);
  CHECK(a.behavior_logprobs == b.behavior_logprobs);
  const auto steps = step_logprobs(p, a);
  for (std::size_t s = 0; s < steps.size(); ++s) CHECK(a.behavior_logprobs[s] == doctest::Approx(steps[s]).epsilon(1e-12));

  PolicyParams uniform(Vocab(4), 1, 2);
  std::vector<int> counts(4, 0);
  constexpr int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto t = sample_trajectory(uniform, q, 1, static_cast<std::uint64_t>(i));
    REQUIRE(t.tokens.size() == 1);
    counts[t.tokens[0]] += 1;
  }
  for (int c : counts) CHECK(std::abs(c / static_cast<double>(n) - 0.25) < 0.01);
}

TEST_CASE("trajectory validation") {
  PolicyParams p(Vocab(4), 1, 2);
  const auto with_logprobs = [](Trajectory t) {
    t.behavior_logprobs.assign(t.tokens.size(), std::log(0.25));
    return t;
  };
  CHECK_THROWS_AS(validate_trajectory(p, make_traj(0, {})), std::invalid_argument);
  CHECK_THROWS_AS(validate_trajectory(p, with_logprobs(make_traj(0, {4}))), std::invalid_argument);
  CHECK_THROWS_AS(validate_trajectory(p, with_logprobs(make_traj(0, {3, 1}))), std::invalid_argument);
  CHECK_THROWS_AS(validate_trajectory(p, with_logprobs(make_traj(5, {1}))), std::invalid_argument);
  CHECK_THROWS_AS(validate_trajectory(p, make_traj(0, {1, 2})), std::invalid_argument);
  CHECK_NOTHROW(validate_trajectory(p, with_logprobs(make_traj(0, {1, 2, 3}))));
}

TEST_CASE("checkpoint round trip") {
  const PolicyParams p = random_params(5, 3, 21);
  std::stringstream buffer;
  write_checkpoint(p, buffer);
  const std::string bytes = buffer.str();
  CHECK(bytes.size() == 32 + 8 * p.table().size());
  CHECK(bytes.substr(0, 8) == "MIXPOCKP");
  std::stringstream in(bytes);
  CHECK(read_checkpoint(in) == p);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS(read_checkpoint(truncated));
  std::string corrupt = bytes;
  corrupt[0] = 'X';
  std::stringstream bad(corrupt);
  CHECK_THROWS(read_checkpoint(bad));
}

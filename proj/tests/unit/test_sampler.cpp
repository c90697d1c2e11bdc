#include "doctest.h"

#include <cmath>

#include "mixpo/sampler.hpp"
#include "mixpo/trainer.hpp"

using namespace mixpo;

namespace {

const TaskSpec& task() {
  static const TaskSpec spec = default_task();
  return spec;
}

const PolicyParams& guide() {
  static const PolicyParams g = pretrain_guide(task(), 0.9, 10000, 1);
  return g;
}

bool same_trajectories(const std::vector<Trajectory>& a, const std::vector<Trajectory>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].tokens != b[i].tokens || a[i].query.id != b[i].query.id || a[i].reward != b[i].reward ||
        a[i].behavior_logprobs != b[i].behavior_logprobs)
      return false;
  return true;
}

}  // namespace

TEST_CASE("mode names") {
  CHECK(parse_mode("method2") == Mode::Method2);
  CHECK(parse_mode("DapoBaseline") == Mode::DapoBaseline);
  CHECK(mode_name(Mode::Method1) == "Method1");
  CHECK_THROWS_AS(parse_mode("method3"), std::invalid_argument);
}

TEST_CASE("zero-reward fraction under the uniform policy") {
  const PolicyParams uniform = uniform_policy(task());
  const double p_success = expected_reward(task(), uniform);
  const SampleBatch batch = collect_batch(uniform, &guide(), task(), 12500, Mode::Method2, 3);
  const double total = static_cast<double>(batch.counts.on_nonzero + batch.counts.on_zero);
  CHECK(total == 50000);
  CHECK(std::abs(batch.counts.on_zero / total - (1.0 - p_success)) < 0.01);
}

TEST_CASE("partition and accounting") {
  const PolicyParams uniform = uniform_policy(task());
  for (Mode mode : {Mode::Method1, Mode::Method2}) {
    const SampleBatch batch = collect_batch(uniform, &guide(), task(), 8, mode, 11);
    CHECK(batch.counts.on_nonzero + batch.counts.on_zero == 8 * task().queries.size());
    CHECK(batch.counts.off == 8 * task().queries.size());
    CHECK(batch.zero_discarded == (mode != Mode::Method2));
    for (const auto& t : batch.on_nonzero) CHECK(t.reward > 0.0);
    for (const auto& t : batch.on_zero) CHECK(t.reward == 0.0);
    for (const auto& t : batch.off) CHECK(t.source == Source::OffPolicy);
    CHECK(batch.on_zero_advantages.size() == batch.on_zero.size());
    CHECK_NOTHROW(batch.validate());
  }
  SamplingPlan plan;
  plan.off_group_size = 5;
  const SampleBatch wide = collect_batch(uniform, &guide(), task(), plan, Mode::Method2, 4);
  CHECK(wide.counts.off == 5 * task().queries.size());
}

TEST_CASE("shared baseline over off-policy and zero-reward samples") {
  const PolicyParams uniform = uniform_policy(task());
  const SampleBatch batch = collect_batch(uniform, &guide(), task(), 8, Mode::Method2, 21);
  for (const auto& g : batch.query_groups) {
    std::vector<double> off, zero;
    for (std::size_t i = g.off.begin; i < g.off.end; ++i) off.push_back(batch.off[i].reward);
    for (std::size_t i = g.on_zero.begin; i < g.on_zero.end; ++i) zero.push_back(batch.on_zero[i].reward);
    const auto [b, c] = shared_baseline_advantages(off, zero);
    for (std::size_t i = 0; i < b.values.size(); ++i) CHECK(batch.off_advantages[g.off.begin + i] == b.values[i]);
    for (std::size_t i = 0; i < c.values.size(); ++i) CHECK(batch.on_zero_advantages[g.on_zero.begin + i] == c.values[i]);
  }
}

TEST_CASE("near-deterministic guide gives degenerate off-policy groups") {
  PolicyParams sharp = guide();
  sharp.table().scale(20.0);
  REQUIRE(expected_reward(task(), sharp) > 0.999999);
  const SampleBatch batch = collect_batch(uniform_policy(task()), &sharp, task(), 8, Mode::Method1, 5);
  for (const auto& g : batch.query_groups) CHECK(g.off_degenerate);
  for (double a : batch.off_advantages) CHECK(a == 0.0);
}

TEST_CASE("behavior log-probabilities match the sampling policy") {
  const PolicyParams uniform = uniform_policy(task());
  const SampleBatch batch = collect_batch(uniform, &guide(), task(), 8, Mode::Method2, 6);
  for (const auto* list : {&batch.on_nonzero, &batch.on_zero}) {
    for (const auto& t : *list) {
      const auto lp = step_logprobs(uniform, t);
      for (std::size_t s = 0; s < lp.size(); ++s) CHECK(std::abs(lp[s] - t.behavior_logprobs[s]) <= 1e-12);
    }
  }
  for (const auto& t : batch.off) {
    const auto lp = step_logprobs(guide(), t);
    for (std::size_t s = 0; s < lp.size(); ++s) CHECK(std::abs(lp[s] - t.behavior_logprobs[s]) <= 1e-12);
  }
}

TEST_CASE("batches are deterministic in the seed") {
  const PolicyParams uniform = uniform_policy(task());
  const SampleBatch a = collect_batch(uniform, &guide(), task(), 8, Mode::Method2, 9);
  const SampleBatch b = collect_batch(uniform, &guide(), task(), 8, Mode::Method2, 9);
  const SampleBatch c = collect_batch(uniform, &guide(), task(), 8, Mode::Method2, 10);
  CHECK(same_trajectories(a.on_zero, b.on_zero));
  CHECK(same_trajectories(a.off, b.off));
  CHECK(a.off_advantages == b.off_advantages);
  CHECK_FALSE(same_trajectories(a.off, c.off));
}

TEST_CASE("DapoBaseline resamples degenerate groups up to the cap") {
  SamplingPlan plan;
  plan.max_retries = 3;
  const SampleBatch batch = collect_batch(uniform_policy(task()), nullptr, task(), plan, Mode::DapoBaseline, 2);
  CHECK(batch.counts.off == 0);
  for (const auto& g : batch.query_groups) {
    CHECK(g.on_degenerate);
    CHECK(g.retries == 3);
  }
  const SampleBatch easy = collect_batch(guide(), nullptr, task(), plan, Mode::DapoBaseline, 2);
  std::size_t informative = 0;
  for (const auto& g : easy.query_groups) informative += g.on_degenerate ? 0 : 1;
  CHECK(informative > 0);
  CHECK_THROWS_AS(collect_batch(uniform_policy(task()), nullptr, task(), 8, Mode::Method2, 1), std::invalid_argument);
}

#include "mixpo/sampler.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <string>

#include "mixpo/parallel.hpp"
#include "mixpo/rng.hpp"

namespace mixpo {

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::Method1:
      return "Method1";
    case Mode::Method2:
      return "Method2";
    case Mode::DapoBaseline:
      return "DapoBaseline";
  }
  return "?";
}

Mode parse_mode(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "method1") return Mode::Method1;
  if (lower == "method2") return Mode::Method2;
  if (lower == "dapobaseline" || lower == "dapo") return Mode::DapoBaseline;
  throw std::invalid_argument("unknown mode '" + std::string(text) + "'");
}

std::size_t SampleBatch::degenerate_groups() const {
  std::size_t n = 0;
  for (const auto& g : query_groups) n += (g.on_degenerate ? 1 : 0) + (g.off_degenerate ? 1 : 0);
  return n;
}

void SampleBatch::validate() const {
  auto fail = [](const char* what) { throw std::logic_error(std::string("sample batch invariant: ") + what); };
  for (const auto& t : on_nonzero)
    if (!(t.reward > 0.0) || t.source != Source::OnPolicy) fail("on_nonzero entry");
  for (const auto& t : on_zero)
    if (t.reward != 0.0 || t.source != Source::OnPolicy) fail("on_zero entry");
  for (const auto& t : off)
    if (t.source != Source::OffPolicy) fail("off entry");
  if (counts.on_nonzero != on_nonzero.size() || counts.on_zero != on_zero.size() || counts.off != off.size())
    fail("counts");
  if (on_nonzero_advantages.size() != on_nonzero.size() || on_zero_advantages.size() != on_zero.size() ||
      off_advantages.size() != off.size())
    fail("advantage alignment");
  std::size_t nz = 0, z = 0, o = 0;
  for (const auto& g : query_groups) {
    if (g.on_nonzero.begin != nz || g.on_zero.begin != z || g.off.begin != o) fail("query ranges");
    nz = g.on_nonzero.end;
    z = g.on_zero.end;
    o = g.off.end;
  }
  if (nz != on_nonzero.size() || z != on_zero.size() || o != off.size()) fail("query ranges cover lists");
}

namespace {

struct Job {
  std::size_t query_index;
  Source source;
  std::size_t sample;
  std::size_t attempt;
};

constexpr std::uint64_t kOnStream = 0;
constexpr std::uint64_t kOffStream = 1;

std::vector<Trajectory> run_jobs(const std::vector<Job>& jobs, const PolicyParams& params, const PolicyParams* guide,
                                 const TaskSpec& spec, std::uint64_t seed) {
  std::vector<Trajectory> out(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    const Job& job = jobs[i];
    const Query& q = spec.queries[job.query_index];
    const bool on = job.source == Source::OnPolicy;
    const std::uint64_t s =
        derive_seed(seed, {on ? kOnStream : kOffStream, job.query_index, job.attempt, job.sample});
    Trajectory t = sample_trajectory(on ? params : *guide, q, spec.max_len, s, job.source);
    t.reward = reward(spec, t);
    if (t.reward < 0.0) throw std::invalid_argument("negative rewards are not supported by the sample partition");
    out[i] = std::move(t);
  });
  return out;
}

std::vector<double> rewards_of(std::span<const Trajectory> ts) {
  std::vector<double> r;
  r.reserve(ts.size());
  for (const auto& t : ts) r.push_back(t.reward);
  return r;
}

}  // namespace

SampleBatch collect_batch(const PolicyParams& params, const PolicyParams* guide, const TaskSpec& spec,
                          const SamplingPlan& plan, Mode mode, std::uint64_t seed) {
  if (plan.group_size < 2) throw std::invalid_argument("group_size must be at least 2");
  const bool use_guide = mode != Mode::DapoBaseline;
  const std::size_t off_size = plan.off_group_size == 0 ? plan.group_size : plan.off_group_size;
  if (use_guide) {
    if (guide == nullptr) throw std::invalid_argument("guide policy required outside DapoBaseline mode");
    if (off_size < 2) throw std::invalid_argument("off-policy group size must be at least 2");
    if (!guide->same_shape(params)) throw std::invalid_argument("guide and target policy shapes differ");
  }

  const std::size_t nq = spec.queries.size();
  std::vector<Job> jobs;
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t i = 0; i < plan.group_size; ++i) jobs.push_back({q, Source::OnPolicy, i, 0});
    if (use_guide)
      for (std::size_t i = 0; i < off_size; ++i) jobs.push_back({q, Source::OffPolicy, i, 0});
  }
  std::vector<Trajectory> sampled = run_jobs(jobs, params, guide, spec, seed);

  SampleBatch batch;
  batch.mode = mode;
  batch.zero_discarded = mode != Mode::Method2;
  std::size_t cursor = 0;
  for (std::size_t q = 0; q < nq; ++q) {
    std::vector<Trajectory> on(std::make_move_iterator(sampled.begin() + cursor),
                               std::make_move_iterator(sampled.begin() + cursor + plan.group_size));
    cursor += plan.group_size;
    std::vector<Trajectory> off;
    if (use_guide) {
      off.assign(std::make_move_iterator(sampled.begin() + cursor),
                 std::make_move_iterator(sampled.begin() + cursor + off_size));
      cursor += off_size;
    }

    QueryGroup group;
    group.query_id = spec.queries[q].id;
    AdvantageSet on_adv = on_policy_advantages(rewards_of(on));
    if (mode == Mode::DapoBaseline) {
      while (on_adv.degenerate && group.retries < plan.max_retries) {
        ++group.retries;
        std::vector<Job> retry;
        for (std::size_t i = 0; i < plan.group_size; ++i) retry.push_back({q, Source::OnPolicy, i, group.retries});
        on = run_jobs(retry, params, guide, spec, seed);
        on_adv = on_policy_advantages(rewards_of(on));
      }
    }
    group.on_degenerate = on_adv.degenerate;

    std::vector<Trajectory> zero_part;
    std::vector<double> zero_adv;
    group.on_nonzero.begin = batch.on_nonzero.size();
    for (std::size_t i = 0; i < on.size(); ++i) {
      if (on[i].reward > 0.0) {
        batch.on_nonzero.push_back(std::move(on[i]));
        batch.on_nonzero_advantages.push_back(on_adv.values[i]);
      } else {
        zero_part.push_back(std::move(on[i]));
        zero_adv.push_back(on_adv.values[i]);
      }
    }
    group.on_nonzero.end = batch.on_nonzero.size();

    if (mode == Mode::Method1) {
      const AdvantageSet off_adv = off_policy_advantages_method1(rewards_of(off));
      group.off_degenerate = off_adv.degenerate;
      batch.off_advantages.insert(batch.off_advantages.end(), off_adv.values.begin(), off_adv.values.end());
    } else if (mode == Mode::Method2) {
      const auto [off_adv, shared_zero] = shared_baseline_advantages(rewards_of(off), rewards_of(zero_part));
      group.off_degenerate = off_adv.degenerate;
      batch.off_advantages.insert(batch.off_advantages.end(), off_adv.values.begin(), off_adv.values.end());
      zero_adv = shared_zero.values;
    }

    group.on_zero.begin = batch.on_zero.size();
    for (auto& t : zero_part) batch.on_zero.push_back(std::move(t));
    batch.on_zero_advantages.insert(batch.on_zero_advantages.end(), zero_adv.begin(), zero_adv.end());
    group.on_zero.end = batch.on_zero.size();

    group.off.begin = batch.off.size();
    for (auto& t : off) batch.off.push_back(std::move(t));
    group.off.end = batch.off.size();
    batch.query_groups.push_back(group);
  }
  batch.counts = {batch.on_nonzero.size(), batch.on_zero.size(), batch.off.size()};
  batch.validate();
  return batch;
}

SampleBatch collect_batch(const PolicyParams& params, const PolicyParams* guide, const TaskSpec& spec,
                          std::size_t group_size, Mode mode, std::uint64_t seed) {
  SamplingPlan plan;
  plan.group_size = group_size;
  return collect_batch(params, guide, spec, plan, mode, seed);
}

}  // namespace mixpo

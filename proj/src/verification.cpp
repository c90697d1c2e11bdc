#include "mixpo/verification.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mixpo/advantages.hpp"
#include "mixpo/errors.hpp"
#include "mixpo/rng.hpp"
#include "mixpo/trainer.hpp"

namespace mixpo {

Table finite_diff_gradient(const ScalarObjective& fn, const PolicyParams& params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  PolicyParams probe = params;
  Table grad(params.num_contexts(), params.vocab().size());
  auto& table = probe.table();
  const std::size_t cols = params.vocab().size();
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double saved = table[i];
    table[i] = saved + h;
    const double up = fn(probe);
    table[i] = saved - h;
    const double down = fn(probe);
    table[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::domain_error("objective not finite near entry (context " + std::to_string(i / cols) + ", token " +
                              std::to_string(i % cols) + ")");
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport compare_gradients(const Table& analytic, const Table& numeric, double floor) {
  if (!analytic.same_shape(numeric)) throw std::invalid_argument("gradient shapes differ");
  GradCheckReport report;
  report.max_rel_error = -1.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double rel = relative_error(analytic[i], numeric[i], floor);
    report.max_abs_error = std::max(report.max_abs_error, std::abs(analytic[i] - numeric[i]));
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_context = i / analytic.cols();
      report.worst_token = i % analytic.cols();
    }
  }
  report.max_rel_error = std::max(report.max_rel_error, 0.0);
  report.num_entries_checked = analytic.size();
  return report;
}

std::string_view objective_kind_name(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::On:
      return "J_on";
    case ObjectiveKind::Off:
      return "J_off";
    case ObjectiveKind::Mix1:
      return "J_mix1";
    case ObjectiveKind::MixMethod2:
      return "J_mix";
    case ObjectiveKind::Mix2:
      return "J_mix2";
  }
  return "?";
}

namespace {

PolicyParams jitter(const PolicyParams& base, double scale, Rng& rng) {
  PolicyParams p = base;
  for (double& v : p.table().flat()) v += scale * rng.normal();
  return p;
}

std::vector<double> rewards_of(const std::vector<Trajectory>& ts) {
  std::vector<double> out;
  for (const auto& t : ts) out.push_back(t.reward);
  return out;
}

GradCheckInstance build_instance(const Vocab& vocab, const std::vector<Query>& queries, std::uint32_t num_query_slots,
                                 std::uint32_t window, std::uint32_t max_len, std::size_t group_size,
                                 const InstanceShape& noise, const MixConfig& mix, std::uint64_t seed,
                                 double exclusion) {
  if (group_size < 2) throw std::invalid_argument("group_size must be at least 2");
  mix.validate();
  std::size_t exclusions = 0;
  for (std::uint64_t attempt = 0; attempt < 10'000; ++attempt) {
    Rng rng(derive_seed(seed, {attempt}));
    const PolicyParams zero(vocab, num_query_slots, window);
    PolicyParams params = jitter(zero, noise.logit_scale, rng);
    GradCheckInstance inst{params, jitter(params, noise.old_offset, rng), jitter(params, noise.guide_offset, rng), mix,
                           {}, {}, {}, {}, {}, {}, {}, 0};
    for (const auto& q : queries) {
      std::vector<Trajectory> group, off;
      for (std::size_t i = 0; i < group_size; ++i) {
        Trajectory t = sample_trajectory(inst.old_params, q, max_len, rng.next_u64(), Source::OnPolicy);
        t.reward = rng.uniform() < 0.5 ? 1.0 : 0.0;
        group.push_back(std::move(t));
      }
      for (std::size_t i = 0; i < group_size; ++i) {
        Trajectory t = sample_trajectory(inst.guide, q, max_len, rng.next_u64(), Source::OffPolicy);
        t.reward = rng.uniform() < 0.5 ? 1.0 : 0.0;
        off.push_back(std::move(t));
      }
      const AdvantageSet on_adv = on_policy_advantages(rewards_of(group));
      std::vector<Trajectory> zero_part;
      for (std::size_t i = 0; i < group.size(); ++i) {
        if (group[i].reward > 0.0) {
          inst.on.push_back(group[i]);
          inst.on_adv.push_back(on_adv.values[i]);
        } else {
          zero_part.push_back(group[i]);
        }
      }
      const AdvantageSet m1 = off_policy_advantages_method1(rewards_of(off));
      const auto [shared_off, shared_zero] = shared_baseline_advantages(rewards_of(off), rewards_of(zero_part));
      inst.off_adv_method1.insert(inst.off_adv_method1.end(), m1.values.begin(), m1.values.end());
      inst.off_adv_shared.insert(inst.off_adv_shared.end(), shared_off.values.begin(), shared_off.values.end());
      inst.zero_adv.insert(inst.zero_adv.end(), shared_zero.values.begin(), shared_zero.values.end());
      for (auto& t : zero_part) inst.zero.push_back(std::move(t));
      for (auto& t : off) inst.off.push_back(std::move(t));
    }
    if (inst.on.empty() || inst.zero.empty()) continue;
    if (near_kink(inst, inst.params, exclusion)) {
      ++exclusions;
      continue;
    }
    inst.boundary_exclusions = exclusions;
    return inst;
  }
  throw std::runtime_error("could not draw a gradient-check instance away from clip boundaries");
}

}  // namespace

GradCheckInstance make_random_instance(const InstanceShape& shape, const MixConfig& mix, std::uint64_t seed,
                                       double exclusion) {
  std::vector<Query> queries;
  for (std::uint32_t q = 0; q < shape.num_queries; ++q) queries.push_back(Query{q, {}});
  return build_instance(Vocab(shape.vocab_size), queries, shape.num_queries, shape.context_window, shape.max_len,
                        shape.group_size, shape, mix, seed, exclusion);
}

GradCheckInstance make_task_instance(const TaskSpec& spec, std::uint32_t context_window, std::size_t group_size,
                                     const MixConfig& mix, std::uint64_t seed, double exclusion) {
  spec.validate();
  return build_instance(spec.vocab, spec.queries, spec.num_query_slots(), context_window, spec.max_len, group_size,
                        InstanceShape{}, mix, seed, exclusion);
}

bool near_kink(const GradCheckInstance& inst, const PolicyParams& at, double exclusion) {
  const MixConfig& m = inst.mix;
  auto close = [&](double r, std::initializer_list<double> kinks) {
    return std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(r - k) < exclusion; });
  };
  for (const auto& t : inst.on) {
    const auto lp = step_logprobs(at, t);
    for (std::size_t s = 0; s < lp.size(); ++s)
      if (close(std::exp(lp[s] - t.behavior_logprobs[s]), {1.0 - m.epsilon, 1.0 + m.epsilon})) return true;
  }
  for (const auto& t : inst.off) {
    const auto lp = step_logprobs(at, t);
    const auto lg = step_logprobs(inst.guide, t);
    for (std::size_t s = 0; s < lp.size(); ++s)
      if (close(std::exp(lp[s] - lg[s]), {m.w_lower, m.w_upper})) return true;
  }
  for (const auto& t : inst.zero) {
    const auto lp = step_logprobs(at, t);
    const auto lg = step_logprobs(inst.guide, t);
    for (std::size_t s = 0; s < lp.size(); ++s)
      if (close(std::exp(lp[s] - lg[s]), {m.w_lower, m.w_upper, 1.0 - m.epsilon, 1.0 + m.epsilon})) return true;
  }
  return false;
}

ObjectiveReport evaluate_instance(ObjectiveKind kind, const GradCheckInstance& inst, const PolicyParams& at) {
  const BatchView on{inst.on, inst.on_adv};
  const BatchView zero{inst.zero, inst.zero_adv};
  const BatchView off1{inst.off, inst.off_adv_method1};
  const BatchView off2{inst.off, inst.off_adv_shared};
  switch (kind) {
    case ObjectiveKind::On:
      return objective_on(at, inst.old_params, on, inst.mix);
    case ObjectiveKind::Off:
      return objective_off(at, inst.guide, off1, inst.mix);
    case ObjectiveKind::Mix1:
      return objective_mix1(at, inst.old_params, inst.guide, on, off1, inst.mix);
    case ObjectiveKind::MixMethod2:
      return objective_mix_method2(at, inst.old_params, inst.guide, off2, zero, inst.mix);
    case ObjectiveKind::Mix2:
      return objective_mix2(at, inst.old_params, inst.guide, on, off2, zero, inst.mix);
  }
  throw std::logic_error("unhandled objective kind");
}

GradCheckReport check_objective_gradient(ObjectiveKind kind, const GradCheckInstance& inst, double h, double floor,
                                         const std::function<void(Table&)>& corrupt) {
  Table analytic = evaluate_instance(kind, inst, inst.params).gradient;
  if (corrupt) corrupt(analytic);
  const Table numeric = finite_diff_gradient(
      [&](const PolicyParams& p) { return evaluate_instance(kind, inst, p).value; }, inst.params, h);
  GradCheckReport report = compare_gradients(analytic, numeric, floor);
  report.boundary_exclusions = inst.boundary_exclusions;
  return report;
}

namespace {

struct PathWalker {
  const TaskSpec& spec;
  const PolicyParams& params;
  const Query& query;
  std::size_t max_paths;
  std::size_t paths = 0;
  std::vector<TokenId> tokens;

  double walk(double prob) {
    if (tokens.size() == spec.max_len) return terminal(prob);
    const auto p = softmax(params.logits(params.context_index(query, tokens)));
    double total = 0.0;
    for (TokenId a = 0; a < p.size(); ++a) {
      tokens.push_back(a);
      total += a == spec.vocab.eos() ? terminal(prob * p[a]) : walk(prob * p[a]);
      tokens.pop_back();
    }
    return total;
  }

  double terminal(double prob) {
    if (++paths > max_paths) throw CapacityError("too many generation paths to enumerate");
    Trajectory t;
    t.query = query;
    t.tokens = tokens;
    return prob * reward(spec, t);
  }
};

}  // namespace

double enumerate_expected_reward(const TaskSpec& spec, const PolicyParams& params, std::size_t max_paths) {
  double total = 0.0;
  for (const auto& q : spec.queries) {
    PathWalker walker{spec, params, q, max_paths, 0, {}};
    total += walker.walk(1.0);
  }
  return total / static_cast<double>(spec.queries.size());
}

MonteCarloEstimate monte_carlo_reward(const TaskSpec& spec, const PolicyParams& params, std::size_t samples,
                                      std::uint64_t seed) {
  if (samples < 2) throw std::invalid_argument("need at least two samples");
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const Query& q = spec.queries[i % spec.queries.size()];
    const double r = reward(spec, sample_trajectory(params, q, spec.max_len, derive_seed(seed, {i})));
    sum += r;
    sum_sq += r * r;
  }
  const double n = static_cast<double>(samples);
  MonteCarloEstimate est;
  est.mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * est.mean * est.mean) / (n - 1.0));
  est.standard_error = std::sqrt(var / n);
  est.samples = samples;
  return est;
}

VarianceRatioSummary variance_ratio_experiment(const PolicyParams& guide, const TaskSpec& spec, double gamma,
                                               std::size_t n_samples, std::uint64_t seed,
                                               const VarianceRatioOptions& options) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  if (n_samples < 2 * spec.queries.size()) throw std::invalid_argument("too few samples for the query count");
  PolicyParams target = guide;
  if (options.target_perturbation > 0.0) {
    Rng rng(derive_seed(options.perturbation_seed, {0xFEED}));
    for (double& v : target.table().flat()) v += options.target_perturbation * rng.normal();
  }

  const std::size_t nq = spec.queries.size();
  std::vector<Trajectory> samples(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    samples[i] = sample_trajectory(guide, spec.queries[i % nq], spec.max_len, derive_seed(seed, {i}), Source::OffPolicy);
    samples[i].reward = reward(spec, samples[i]);
  }
  // Advantages standardized within each query's pool of samples.
  std::vector<double> adv(n_samples, 0.0);
  for (std::size_t q = 0; q < nq; ++q) {
    std::vector<double> r;
    for (std::size_t i = q; i < n_samples; i += nq) r.push_back(samples[i].reward);
    const AdvantageSet set = off_policy_advantages_method1(r);
    if (set.degenerate) throw std::invalid_argument("degenerate advantage pool: the experiment needs reward variance");
    for (std::size_t i = q, j = 0; i < n_samples; i += nq, ++j) adv[i] = set.values[j] * options.advantage_scale;
  }

  const std::size_t entries = target.table().size();
  std::vector<double> mean_s(entries, 0.0), m2_s(entries, 0.0), mean_u(entries, 0.0), m2_u(entries, 0.0);
  Table scaled(target.num_contexts(), target.vocab().size());
  Table unscaled(target.num_contexts(), target.vocab().size());
  for (std::size_t i = 0; i < n_samples; ++i) {
    scaled.fill(0.0);
    unscaled.fill(0.0);
    const Trajectory& t = samples[i];
    const auto contexts = step_contexts(target, t);
    const auto lp = step_logprobs(target, t);
    const auto lg = step_logprobs(guide, t);
    for (std::size_t s = 0; s < contexts.size(); ++s) {
      const double r = std::exp(lp[s] - lg[s]);
      add_score(target, contexts[s], t.tokens[s], scale_f_prime(r, gamma) * r * adv[i], scaled);
      add_score(target, contexts[s], t.tokens[s], r * adv[i], unscaled);
    }
    const double n = static_cast<double>(i + 1);
    for (std::size_t e = 0; e < entries; ++e) {
      double d = scaled[e] - mean_s[e];
      mean_s[e] += d / n;
      m2_s[e] += d * (scaled[e] - mean_s[e]);
      d = unscaled[e] - mean_u[e];
      mean_u[e] += d / n;
      m2_u[e] += d * (unscaled[e] - mean_u[e]);
    }
  }
  const double max_var = *std::max_element(m2_u.begin(), m2_u.end());
  std::vector<double> ratios;
  for (std::size_t e = 0; e < entries; ++e)
    if (m2_u[e] > options.relative_variance_floor * max_var && m2_u[e] > 0.0) ratios.push_back(m2_s[e] / m2_u[e]);
  if (ratios.empty()) throw std::invalid_argument("no entry has variance above the floor");

  VarianceRatioSummary out;
  out.median = quantile(ratios, 0.5);
  out.q1 = quantile(ratios, 0.25);
  out.q3 = quantile(ratios, 0.75);
  out.iqr = out.q3 - out.q1;
  out.entries = ratios.size();
  return out;
}

}  // namespace mixpo

#include "mixpo/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include "mixpo/errors.hpp"
#include "mixpo/parallel.hpp"
#include "mixpo/rng.hpp"

namespace mixpo {

namespace {
constexpr std::uint64_t kIterationStream = 11;
constexpr std::uint64_t kSigmaStream = 12;
constexpr std::uint64_t kLipschitzStream = 13;
constexpr std::uint64_t kDirectionStream = 14;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

void TrainConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("iterations must be at least 1");
  if (sampling.group_size < 2) throw std::invalid_argument("group_size must be at least 2");
  if (sampling.off_group_size == 1) throw std::invalid_argument("off_group_size must be 0 (same) or at least 2");
  mix.validate();
  if (schedule.kind == ScheduleKind::Constant && !(schedule.alpha >= 0.0 && std::isfinite(schedule.alpha)))
    throw std::invalid_argument("constant step size must be finite and non-negative");
  if (schedule.kind == ScheduleKind::Theorem1 && (sigma_estimate_samples < 10 || lipschitz_probe_count < 10))
    throw std::invalid_argument("smoothness estimation needs at least 10 probes each");
  if (context_window < 1) throw std::invalid_argument("context_window must be positive");
}

double RunMetrics::min_grad_norm_sq() const {
  return records.empty() ? kNaN : records.back().min_grad_norm_sq;
}

std::size_t RunMetrics::iterations_to_threshold(double threshold) const {
  for (const auto& r : records)
    if (r.mean_reward >= threshold) return r.k;
  return records.size() + 1;
}

PolicyParams pretrain_guide(const TaskSpec& spec, double target_success, std::size_t budget, std::uint64_t seed,
                            std::uint32_t context_window) {
  spec.validate();
  if (!(target_success > 0.0 && target_success <= 1.0))
    throw std::invalid_argument("target_success must lie in (0, 1]");
  PolicyParams params = uniform_policy(spec, context_window);
  const double best = optimal_expected_reward(spec, params).best_deterministic;
  if (target_success >= 1.0)
    throw GuideTrainingError("target success 1.0 is unreachable with finite logits", 0.0);
  if (target_success > best)
    throw GuideTrainingError("target success exceeds the best achievable expected reward", best);

  Rng rng(seed);
  for (double& v : params.table().flat()) v = 0.01 * rng.normal();

  constexpr double kStep = 1.0;
  double achieved = expected_reward(spec, params);
  for (std::size_t it = 0; it < budget && achieved < target_success; ++it) {
    Table grad(params.num_contexts(), params.vocab().size());
    for (const auto& q : spec.queries) {
      for (const auto& seq : spec.target_map.at(q.id)) {
        Trajectory t;
        t.query = q;
        t.tokens = seq;
        if (t.tokens.size() < spec.max_len) t.tokens.push_back(spec.vocab.eos());
        const auto contexts = step_contexts(params, t);
        for (std::size_t s = 0; s < contexts.size(); ++s) add_score(params, contexts[s], t.tokens[s], 1.0, grad);
      }
    }
    params.table().axpy(kStep, grad);
    achieved = expected_reward(spec, params);
  }
  if (achieved < target_success)
    throw GuideTrainingError("guide pretraining budget exhausted at success " + std::to_string(achieved), achieved);
  return params;
}

double theorem1_learning_rate(double j_opt_proxy, double j_init, double lipschitz_est, double sigma_est,
                              double w_upper, std::size_t iterations) {
  if (!(lipschitz_est > 0.0) || !(sigma_est > 0.0) || !(w_upper > 0.0))
    throw std::invalid_argument("Theorem 1 schedule needs positive L, sigma and w_upper estimates");
  if (iterations < 1) throw std::invalid_argument("iterations must be at least 1");
  if (j_opt_proxy < j_init) throw std::invalid_argument("optimal value proxy is below the initial value");
  if (j_opt_proxy == j_init) return 0.0;
  const double c = std::sqrt(2.0 * (j_opt_proxy - j_init) / (lipschitz_est * sigma_est * sigma_est * w_upper));
  return c / std::sqrt(static_cast<double>(iterations));
}

double theorem1_bound(double j_opt_proxy, double j_init, double lipschitz_est, double sigma_est, double w_lower,
                      double w_upper, std::size_t iterations) {
  return std::sqrt(2.0 * (j_opt_proxy - j_init) * lipschitz_est * w_upper /
                   (static_cast<double>(iterations) * w_lower)) *
         sigma_est;
}

namespace {

Table random_direction(const PolicyParams& params, double radius, Rng& rng) {
  Table d(params.num_contexts(), params.vocab().size());
  for (double& v : d.flat()) v = rng.normal();
  d.scale(radius / d.norm());
  return d;
}

}  // namespace

SmoothnessEstimate estimate_smoothness_constants(const PolicyParams& params, const GradientOracle& oracle,
                                                 std::size_t sigma_probes, std::size_t lipschitz_probes,
                                                 std::uint64_t seed, double radius) {
  if (sigma_probes < 10 || lipschitz_probes < 10)
    throw std::invalid_argument("smoothness estimation needs at least 10 probes each");
  SmoothnessEstimate est;
  for (std::size_t p = 0; p < sigma_probes; ++p)
    est.sigma = std::max(est.sigma, oracle(params, derive_seed(seed, {kSigmaStream, p})).norm());
  for (std::size_t p = 0; p < lipschitz_probes; ++p) {
    Rng rng(derive_seed(seed, {kDirectionStream, p}));
    PolicyParams a = params;
    PolicyParams b = params;
    a.table().axpy(1.0, random_direction(params, radius, rng));
    b.table().axpy(1.0, random_direction(params, radius, rng));
    const std::uint64_t batch_seed = derive_seed(seed, {kLipschitzStream, p});
    Table diff = oracle(a, batch_seed);
    diff.axpy(-1.0, oracle(b, batch_seed));
    Table step = a.table();
    step.axpy(-1.0, b.table());
    est.lipschitz = std::max(est.lipschitz, diff.norm() / step.norm());
  }
  return est;
}

ObjectiveReport evaluate_objective(Mode mode, const PolicyParams& params, const PolicyParams& old_params,
                                   const PolicyParams* guide, const SampleBatch& batch, const MixConfig& mix) {
  switch (mode) {
    case Mode::DapoBaseline: {
      // Plain on-policy surrogate; an all-empty batch gives a zero report.
      ObjectiveReport report;
      if (batch.on_nonzero.empty()) {
        ComponentReport on;
        on.gradient = Table(params.num_contexts(), params.vocab().size());
        on.coefficient = 1.0;
        report.components[Component::On] = std::move(on);
        report.gradient = Table(params.num_contexts(), params.vocab().size());
        return report;
      }
      return objective_on(params, old_params, batch.on_view(), mix);
    }
    case Mode::Method1:
      return objective_mix1(params, old_params, *guide, batch.on_view(), batch.off_view(), mix);
    case Mode::Method2:
      return objective_mix2(params, old_params, *guide, batch.on_view(), batch.off_view(), batch.zero_view(), mix);
  }
  throw std::logic_error("unhandled mode");
}

GradientOracle make_objective_oracle(const TrainConfig& config, const TaskSpec& spec, const PolicyParams& anchor,
                                     const PolicyParams* guide) {
  return [config, &spec, anchor, guide](const PolicyParams& at, std::uint64_t probe_seed) {
    const SampleBatch batch = collect_batch(anchor, guide, spec, config.sampling, config.mode, probe_seed);
    return evaluate_objective(config.mode, at, anchor, guide, batch, config.mix).gradient;
  };
}

namespace {

void reconcile(const SampleBatch& batch, const ObjectiveReport& report, Mode mode, IterationRecord& rec) {
  auto used = [&](Component c) {
    const auto* comp = report.component(c);
    return comp ? comp->trajectory_count : 0;
  };
  rec.used_on = used(Component::On);
  rec.used_off = used(Component::Off);
  rec.used_zero = used(Component::Zero);
  rec.discarded_zero = batch.zero_discarded ? batch.on_zero.size() : 0;
  rec.sampled_total = batch.on_nonzero.size() + batch.on_zero.size() + batch.off.size();
  const bool ok = rec.used_on == batch.counts.on_nonzero && rec.used_off == batch.counts.off &&
                  rec.used_zero + rec.discarded_zero == batch.counts.on_zero &&
                  rec.used_on + rec.used_off + rec.used_zero + rec.discarded_zero == rec.sampled_total &&
                  (mode == Mode::Method2 ? rec.discarded_zero == 0 : rec.used_zero == 0);
  if (!ok) throw std::logic_error("sample accounting mismatch at iteration " + std::to_string(rec.k));
}

}  // namespace

TrainResult train(const TrainConfig& config, const TaskSpec& spec, const PolicyParams* guide,
                  const IterationCallback& on_iteration) {
  config.validate();
  spec.validate();
  if (config.mode != Mode::DapoBaseline && guide == nullptr)
    throw std::invalid_argument("guide policy required for " + std::string(mode_name(config.mode)));

  PolicyParams params = uniform_policy(spec, config.context_window);
  if (guide && !guide->same_shape(params)) throw std::invalid_argument("guide policy shape does not match the task");

  RunMetrics metrics;
  ScheduleReport& sched = metrics.schedule;
  sched.kind = config.schedule.kind;
  const ExpectedReward init_reward = optimal_expected_reward(spec, params);
  sched.j_opt_proxy = init_reward.best_deterministic;
  sched.j_init = init_reward.expected;
  if (config.schedule.kind == ScheduleKind::Constant) {
    sched.alpha = config.schedule.alpha;
  } else {
    const SmoothnessEstimate est =
        estimate_smoothness_constants(params, make_objective_oracle(config, spec, params, guide),
                                      config.sigma_estimate_samples, config.lipschitz_probe_count, config.seed);
    sched.lipschitz = est.lipschitz;
    sched.sigma = est.sigma;
    sched.alpha = theorem1_learning_rate(sched.j_opt_proxy, sched.j_init, est.lipschitz, est.sigma,
                                         config.mix.w_upper, config.iterations);
    sched.c = sched.alpha * std::sqrt(static_cast<double>(config.iterations));
    sched.bound = theorem1_bound(sched.j_opt_proxy, sched.j_init, est.lipschitz, est.sigma, config.mix.w_lower,
                                 config.mix.w_upper, config.iterations);
  }

  double running_min = std::numeric_limits<double>::infinity();
  double mean_reward = sched.j_init;
  metrics.records.reserve(config.iterations);
  for (std::size_t k = 0; k < config.iterations; ++k) {
    const SampleBatch batch =
        collect_batch(params, guide, spec, config.sampling, config.mode, derive_seed(config.seed, {kIterationStream, k}));
    // The batch was drawn from the current iterate, which is therefore theta_old.
    const ObjectiveReport report = evaluate_objective(config.mode, params, params, guide, batch, config.mix);

    IterationRecord rec;
    rec.k = k;
    rec.objective = report.value;
    rec.j_on = report.component_value(Component::On);
    rec.j_off = report.component_value(Component::Off);
    rec.j_zero = report.component_value(Component::Zero);
    rec.grad_norm_sq = report.gradient.squared_norm();
    running_min = std::min(running_min, rec.grad_norm_sq);
    rec.min_grad_norm_sq = running_min;
    rec.mean_reward = mean_reward;
    rec.l1 = report.l1.value_or(kNaN);
    rec.l2 = report.l2.value_or(kNaN);
    const std::size_t guided = report.guide_ratio_tokens();
    rec.clamp_frac = guided ? static_cast<double>(report.clamped_tokens()) / static_cast<double>(guided) : 0.0;
    rec.degenerate_groups = batch.degenerate_groups();
    reconcile(batch, report, config.mode, rec);

    if (!std::isfinite(rec.objective) || !report.gradient.all_finite())
      throw NumericalError("non-finite objective or gradient at iteration " + std::to_string(k), k);
    params.table().axpy(sched.alpha, report.gradient);
    if (!params.table().all_finite())
      throw NumericalError("non-finite parameters after update at iteration " + std::to_string(k), k);

    metrics.records.push_back(rec);
    if (on_iteration) on_iteration(rec);
    mean_reward = expected_reward(spec, params);
  }
  metrics.final_reward = mean_reward;
  return {std::move(params), std::move(metrics)};
}

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_metrics_header(std::ostream& out) {
  out << "k,objective,j_on,j_off,j_zero,grad_norm_sq,min_grad_norm_sq,mean_reward,l1,l2,clamp_frac,"
         "degenerate_groups\n";
}

void write_metrics_row(std::ostream& out, const IterationRecord& r) {
  out << r.k;
  for (double v : {r.objective, r.j_on, r.j_off, r.j_zero, r.grad_norm_sq, r.min_grad_norm_sq, r.mean_reward, r.l1,
                   r.l2, r.clamp_frac})
    out << ',' << format_double(v);
  out << ',' << r.degenerate_groups << '\n';
}

void write_metrics_csv(std::ostream& out, const RunMetrics& metrics) {
  write_metrics_header(out);
  for (const auto& r : metrics.records) write_metrics_row(out, r);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

CompareResult compare_modes(const TrainConfig& config, const TaskSpec& spec, const PolicyParams& guide,
                            std::size_t seeds, const std::vector<Mode>& modes) {
  if (seeds < 1) throw std::invalid_argument("compare needs at least one seed");
  CompareResult result;
  result.runs.resize(modes.size() * seeds);
  parallel_for(result.runs.size(), [&](std::size_t i) {
    const Mode mode = modes[i / seeds];
    const std::size_t s = i % seeds;
    TrainConfig run_config = config;
    run_config.mode = mode;
    run_config.seed = config.seed + s;
    const TrainResult run = train(run_config, spec, &guide);
    result.runs[i] = {mode,
                      s,
                      run_config.seed,
                      run.metrics.iterations_to_threshold(config.reward_threshold),
                      run.metrics.final_reward,
                      run.metrics.min_grad_norm_sq()};
  });
  for (std::size_t m = 0; m < modes.size(); ++m) {
    std::vector<double> its, finals, mins;
    for (std::size_t s = 0; s < seeds; ++s) {
      const auto& r = result.runs[m * seeds + s];
      its.push_back(static_cast<double>(r.iterations_to_threshold));
      finals.push_back(r.final_reward);
      mins.push_back(r.min_grad_norm_sq);
    }
    ModeSummary sum;
    sum.mode = modes[m];
    sum.runs = seeds;
    sum.median_iterations_to_threshold = quantile(its, 0.5);
    sum.final_reward_q1 = quantile(finals, 0.25);
    sum.final_reward_median = quantile(finals, 0.5);
    sum.final_reward_q3 = quantile(finals, 0.75);
    sum.min_grad_norm_sq_q1 = quantile(mins, 0.25);
    sum.min_grad_norm_sq_median = quantile(mins, 0.5);
    sum.min_grad_norm_sq_q3 = quantile(mins, 0.75);
    result.summaries.push_back(sum);
  }
  return result;
}

}  // namespace mixpo

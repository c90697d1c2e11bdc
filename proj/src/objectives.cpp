#include "mixpo/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mixpo {

void MixConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 0.5)) throw std::invalid_argument("gamma must lie in (0, 0.5)");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  if (!(w_lower > 0.0 && w_lower <= 1.0 && w_upper >= 1.0 && std::isfinite(w_upper)))
    throw std::invalid_argument("ratio bounds must satisfy 0 < w_lower <= 1 <= w_upper");
  if (!(std::abs(on_weight + mix_weight - 1.0) <= 1e-12))
    throw std::invalid_argument("on_weight + mix_weight must equal 1");
}

double scale_f(double x, double gamma) { return x / (x + gamma); }

double scale_f_prime(double x, double gamma) {
  const double d = x + gamma;
  return gamma / d / d;
}

SurrogateValue clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  const double unclipped_value = ratio * advantage;
  const double clipped_value = clipped * advantage;
  if (unclipped_value <= clipped_value) return {unclipped_value, advantage};
  return {clipped_value, 0.0};
}

std::size_t BatchView::token_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.length();
  return n;
}

std::string_view component_name(Component c) {
  switch (c) {
    case Component::On:
      return "on";
    case Component::Off:
      return "off";
    case Component::Zero:
      return "zero";
  }
  return "?";
}

const ComponentReport* ObjectiveReport::component(Component c) const {
  const auto it = components.find(c);
  return it == components.end() ? nullptr : &it->second;
}

double ObjectiveReport::component_value(Component c) const {
  const auto* r = component(c);
  return r ? r->value : 0.0;
}

std::size_t ObjectiveReport::clamped_tokens() const {
  std::size_t n = 0;
  for (const auto& [c, r] : components) n += r.clamped_tokens;
  return n;
}

std::size_t ObjectiveReport::guide_ratio_tokens() const {
  std::size_t n = 0;
  for (const auto& [c, r] : components)
    if (c != Component::On) n += r.token_count;
  return n;
}

namespace {

enum class Term { ClippedSurrogate, Scaled };
enum class Denominator { Stored, Guide };

struct PartSums {
  double sum = 0.0;
  Table grad;
  std::size_t tokens = 0;
  std::size_t trajectories = 0;
  std::size_t clamped = 0;
};

void check_batch(const PolicyParams& params, BatchView batch) {
  if (batch.trajectories.size() != batch.advantages.size())
    throw std::invalid_argument("batch needs exactly one advantage per trajectory");
  for (const auto& t : batch.trajectories) validate_trajectory(params, t);
}

void check_shapes(const PolicyParams& a, const PolicyParams& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("policy parameter shapes differ");
}

PartSums accumulate(const PolicyParams& params, const PolicyParams* guide, BatchView batch, const MixConfig& cfg,
                    Term term, Denominator denom, bool clamp) {
  check_batch(params, batch);
  PartSums part;
  part.grad = Table(params.num_contexts(), params.vocab().size());
  for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
    const Trajectory& traj = batch.trajectories[i];
    const double adv = batch.advantages[i];
    const auto contexts = step_contexts(params, traj);
    const auto lp_new = step_logprobs(params, traj);
    const auto lp_den = denom == Denominator::Guide ? step_logprobs(*guide, traj) : traj.behavior_logprobs;
    for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
      const double ratio = std::exp(lp_new[t] - lp_den[t]);
      bool active = false;
      double r = ratio;
      if (clamp) {
        active = ratio < cfg.w_lower || ratio > cfg.w_upper;
        r = std::clamp(ratio, cfg.w_lower, cfg.w_upper);
        part.clamped += active ? 1 : 0;
      }
      // d(term)/d(theta) = d(term)/d(ratio) * ratio * grad log pi_new
      double coeff = 0.0;
      if (term == Term::Scaled) {
        part.sum += scale_f(r, cfg.gamma) * adv;
        coeff = scale_f_prime(ratio, cfg.gamma) * ratio * adv;
      } else {
        const SurrogateValue s = clipped_surrogate(r, adv, cfg.epsilon);
        part.sum += s.value;
        coeff = s.d_ratio * ratio;
      }
      if (!active && coeff != 0.0) add_score(params, contexts[t], traj.tokens[t], coeff, part.grad);
    }
    part.tokens += traj.tokens.size();
    part.trajectories += 1;
  }
  return part;
}

ComponentReport normalized(const PartSums& part, double coefficient) {
  ComponentReport r;
  r.gradient = part.grad;
  if (part.tokens > 0) {
    const double inv = 1.0 / static_cast<double>(part.tokens);
    r.value = part.sum * inv;
    r.gradient.scale(inv);
  }
  r.token_count = part.tokens;
  r.trajectory_count = part.trajectories;
  r.clamped_tokens = part.clamped;
  r.coefficient = coefficient;
  return r;
}

ComponentReport on_component(const PolicyParams& params, BatchView batch, const MixConfig& cfg, double coeff) {
  return normalized(accumulate(params, nullptr, batch, cfg, Term::ClippedSurrogate, Denominator::Stored, false),
                    coeff);
}

ComponentReport off_component(const PolicyParams& params, const PolicyParams& guide, BatchView batch,
                              const MixConfig& cfg, double coeff) {
  return normalized(accumulate(params, &guide, batch, cfg, Term::Scaled, Denominator::Guide, true), coeff);
}

/// value and gradient as the coefficient-weighted sum of components.
void assemble(ObjectiveReport& report, const PolicyParams& params) {
  report.gradient = Table(params.num_contexts(), params.vocab().size());
  report.value = 0.0;
  for (const auto& [c, comp] : report.components) {
    report.value += comp.coefficient * comp.value;
    report.gradient.axpy(comp.coefficient, comp.gradient);
  }
}

}  // namespace

ObjectiveReport objective_on(const PolicyParams& params, const PolicyParams& old_params, BatchView batch,
                             const MixConfig& config) {
  config.validate();
  check_shapes(params, old_params);
  if (batch.empty()) throw std::invalid_argument("on-policy batch is empty");
  ObjectiveReport report;
  report.components[Component::On] = on_component(params, batch, config, 1.0);
  assemble(report, params);
  return report;
}

ObjectiveReport objective_off(const PolicyParams& params, const PolicyParams& guide_params, BatchView batch,
                              const MixConfig& config) {
  config.validate();
  check_shapes(params, guide_params);
  if (batch.empty()) throw std::invalid_argument("off-policy batch is empty");
  ObjectiveReport report;
  report.components[Component::Off] = off_component(params, guide_params, batch, config, 1.0);
  assemble(report, params);
  return report;
}

ObjectiveReport objective_mix1(const PolicyParams& params, const PolicyParams& old_params,
                               const PolicyParams& guide_params, BatchView on_batch, BatchView off_batch,
                               const MixConfig& config) {
  config.validate();
  check_shapes(params, old_params);
  check_shapes(params, guide_params);
  ObjectiveReport report;
  report.components[Component::On] = on_component(params, on_batch, config, config.on_weight);
  report.components[Component::Off] = off_component(params, guide_params, off_batch, config, config.mix_weight);
  assemble(report, params);
  return report;
}

ObjectiveReport objective_mix_method2(const PolicyParams& params, const PolicyParams& old_params,
                                      const PolicyParams& guide_params, BatchView off_batch, BatchView zero_batch,
                                      const MixConfig& config) {
  config.validate();
  check_shapes(params, old_params);
  check_shapes(params, guide_params);
  if (off_batch.empty() && zero_batch.empty())
    throw std::invalid_argument("off-policy and zero-reward batches are both empty");

  const PartSums off = accumulate(params, &guide_params, off_batch, config, Term::Scaled, Denominator::Guide, true);
  const PartSums zero =
      accumulate(params, &guide_params, zero_batch, config, Term::ClippedSurrogate, Denominator::Guide, true);

  const double total = static_cast<double>(off.tokens + zero.tokens);
  const double l1 = static_cast<double>(off.tokens) / total;
  const double l2 = 1.0 - l1;

  ObjectiveReport report;
  report.components[Component::Off] = normalized(off, l1);
  report.components[Component::Zero] = normalized(zero, l2);
  report.l1 = l1;
  report.l2 = l2;
  // Jointly normalized sum; equals l1 * grad J_1 + l2 * grad J_2 by construction.
  report.value = (off.sum + zero.sum) / total;
  report.gradient = off.grad;
  report.gradient.axpy(1.0, zero.grad);
  report.gradient.scale(1.0 / total);
  return report;
}

ObjectiveReport objective_mix2(const PolicyParams& params, const PolicyParams& old_params,
                               const PolicyParams& guide_params, BatchView on_batch, BatchView off_batch,
                               BatchView zero_batch, const MixConfig& config) {
  const ObjectiveReport mix = objective_mix_method2(params, old_params, guide_params, off_batch, zero_batch, config);
  ObjectiveReport report;
  report.components[Component::On] = on_component(params, on_batch, config, config.on_weight);
  for (Component c : {Component::Off, Component::Zero}) {
    ComponentReport comp = mix.components.at(c);
    comp.coefficient *= config.mix_weight;
    report.components[c] = std::move(comp);
  }
  report.l1 = mix.l1;
  report.l2 = mix.l2;
  const auto& on = report.components.at(Component::On);
  report.value = config.on_weight * on.value + config.mix_weight * mix.value;
  report.gradient = on.gradient;
  report.gradient.scale(config.on_weight);
  report.gradient.axpy(config.mix_weight, mix.gradient);
  return report;
}

}  // namespace mixpo

#pragma once

// Surrogate objectives and their closed-form gradients with respect to the
// target policy's logit table.
//
//   J_on     token-mean clipped surrogate, ratio pi_new / pi_old
//   J_off    token-mean of f(r_hat) * B, r_hat = pi_new / pi_guide
//   J_mix1   on_weight * J_on + mix_weight * J_off
//   J_mix    (off part + zero-reward part) / (off tokens + zero tokens);
//            the zero-reward ratio is also taken against the guide
//   J_mix2   on_weight * J_on + mix_weight * J_mix
//
// Guide ratios are clamped to [w_lower, w_upper]; no gradient flows through
// an active clamp.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string_view>

#include "mixpo/policy.hpp"

namespace mixpo {

struct MixConfig {
  double gamma = 0.05;
  double epsilon = 0.2;
  double w_lower = 0.2;
  double w_upper = 5.0;
  double on_weight = 0.5;
  double mix_weight = 0.5;

  void validate() const;
};

/// f(x) = x / (x + gamma).
double scale_f(double x, double gamma);
/// f'(x) = gamma / (x + gamma)^2.
double scale_f_prime(double x, double gamma);

struct SurrogateValue {
  double value;
  double d_ratio;
};

/// min(r * A, clamp(r, 1 - eps, 1 + eps) * A). At a tie the unclipped branch
/// supplies the derivative.
SurrogateValue clipped_surrogate(double ratio, double advantage, double epsilon);

/// Trajectories paired with one advantage each.
struct BatchView {
  std::span<const Trajectory> trajectories;
  std::span<const double> advantages;

  bool empty() const noexcept { return trajectories.empty(); }
  std::size_t token_count() const noexcept;
};

enum class Component { On, Off, Zero };
std::string_view component_name(Component c);

struct ComponentReport {
  /// Component objective normalized by its own token count.
  double value = 0.0;
  Table gradient;
  std::size_t token_count = 0;
  std::size_t trajectory_count = 0;
  /// Tokens whose guide ratio hit the clamp (guide-ratio components only).
  std::size_t clamped_tokens = 0;
  /// Weight of this component in the parent objective.
  double coefficient = 0.0;
};

struct ObjectiveReport {
  double value = 0.0;
  Table gradient;
  std::map<Component, ComponentReport> components;
  /// Token-count weights of the off and zero-reward parts of J_mix.
  std::optional<double> l1;
  std::optional<double> l2;

  const ComponentReport* component(Component c) const;
  double component_value(Component c) const;
  std::size_t clamped_tokens() const;
  /// Tokens that went through a guide-ratio clamp check.
  std::size_t guide_ratio_tokens() const;
};

ObjectiveReport objective_on(const PolicyParams& params, const PolicyParams& old_params, BatchView batch,
                             const MixConfig& config);

ObjectiveReport objective_off(const PolicyParams& params, const PolicyParams& guide_params, BatchView batch,
                              const MixConfig& config);

/// An empty on or off batch contributes a zero component.
ObjectiveReport objective_mix1(const PolicyParams& params, const PolicyParams& old_params,
                               const PolicyParams& guide_params, BatchView on_batch, BatchView off_batch,
                               const MixConfig& config);

/// J_mix. Either batch may be empty (its weight is then 0), not both.
ObjectiveReport objective_mix_method2(const PolicyParams& params, const PolicyParams& old_params,
                                      const PolicyParams& guide_params, BatchView off_batch, BatchView zero_batch,
                                      const MixConfig& config);

/// An empty on batch contributes a zero component.
ObjectiveReport objective_mix2(const PolicyParams& params, const PolicyParams& old_params,
                               const PolicyParams& guide_params, BatchView on_batch, BatchView off_batch,
                               BatchView zero_batch, const MixConfig& config);

}  // namespace mixpo

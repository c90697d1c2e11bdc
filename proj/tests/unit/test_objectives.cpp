#include "doctest.h"

#include <cmath>

#include "mixpo/advantages.hpp"
#include "mixpo/objectives.hpp"
#include "mixpo/rng.hpp"
#include "mixpo/verification.hpp"

using namespace mixpo;

namespace {

PolicyParams random_params(std::uint64_t seed) {
  PolicyParams p(Vocab(4), 2, 2);
  Rng rng(seed);
  for (double& v : p.table().flat()) v = rng.normal();
  return p;
}

/// Trajectory whose behavior log-probabilities come from `behavior`.
Trajectory fixed(const PolicyParams& behavior, std::uint32_t q, std::vector<TokenId> tokens, double r,
                 Source src = Source::OnPolicy) {
  Trajectory t;
  t.query.id = q;
  t.tokens = std::move(tokens);
  t.reward = r;
  t.source = src;
  t.behavior_logprobs = step_logprobs(behavior, t);
  return t;
}

void check_close(const Table& a, const Table& b, double tol) {
  REQUIRE(a.same_shape(b));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
}

bool all_zero(const Table& t) {
  for (double v : t.flat())
    if (v != 0.0) return false;
  return true;
}

}  // namespace

TEST_CASE("scaling function") {
  CHECK(scale_f(0.0, 0.05) == 0.0);
  CHECK(scale_f(1.0, 0.05) == doctest::Approx(0.9523809523809523).epsilon(1e-14));
  CHECK(scale_f(1000.0, 0.05) == doctest::Approx(0.9999500024998751).epsilon(1e-14));
  CHECK(scale_f_prime(0.0, 0.05) == 20.0);
  CHECK(scale_f_prime(1.0, 0.05) == doctest::Approx(0.045351473922902494).epsilon(1e-14));

  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const double x = rng.uniform(0.0, 10.0);
    const double gamma = rng.uniform(0.01, 0.3);
    const double h = 1e-4 * (x + gamma);
    const double numeric = (scale_f(x + h, gamma) - scale_f(x - h, gamma)) / (2 * h);
    CHECK(scale_f_prime(x, gamma) == doctest::Approx(numeric).epsilon(1e-8));
  }
}

TEST_CASE("clipped surrogate") {
  for (double a : {-2.0, 0.5, 3.0}) {
    const auto s = clipped_surrogate(1.0, a, 0.2);
    CHECK(s.value == a);
    CHECK(s.d_ratio == a);
  }
  const auto pos = clipped_surrogate(1.5, 1.0, 0.2);
  CHECK(pos.value == doctest::Approx(1.2));
  CHECK(pos.d_ratio == 0.0);
  const auto neg = clipped_surrogate(1.5, -1.0, 0.2);
  CHECK(neg.value == doctest::Approx(-1.5));
  CHECK(neg.d_ratio == -1.0);
  const auto low = clipped_surrogate(0.5, -1.0, 0.2);
  CHECK(low.value == doctest::Approx(-0.8));
  CHECK(low.d_ratio == 0.0);
}

TEST_CASE("on-policy objective examples") {
  const MixConfig mix;
  const PolicyParams p = random_params(1);
  const std::vector<Trajectory> batch{fixed(p, 0, {0, 1, 3}, 1.0), fixed(p, 0, {2, 2, 3}, 0.0)};
  const std::vector<double> adv{1.0, -1.0};
  const auto r = objective_on(p, p, {batch, adv}, mix);
  CHECK(r.value == doctest::Approx(0.0).scale(1.0));

  const std::vector<Trajectory> one{fixed(p, 1, {0, 3}, 1.0)};
  const std::vector<double> zero{0.0};
  const auto z = objective_on(p, p, {one, zero}, mix);
  CHECK(z.value == 0.0);
  CHECK(all_zero(z.gradient));
  CHECK_THROWS_AS(objective_on(p, p, {}, mix), std::invalid_argument);
}

TEST_CASE("off-policy objective examples") {
  const MixConfig mix;
  const PolicyParams p = random_params(2);
  const std::vector<Trajectory> batch{fixed(p, 0, {0, 1, 3}, 1.0, Source::OffPolicy),
                                      fixed(p, 1, {1, 1, 3}, 0.0, Source::OffPolicy)};
  const std::vector<double> adv{1.0, -1.0};
  CHECK(objective_off(p, p, {batch, adv}, mix).value == doctest::Approx(0.0).scale(1.0));
  const std::vector<double> zero{0.0, 0.0};
  const auto z = objective_off(p, random_params(3), {batch, zero}, mix);
  CHECK(z.value == 0.0);
  CHECK(all_zero(z.gradient));
}

TEST_CASE("single-token off-policy gradient factorizes") {
  MixConfig mix;
  mix.w_lower = 0.01;
  mix.w_upper = 100.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PolicyParams p = random_params(10 + seed);
    const PolicyParams guide = random_params(50 + seed);
    const std::vector<Trajectory> batch{fixed(guide, 0, {3}, 1.0, Source::OffPolicy)};
    const std::vector<double> adv{0.7};
    const auto r = objective_off(p, guide, {batch, adv}, mix);
    const double ratio = std::exp(trajectory_logprob(p, batch[0]) - trajectory_logprob(guide, batch[0]));
    Table expected = grad_trajectory_logprob(p, batch[0]);
    expected.scale(scale_f_prime(ratio, mix.gamma) * ratio * 0.7);
    check_close(r.gradient, expected, 1e-10);
  }
}

TEST_CASE("clamped guide ratios carry no gradient") {
  MixConfig mix;
  PolicyParams p(Vocab(4), 1, 2);
  PolicyParams guide(Vocab(4), 1, 2);
  const auto root = p.context_index(Query{0, {}}, {});
  guide.table()(root, 3) = 8.0;
  p.table()(root, 3) = -2.0;
  const std::vector<Trajectory> batch{fixed(guide, 0, {3}, 1.0, Source::OffPolicy)};
  const std::vector<double> adv{1.0};
  const auto r = objective_off(p, guide, {batch, adv}, mix);
  CHECK(r.clamped_tokens() == 1);
  CHECK(all_zero(r.gradient));
  CHECK(r.value == doctest::Approx(scale_f(mix.w_lower, mix.gamma)));
}

TEST_CASE("mixed objective arithmetic") {
  const MixConfig mix;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = make_random_instance({}, mix, 300 + seed);
    const auto r = evaluate_instance(ObjectiveKind::Mix1, inst, inst.params);
    const double on = r.component_value(Component::On);
    const double off = r.component_value(Component::Off);
    CHECK(r.value == doctest::Approx(0.5 * on + 0.5 * off).epsilon(1e-14));
    Table expected = r.component(Component::On)->gradient;
    expected.scale(0.5);
    expected.axpy(0.5, r.component(Component::Off)->gradient);
    check_close(r.gradient, expected, 1e-12);

    const auto on_only = evaluate_instance(ObjectiveKind::On, inst, inst.params);
    CHECK(on_only.value == doctest::Approx(on).epsilon(1e-14));
  }
}

TEST_CASE("zero-reward reuse objective examples") {
  const MixConfig mix;
  const PolicyParams p = random_params(4);
  const std::vector<Trajectory> off{fixed(p, 0, {0, 1, 3}, 1.0, Source::OffPolicy),
                                    fixed(p, 1, {2, 0, 3}, 1.0, Source::OffPolicy)};
  const std::vector<Trajectory> zero{fixed(p, 0, {1, 1, 3}, 0.0), fixed(p, 1, {0, 0, 3}, 0.0)};
  const auto [b, c] = shared_baseline_advantages(std::vector<double>{1, 1}, std::vector<double>{0, 0});
  const auto r = objective_mix_method2(p, p, p, {off, b.values}, {zero, c.values}, mix);
  CHECK(r.value == doctest::Approx(-0.023809523809523836).epsilon(1e-12));
  CHECK(*r.l1 == 0.5);
  CHECK(*r.l2 == 0.5);

  const auto [b_only, c_none] = shared_baseline_advantages(std::vector<double>{1, 0}, {});
  const std::vector<Trajectory> off2{off[0], fixed(p, 1, {2, 3}, 0.0, Source::OffPolicy)};
  const PolicyParams target = random_params(5);
  const auto reduced = objective_mix_method2(target, p, p, {off2, b_only.values}, {}, mix);
  const auto plain = objective_off(target, p, {off2, b_only.values}, mix);
  CHECK(*reduced.l1 == 1.0);
  CHECK(*reduced.l2 == 0.0);
  CHECK(reduced.value == doctest::Approx(plain.value).epsilon(1e-14));
  check_close(reduced.gradient, plain.gradient, 1e-14);
  CHECK_THROWS_AS(objective_mix_method2(target, p, p, {}, {}, mix), std::invalid_argument);
}

TEST_CASE("joint normalization decomposes by token shares") {
  const MixConfig mix;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = make_random_instance({}, mix, 500 + seed);
    const auto r = evaluate_instance(ObjectiveKind::MixMethod2, inst, inst.params);
    const auto& off = *r.component(Component::Off);
    const auto& zero = *r.component(Component::Zero);
    const double total = static_cast<double>(off.token_count + zero.token_count);
    CHECK(*r.l1 == static_cast<double>(off.token_count) / total);
    Table expected = off.gradient;
    expected.scale(*r.l1);
    expected.axpy(*r.l2, zero.gradient);
    check_close(r.gradient, expected, 1e-12);
    CHECK(r.value == doctest::Approx(*r.l1 * off.value + *r.l2 * zero.value).epsilon(1e-12));

    const auto full = evaluate_instance(ObjectiveKind::Mix2, inst, inst.params);
    CHECK(full.value == doctest::Approx(0.5 * full.component_value(Component::On) + 0.5 * r.value).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients match finite differences") {
  const MixConfig mix;
  std::size_t exclusions = 0;
  for (ObjectiveKind kind : kAllObjectiveKinds) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto inst = make_random_instance({}, mix, 1000 + seed);
      exclusions += inst.boundary_exclusions;
      // Step 1e-6 leaves about 1e-10 of rounding noise, hence the magnitude floor.
      const auto report = check_objective_gradient(kind, inst, kObjectiveStep, 1e-4);
      worst = std::max(worst, report.max_rel_error);
    }
    INFO(objective_kind_name(kind));
    CHECK(worst < 1e-5);
  }
  MESSAGE("boundary exclusions: " << exclusions);
}

TEST_CASE("zero advantages annihilate every objective") {
  const MixConfig mix;
  auto inst = make_random_instance({}, mix, 77);
  for (auto* v : {&inst.on_adv, &inst.zero_adv, &inst.off_adv_method1, &inst.off_adv_shared})
    std::fill(v->begin(), v->end(), 0.0);
  for (ObjectiveKind kind : kAllObjectiveKinds) {
    const auto r = evaluate_instance(kind, inst, inst.params);
    CHECK(r.value == 0.0);
    CHECK(all_zero(r.gradient));
  }
}

TEST_CASE("config validation") {
  MixConfig mix;
  CHECK_NOTHROW(mix.validate());
  mix.gamma = 0.6;
  CHECK_THROWS_AS(mix.validate(), std::invalid_argument);
  mix = {};
  mix.on_weight = 0.7;
  CHECK_THROWS_AS(mix.validate(), std::invalid_argument);
  mix = {};
  mix.w_lower = 1.5;
  CHECK_THROWS_AS(mix.validate(), std::invalid_argument);
}

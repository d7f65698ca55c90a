#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "driftgale/martingale.hpp"
#include "stats_util.hpp"

using namespace driftgale;

namespace {

// Closed-form oracle evaluated in extended precision, independent of the
// incremental update path.
long double closed_form_log(long double t, long double p, std::int64_t s, std::int64_t n) {
  const long double q = 1.0L - p;
  return t * (long double)(s) - (long double)(n)*std::log(q + p * std::exp(t));
}

}  // namespace

TEST_CASE("single updates match the closed form") {
  ExponentialMartingale m;
  m.update(1);
  // M_1 = 2e/(1+e)
  const double expected_up = 2.0 * std::exp(1.0) / (1.0 + std::exp(1.0));
  CHECK(m.value() == doctest::Approx(expected_up).epsilon(1e-12));
  CHECK(m.value() == doctest::Approx(1.462117).epsilon(1e-6));

  ExponentialMartingale m0;
  m0.update(0);
  // M_1 = 2/(1+e)
  const double expected_down = 2.0 / (1.0 + std::exp(1.0));
  CHECK(m0.value() == doctest::Approx(expected_down).epsilon(1e-12));
  CHECK(m0.value() == doctest::Approx(0.537883).epsilon(1e-6));

  // One correct plus one incorrect shrinks below 1: M_2 = 4e/(1+e)^2.
  m.update(0);
  const double expected_pair = 4.0 * std::exp(1.0) / std::pow(1.0 + std::exp(1.0), 2.0);
  CHECK(m.value() == doctest::Approx(expected_pair).epsilon(1e-12));
  CHECK(m.value() == doctest::Approx(0.786448).epsilon(1e-6));
  CHECK(m.value() < 1.0);
}

TEST_CASE("update rejects values outside {0,1}") {
  ExponentialMartingale m;
  CHECK_THROWS_AS(m.update(2), std::invalid_argument);
  CHECK_THROWS_AS(m.update(-1), std::invalid_argument);
}

TEST_CASE("exactness: log value matches closed form after long scripted sequences") {
  Rng rng(123);
  ExponentialMartingale m;
  for (int i = 0; i < 10000; ++i) {
    m.update(rng.bernoulli(0.5) ? 1 : 0);
    if (i % 997 == 0) {
      const long double oracle = closed_form_log(1.0L, 0.5L, m.correct_count(), m.steps());
      CHECK(std::abs(m.log_value() - double(oracle)) < 1e-12);
    }
  }
  const long double oracle = closed_form_log(1.0L, 0.5L, m.correct_count(), m.steps());
  CHECK(std::abs(m.log_value() - double(oracle)) < 1e-12);
  CHECK(m.log_value() != 0.0);
  CHECK(std::isfinite(m.log_value()));
}

TEST_CASE("crossing step for an all-correct streak at C=100 is exactly 13") {
  // Oracle: ceil(ln C / ln(2e/(1+e))).
  const double per_step = std::log(2.0 * std::exp(1.0) / (1.0 + std::exp(1.0)));
  const auto expected = std::int64_t(std::ceil(std::log(100.0) / per_step));
  REQUIRE(expected == 13);

  ExponentialMartingale m;
  AlertState alert{100.0};
  std::int64_t crossed_at = -1;
  for (int i = 1; i <= 20; ++i) {
    m.update(1);
    alert = check_alert(m, alert);
    if (alert.alerted && crossed_at < 0) crossed_at = *alert.discovery_step;
  }
  CHECK(crossed_at == 13);
  // 12 steps stay strictly below the threshold.
  CHECK(12.0 * per_step < std::log(100.0));
  CHECK(13.0 * per_step >= std::log(100.0));
}

TEST_CASE("alternating correctness never alerts at C=100") {
  ExponentialMartingale m;
  AlertState alert{100.0};
  for (int i = 0; i < 10000; ++i) {
    m.update(i % 2 == 0 ? 1 : 0);
    alert = check_alert(m, alert);
  }
  CHECK_FALSE(alert.alerted);
  // Per-pair multiplier below 1 drives the value down.
  CHECK(m.value() < 1.0);
}

TEST_CASE("threshold C=1 alerts immediately on a correct prediction") {
  ExponentialMartingale m;
  AlertState alert{1.0};
  m.update(1);
  alert = check_alert(m, alert);
  CHECK(alert.alerted);
  CHECK(*alert.discovery_step == 1);
}

TEST_CASE("first-crossing: discovery step is immutable under further updates") {
  ExponentialMartingale m;
  AlertState alert{100.0};
  for (int i = 0; i < 50; ++i) {
    m.update(1);
    alert = check_alert(m, alert);
  }
  REQUIRE(alert.alerted);
  CHECK(*alert.discovery_step == 13);
  for (int i = 0; i < 100; ++i) {
    m.update(0);
    alert = check_alert(m, alert);
  }
  CHECK(*alert.discovery_step == 13);
  CHECK(alert.alerted == alert.discovery_step.has_value());
}

TEST_CASE("params validation") {
  MartingaleParams bad_t{-1.0, 0.5};
  CHECK_THROWS_AS(bad_t.validate(), std::invalid_argument);
  MartingaleParams bad_p{1.0, 1.0};
  CHECK_THROWS_AS(bad_p.validate(), std::invalid_argument);
  MartingaleParams ok;
  CHECK(ok.q() == 0.5);
  CHECK(ok.t == 1.0);
}

TEST_CASE("simulate_null: Doob bound and analytic one-step mean") {
  MartingaleParams params;
  const Rng rng(2024);

  SUBCASE("doob bound at desk scale") {
    const auto result = simulate_null(params, 200, 20000, 100.0, rng);
    CHECK(result.crossing_fraction <= 0.01 + 3.0 * std::sqrt(0.01 * 0.99 / 20000.0));
  }

  SUBCASE("horizon 1: mean final value is analytically 1") {
    // Exact mean: 0.5 * 2e/(1+e) + 0.5 * 2/(1+e) = 1.
    const auto result = simulate_null(params, 1, 200000, 100.0, rng);
    // sd of the one-step value is ~0.46, so 3 sigma over 2e5 trials:
    CHECK(std::abs(result.mean_final_value - 1.0) < 3.0 * 0.47 / std::sqrt(200000.0));
  }

  SUBCASE("short horizon: empirical mean still concentrates near 1") {
    const auto result = simulate_null(params, 10, 200000, 100.0, rng);
    CHECK(std::abs(result.mean_final_value - 1.0) < 0.05);
  }

  SUBCASE("shifted streams cross almost surely") {
    const auto result = simulate_null(params, 200, 1000, 100.0, rng, 0.9);
    CHECK(result.crossing_fraction > 0.99);
  }

  SUBCASE("deterministic in trial count and jobs") {
    const auto a = simulate_null(params, 50, 2000, 100.0, rng);
    const auto b = simulate_null(params, 50, 2000, 100.0, rng);
    CHECK(a.crossing_fraction == b.crossing_fraction);
    CHECK(a.mean_final_value == b.mean_final_value);
    const auto c = simulate_null(params, 50, 2000, 100.0, rng, std::nullopt, 4);
    CHECK(c.crossing_fraction == a.crossing_fraction);
    CHECK(c.mean_final_value == a.mean_final_value);
  }
}

TEST_CASE("one-step ratio has conditional mean 1 under matching parameters") {
  // For matching params, E[M_{n+1}/M_n | prefix] = 1 regardless of the
  // prefix; checked from several distinct prefix states.
  for (double p : {0.3, 0.5, 0.8}) {
    MartingaleParams params;
    params.p = p;
    Rng rng = Rng(77).split("one-step-" + std::to_string(p));
    for (int prefix_len : {0, 17}) {
      ExponentialMartingale prefix(params);
      for (int i = 0; i < prefix_len; ++i) prefix.update(rng.bernoulli(p) ? 1 : 0);
      const double base = prefix.log_value();

      std::vector<double> ratios;
      ratios.reserve(100000);
      for (int i = 0; i < 100000; ++i) {
        ExponentialMartingale next = prefix;
        next.update(rng.bernoulli(p) ? 1 : 0);
        ratios.push_back(std::exp(next.log_value() - base));
      }
      const double mean = testutil::mean(ratios);
      const double se = testutil::sample_stddev(ratios) / std::sqrt(double(ratios.size()));
      CHECK(std::abs(mean - 1.0) <= 3.0 * se);
    }
  }
}

TEST_CASE("martingale value stays positive and finite in log space") {
  ExponentialMartingale m;
  for (int i = 0; i < 5000; ++i) m.update(0);
  CHECK(std::isfinite(m.log_value()));
  CHECK(m.value() >= 0.0);  // underflows to +0 in linear space, fine in log space
  CHECK(m.log_value() < 0.0);
}

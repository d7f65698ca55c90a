// Acceptance suite: runs every release criterion at its stated tolerance and
// prints one pass/fail line per criterion. Exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "driftgale/harness.hpp"
#include "stats_util.hpp"

using namespace driftgale;

namespace {

struct CriterionResult {
  std::string name;
  bool pass = false;
  std::string detail;
  std::string artifact;  // deterministic summary, compared byte-wise by criterion 10
  double seconds = 0.0;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

constexpr std::uint64_t kMasterSeed = 20240801;

ClassifierConfig image_classifier_config() {
  ClassifierConfig c;
  c.hidden_dims = {64, 32};
  c.learning_rate = 1e-3;
  c.initial_epochs = 20;
  c.finetune_steps_per_episode = 12;
  c.recent_pool_cap = 50;
  return c;
}

// 1. Doob/FPR guarantee with a stubbed fair-coin classifier:
//    1e4 trials, horizon 500, C=100; alert fraction <= 0.01 + 3 binomial SE.
CriterionResult criterion_doob_stub() {
  ExperimentSpec spec;
  spec.name = "acc_doob_stub";
  spec.kind = ExperimentKind::fpr_null;
  spec.trials = 10000;
  spec.horizon = 500;
  spec.seed = kMasterSeed;
  spec.variants = {Variant::ours};
  spec.stub_fair_coin = true;
  spec.generator.family = Family::gaussian_mean_drift;
  spec.generator.dim = 4;
  spec.generator.noise_scale = 1.0;
  spec.train_count = 1600;  // unseen pool of 533 covers the horizon
  spec.detector.classifier.initial_epochs = 0;

  const ExperimentResult result = run_experiment(spec, "", 1);
  const double fraction = result.table.rows[0].alert_fraction;
  const double bound = 0.01 + 3.0 * std::sqrt(0.01 * 0.99 / 10000.0);
  CriterionResult out;
  out.name = "doob-fpr-stub";
  out.pass = result.checks_passed && fraction <= bound;
  out.detail = "alert_fraction=" + fmt(fraction) + " <= " + fmt(bound);
  out.artifact = result.artifact_json;
  return out;
}

// 2. End-to-end FPR of the trained detector on no-shift gaussian streams:
//    300 trials x 200 episodes; two-sided binomial test at level 0.01 keeps
//    the FPR = 1/C hypothesis.
CriterionResult criterion_fpr_end_to_end() {
  ExperimentSpec spec;
  spec.name = "acc_fpr_ours";
  spec.kind = ExperimentKind::fpr_null;
  spec.trials = 300;
  spec.horizon = 200;
  spec.seed = kMasterSeed + 1;
  spec.variants = {Variant::ours};
  spec.generator.family = Family::gaussian_mean_drift;
  spec.generator.dim = 8;
  spec.generator.noise_scale = 1.0;
  spec.train_count = 639;  // split 213/213/213, no partner recycling at horizon 200
  spec.detector.classifier.hidden_dims = {32, 16};

  const ExperimentResult result = run_experiment(spec, "", 1);
  const VariantSummary& row = result.table.rows[0];
  const double pval = binomial_two_sided_p(row.alerts, row.trials, 0.01);
  CriterionResult out;
  out.name = "fpr-end-to-end";
  out.pass = result.checks_passed && pval >= 0.01;
  out.detail = "alerts=" + std::to_string(row.alerts) + "/300, binomial p=" + fmt(pval) +
               " >= 0.01";
  out.artifact = result.artifact_json;
  return out;
}

// 3. Martingale exactness over a 1e4-step scripted sequence and the exact
//    crossing step of an all-correct streak at C=100.
CriterionResult criterion_martingale_exactness() {
  Rng rng = Rng(kMasterSeed + 2).split("exactness");
  ExponentialMartingale m;
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    m.update(rng.bernoulli(0.5) ? 1 : 0);
    const long double closed =
        1.0L * (long double)(m.correct_count()) -
        (long double)(m.steps()) * std::log(0.5L + 0.5L * std::exp(1.0L));
    worst = std::max(worst, std::abs(m.log_value() - double(closed)));
  }

  ExponentialMartingale streak;
  AlertState alert{100.0};
  for (int i = 0; i < 20; ++i) {
    streak.update(1);
    alert = check_alert(streak, alert);
  }
  const std::int64_t crossing = alert.discovery_step.value_or(-1);

  CriterionResult out;
  out.name = "martingale-exactness";
  out.pass = worst < 1e-12 && crossing == 13;
  out.detail = "max |log_M - closed form| = " + fmt(worst) + " < 1e-12, crossing=" +
               std::to_string(crossing);
  out.artifact = "exactness worst=" + fmt(worst) + " crossing=" + std::to_string(crossing);
  return out;
}

// 4. Fair-coin property: three distinct fixed classifiers on 1e4 exchangeable pairs
//    each, accuracy within [0.485, 0.515].
CriterionResult criterion_fair_coin() {
  ExperimentSpec spec;
  spec.name = "acc_fair_coin";
  spec.kind = ExperimentKind::fair_coin;
  spec.trials = 10000;  // pairs per classifier
  spec.seed = kMasterSeed + 3;
  spec.generator.family = Family::gaussian_mean_drift;
  spec.generator.dim = 8;
  spec.generator.noise_scale = 1.0;
  spec.train_count = 300;
  spec.detector.classifier.initial_epochs = 10;
  spec.detector.classifier.learning_rate = 0.01;

  const ExperimentResult result = run_experiment(spec, "", 1);
  CriterionResult out;
  out.name = "fair-coin-classifier";
  out.pass = result.checks_passed;
  out.detail = result.checks_passed ? "3 classifiers within [0.485, 0.515]"
                                    : result.check_failures.front();
  out.artifact = result.artifact_json;
  return out;
}

// 5. One-step martingale identity: E[M_{n+1}/M_n] = 1 +/- 3 SE at 1e5 samples
//    for p in {0.3, 0.5, 0.8} with matching parameters. The same experiment
//    also Monte Carlo checks the raw process against Doob's bound.
CriterionResult criterion_one_step() {
  ExperimentSpec spec;
  spec.name = "acc_doob_onestep";
  spec.kind = ExperimentKind::martingale_doob;
  spec.trials = 100000;
  spec.horizon = 200;
  spec.seed = kMasterSeed + 4;

  const ExperimentResult result = run_experiment(spec, "", 1);
  CriterionResult out;
  out.name = "one-step-identity";
  out.pass = result.checks_passed;
  out.detail = result.checks_passed ? "mean ratio = 1 +/- 3 SE at p in {0.3, 0.5, 0.8}"
                                    : result.check_failures.front();
  out.artifact = result.artifact_json;
  return out;
}

// 6. Gradient check: analytic vs central finite differences on random
//    4-layer MLPs, 20 seeds, max relative error < 1e-4.
CriterionResult criterion_gradcheck() {
  ExperimentSpec spec;
  spec.name = "acc_gradcheck";
  spec.kind = ExperimentKind::gradcheck;
  spec.trials = 20;
  spec.seed = kMasterSeed + 5;

  const ExperimentResult result = run_experiment(spec, "", 1);
  CriterionResult out;
  out.name = "gradient-check";
  out.pass = result.checks_passed;
  out.detail = result.checks_passed ? "max relative error < 1e-4 over 20 seeds"
                                    : result.check_failures.front();
  out.artifact = result.artifact_json;
  return out;
}

// 7. Conformal validity: KS uniformity of 1e4 p-values on an exchangeable
//    stream at level 0.01, and betting-martingale null crossings at C=100
//    within 0.01 + 3 SE over 1e3 trials.
CriterionResult criterion_conformal_validity() {
  GeneratorSpec train_gen;
  train_gen.family = Family::gaussian_mean_drift;
  train_gen.dim = 4;
  train_gen.noise_scale = 1.0;
  train_gen.seed = kMasterSeed + 6;
  const auto train = generate(train_gen, 20);

  GeneratorSpec test_gen = train_gen;
  test_gen.seed = kMasterSeed + 7;
  test_gen.id_offset = 20;
  const auto test = generate(test_gen, 10000);

  CmDetector det = make_cm_detector(train, 100.0, Rng(kMasterSeed + 8));
  std::vector<double> pvalues;
  pvalues.reserve(test.size());
  for (const Episode& ep : test) pvalues.push_back(cm_observe(det, ep).p);
  const double ks = testutil::ks_statistic_uniform(pvalues);
  const double ks_crit = testutil::ks_critical(0.01, pvalues.size());

  int crossings = 0;
  const int trials = 1000;
  const Rng master(kMasterSeed + 9);
  for (int t = 0; t < trials; ++t) {
    Rng rng = master.split("betting-" + std::to_string(t));
    BettingMartingale bm(100);
    bool crossed = false;
    for (int i = 0; i < 500 && !crossed; ++i) {
      bm.update(rng.uniform_open());
      crossed = bm.log_value() >= std::log(100.0);
    }
    if (crossed) ++crossings;
  }
  const double fraction = double(crossings) / trials;
  const double bound = 0.01 + 3.0 * std::sqrt(0.01 * 0.99 / trials);

  CriterionResult out;
  out.name = "conformal-validity";
  out.pass = ks < ks_crit && fraction <= bound;
  out.detail = "KS=" + fmt(ks) + " < " + fmt(ks_crit) + ", null crossings=" + fmt(fraction) +
               " <= " + fmt(bound);
  out.artifact = "ks=" + fmt(ks) + " crossings=" + fmt(fraction);
  return out;
}

// 8. Detection ordering on the gradual brightness-drift scenario, 100
//    trials: median discovery ours < CM-FV < CM (censored trials count as
//    +inf) and ours' FNR = 0 at horizon 500.
CriterionResult criterion_detection_ordering() {
  ExperimentSpec spec;
  spec.name = "acc_ordering";
  spec.kind = ExperimentKind::detection_ordering;
  spec.trials = 100;
  spec.horizon = 500;
  spec.seed = kMasterSeed + 10;
  spec.variants = {Variant::ours, Variant::cm, Variant::cm_fv};
  spec.generator.family = Family::synthetic_image_brightness;
  spec.generator.image_shape = {16, 16};
  spec.generator.noise_scale = 0.0095;
  spec.train_count = 300;
  // Training spans a mild lighting decline (brightness 1 -> 0.75); the test
  // stream continues the decline at ten times the pace.
  spec.train_schedule = ShiftSchedule{ShiftKind::gradual_linear, 0, 0.25 / 300.0};
  spec.test_schedule = ShiftSchedule{ShiftKind::gradual_linear, -25, 0.01};
  spec.detector.classifier = image_classifier_config();

  const ExperimentResult result = run_experiment(spec, "", 1);
  CriterionResult out;
  out.name = "detection-ordering";
  out.pass = result.checks_passed;
  std::string medians;
  for (const VariantSummary& row : result.table.rows) {
    medians += variant_name(row.variant) + "=" +
               (row.median_discovery ? fmt(*row.median_discovery) : "inf") + " ";
  }
  out.detail = result.checks_passed ? "medians " + medians + "(ours FNR 0)"
                                    : result.check_failures.front();
  out.artifact = result.artifact_json;
  return out;
}

// 9. Alert-before-failure on the brightness scenario whose degradation
//    floor is crossed at episode 60: the detector alerts strictly before
//    the failure in at least 95 of 100 trials.
CriterionResult criterion_alert_before_failure() {
  ExperimentSpec spec;
  spec.name = "acc_alert_before_failure";
  spec.kind = ExperimentKind::alert_before_failure;
  spec.trials = 100;
  spec.horizon = 200;
  spec.seed = kMasterSeed + 11;
  spec.variants = {Variant::ours};
  spec.generator.family = Family::synthetic_image_brightness;
  spec.generator.image_shape = {16, 16};
  spec.generator.noise_scale = 0.0095;
  spec.train_count = 300;
  spec.test_schedule = ShiftSchedule{ShiftKind::gradual_linear, 0, 0.01};
  spec.failure_floor_frac = 0.4;
  spec.detector.classifier = image_classifier_config();

  const ExperimentResult result = run_experiment(spec, "", 1);
  CriterionResult out;
  out.name = "alert-before-failure";
  const auto pos = result.artifact_json.find("\"alerts_before_failure\": ");
  std::string count = "?";
  if (pos != std::string::npos) {
    const auto start = pos + 25;
    const auto end = result.artifact_json.find_first_of(",\n", start);
    count = result.artifact_json.substr(start, end - start);
  }
  out.pass = result.checks_passed;
  out.detail = count + "/100 alerts before failure episode 60 (>= 95 required)";
  out.artifact = result.artifact_json;
  return out;
}

using CriterionFn = CriterionResult (*)();

}  // namespace

int main() {
  const std::vector<std::pair<std::string, CriterionFn>> criteria = {
      {"doob-fpr-stub", &criterion_doob_stub},
      {"fpr-end-to-end", &criterion_fpr_end_to_end},
      {"martingale-exactness", &criterion_martingale_exactness},
      {"fair-coin-classifier", &criterion_fair_coin},
      {"one-step-identity", &criterion_one_step},
      {"gradient-check", &criterion_gradcheck},
      {"conformal-validity", &criterion_conformal_validity},
      {"detection-ordering", &criterion_detection_ordering},
      {"alert-before-failure", &criterion_alert_before_failure},
  };

  std::vector<CriterionResult> results;
  bool all_pass = true;
  int index = 1;
  for (const auto& [name, fn] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    CriterionResult result = fn();
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%2d/10] %s  %-22s %s  (%.1fs)\n", index++, result.pass ? "PASS" : "FAIL",
                result.name.c_str(), result.detail.c_str(), result.seconds);
    std::fflush(stdout);
    all_pass = all_pass && result.pass;
    results.push_back(std::move(result));
  }

  // 10. Determinism: repeating criteria 1-9 with the same master seed yields
  //     byte-identical summary artifacts.
  {
    const auto start = std::chrono::steady_clock::now();
    bool identical = true;
    std::string first_mismatch;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
      const CriterionResult replay = criteria[i].second();
      if (replay.artifact != results[i].artifact) {
        identical = false;
        first_mismatch = criteria[i].first;
        break;
      }
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string detail = identical
                                   ? "replayed criteria 1-9: byte-identical artifacts"
                                   : "artifact mismatch in " + first_mismatch;
    std::printf("[10/10] %s  %-22s %s  (%.1fs)\n", identical ? "PASS" : "FAIL", "determinism",
                detail.c_str(), seconds);
    all_pass = all_pass && identical;
  }

  std::printf("%s\n", all_pass ? "acceptance: ALL CRITERIA PASSED"
                               : "acceptance: FAILURES PRESENT");
  return all_pass ? 0 : 1;
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "driftgale/datagen.hpp"
#include "driftgale/detector.hpp"

namespace driftgale {

enum class ExperimentKind {
  fpr_null,
  detection_ordering,
  alert_before_failure,
  martingale_doob,
  fair_coin,
  gradcheck,
};

std::string experiment_kind_name(ExperimentKind kind);
ExperimentKind experiment_kind_from_name(const std::string& name);

// One experiment per declarative JSON file; CLI flags may override trials,
// horizon, seed, and jobs. For the verification kinds, `trials` counts Monte
// Carlo trials (martingale_doob), evaluation pairs per classifier
// (fair_coin), or model seeds (gradcheck).
struct ExperimentSpec {
  std::string name = "experiment";
  ExperimentKind kind = ExperimentKind::fpr_null;
  int trials = 100;
  std::int64_t horizon = 500;
  std::uint64_t seed = 0;
  std::vector<Variant> variants{Variant::ours};

  GeneratorSpec generator;      // family, dim/shape, noise_scale
  ShiftSchedule train_schedule;  // applied to the training stream
  ShiftSchedule test_schedule;   // applied to the test stream
  std::int64_t train_count = 300;

  DetectorConfig detector;
  bool stub_fair_coin = false;  // fpr_null: scripted fair-coin judge instead of a trained classifier
  bool stop_after_alert = true;
  bool write_traces = false;
  double failure_floor_frac = 0.4;  // alert_before_failure

  static ExperimentSpec from_json_text(const std::string& text);
  static ExperimentSpec from_json_file(const std::filesystem::path& path);
  std::string to_json() const;  // resolved spec, embedded in every artifact
};

// Per-variant reporting row. Mean discovery time is over true positives
// only; a variant with >= 95% false negatives is marked failure and carries
// no mean. Medians treat censored trials (no alert within the horizon) as
// +infinity.
struct VariantSummary {
  Variant variant = Variant::ours;
  int trials = 0;
  int alerts = 0;
  double alert_fraction = 0.0;
  double false_negative_rate = 0.0;  // shifted scenarios
  std::optional<double> mean_discovery;
  std::optional<double> median_discovery;
  bool failure = false;
};

struct SummaryTable {
  std::vector<VariantSummary> rows;

  std::string to_csv() const;
};

struct ExperimentResult {
  SummaryTable table;
  std::string artifact_json;  // deterministic summary artifact
  bool checks_passed = true;
  std::vector<std::string> check_failures;
};

// Executes the experiment with per-trial seeds derived from the master seed
// (trials fan across `jobs` threads; aggregation is keyed by trial index, so
// the artifact is independent of jobs). Writes <name>_summary.json and, for
// detection kinds, <name>_summary.csv plus per-trial traces when requested.
// Pass an empty out_dir to skip writing files.
ExperimentResult run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir,
                                int jobs = 1);

struct TracePlotData {
  std::string csv;
  std::vector<Variant> padded;  // variants padded to the longest horizon
};

// Wide per-step martingale-value CSV across variants (one value column per
// report) with an alert-step annotation row. Reports of unequal length are
// padded with their last value and flagged. Throws on an empty list.
TracePlotData emit_trace_plot_data(const std::vector<DetectionReport>& reports);

// Exact two-sided binomial test p-value for k successes in n trials under
// success probability p0 (sum of outcome probabilities not exceeding the
// observed one).
double binomial_two_sided_p(int k, int n, double p0);

std::string version_string();

}  // namespace driftgale

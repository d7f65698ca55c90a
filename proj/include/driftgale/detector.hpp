#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "driftgale/conformal.hpp"
#include "driftgale/episode.hpp"
#include "driftgale/martingale.hpp"
#include "driftgale/recency.hpp"
#include "driftgale/rng.hpp"

namespace driftgale {

enum class Variant { ours, cm, cm_fv };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct DetectorConfig {
  double threshold_c = 100.0;
  std::uint64_t seed = 0;
  ClassifierConfig classifier;
  MartingaleParams martingale;
  int pca_dim = 16;            // cm_fv feature dimension
  bool record_pair_audit = false;  // keep per-step pair audit records (ours)

  // Guaranteed false-positive bound, exactly 1/threshold_c.
  double epsilon() const { return 1.0 / threshold_c; }
  void validate() const;  // threshold_c > 1
};

struct StepRecord {
  std::int64_t step = 0;  // 1-based count of observed test episodes
  std::int64_t episode_id = 0;
  double stat = 0.0;   // y for ours, conformal p for cm/cm_fv
  double log_m = 0.0;  // log martingale value after this step
  bool alerted = false;
};

// One judged pair (ours variant, recorded when record_pair_audit is set).
struct PairAuditRecord {
  std::int64_t step = 0;
  std::int64_t episode_id = 0;  // incoming test episode
  std::int64_t partner_id = 0;  // held-out unseen partner
  int slot_bit = 0;
  int predicted_label = 0;
  int y = 0;
};

struct DetectionReport {
  Variant variant = Variant::ours;
  std::vector<StepRecord> steps;
  std::optional<std::int64_t> discovery_step;
  bool false_negative = false;
  bool shifted_stream = false;
  std::int64_t horizon = 0;
  std::vector<std::string> warnings;
  std::string config_echo;  // resolved config as JSON

  // Summary (no per-step data) as deterministic JSON.
  std::string to_json() const;
  // Per-step trace "n,y,log_M,M,alerted" (p replaces y for conformal
  // variants; M prints as inf above exp(700)).
  std::string trace_csv() const;
};

// Prediction strategy judged on each test pair. ClassifierJudge wraps the
// recency classifier; ScriptedJudge injects deterministic or coin-flip
// correctness for martingale-level tests.
class PairJudge {
 public:
  virtual ~PairJudge() = default;
  virtual int predict(const PairExample& pair) = 0;
  // Post-prediction hook, called after the episode joined the recent pool.
  virtual void on_episode(SplitDatasets& /*split*/, Rng& /*rng*/) {}
};

class ClassifierJudge : public PairJudge {
 public:
  explicit ClassifierJudge(RecencyClassifier classifier) : classifier_(std::move(classifier)) {}
  int predict(const PairExample& pair) override;
  void on_episode(SplitDatasets& split, Rng& rng) override;
  const RecencyClassifier& classifier() const { return classifier_; }

 private:
  RecencyClassifier classifier_;
};

class ScriptedJudge : public PairJudge {
 public:
  // Forces the correctness indicator to follow the given 0/1 sequence.
  static std::unique_ptr<ScriptedJudge> from_sequence(std::vector<int> y_sequence);
  // Correct with probability `accuracy`, drawn from an own rng stream.
  static std::unique_ptr<ScriptedJudge> coin(double accuracy, const Rng& rng);

  int predict(const PairExample& pair) override;

 private:
  ScriptedJudge() = default;
  std::vector<int> sequence_;
  std::size_t pos_ = 0;
  bool use_coin_ = false;
  double accuracy_ = 0.5;
  Rng rng_;
};

// Single-deployment shift detector behind one contract for all variants.
// observe() must be called once per test episode, in id order; prediction
// happens before the episode enters any pool or training step.
class ShiftDetector {
 public:
  static ShiftDetector fit(Variant variant, const std::vector<Episode>& d_orig,
                           const DetectorConfig& config);
  // ours-variant with an injected judge (stub or pre-trained classifier).
  static ShiftDetector fit_with_judge(std::unique_ptr<PairJudge> judge,
                                      const std::vector<Episode>& d_orig,
                                      const DetectorConfig& config);

  struct Observation {
    double log_m = 0.0;
    double stat = 0.0;
    bool alerted_now = false;
  };
  Observation observe(const Episode& episode);

  // Observes up to `horizon` episodes from the stream. false_negative is set
  // iff the stream is declared shifted and no alert fired within the
  // horizon. stop_after_alert truncates the trace at the first crossing
  // (discovery statistics are unaffected).
  DetectionReport run_deployment(EpisodeStream& test_stream, std::int64_t horizon,
                                 bool stream_shifted = false, bool stop_after_alert = false);

  Variant variant() const { return variant_; }
  const AlertState& alert() const { return alert_; }
  std::int64_t steps_observed() const { return steps_observed_; }
  const std::vector<StepRecord>& trace() const { return trace_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const DetectorConfig& config() const { return config_; }
  // Valid for the ours variant only.
  const SplitDatasets& split() const;
  const std::vector<PairAuditRecord>& pair_audit() const { return pair_audit_; }
  // Audit records as JSONL, one object per judged pair.
  std::string pair_audit_jsonl() const;

 private:
  ShiftDetector(Variant variant, const DetectorConfig& config);
  void init_ours(const Rng& master, const std::vector<Episode>& d_orig);

  Variant variant_;
  DetectorConfig config_;
  AlertState alert_;
  std::vector<StepRecord> trace_;
  std::vector<PairAuditRecord> pair_audit_;
  std::vector<std::string> warnings_;
  std::int64_t steps_observed_ = 0;
  std::optional<std::int64_t> last_test_id_;

  // ours
  SplitDatasets split_;
  std::unique_ptr<PairJudge> judge_;
  ExponentialMartingale martingale_;
  std::vector<std::size_t> unseen_remaining_;
  bool recycling_partners_ = false;
  std::int64_t next_internal_id_ = 0;
  Rng partner_rng_;
  Rng pair_rng_;
  Rng finetune_rng_;

  // cm / cm_fv
  std::optional<CmDetector> cm_;

  Observation observe_ours(const Episode& episode);
  Observation observe_cm(const Episode& episode);
};

}  // namespace driftgale

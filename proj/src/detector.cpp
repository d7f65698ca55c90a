#include "driftgale/detector.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace driftgale {

namespace {

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

nlohmann::ordered_json config_to_json(const DetectorConfig& config) {
  nlohmann::ordered_json j;
  j["threshold_c"] = config.threshold_c;
  j["epsilon"] = config.epsilon();
  j["seed"] = config.seed;
  j["pca_dim"] = config.pca_dim;
  nlohmann::ordered_json jm;
  jm["t"] = config.martingale.t;
  jm["p"] = config.martingale.p;
  jm["q"] = config.martingale.q();
  j["martingale"] = std::move(jm);
  nlohmann::ordered_json jc;
  jc["hidden_dims"] = config.classifier.hidden_dims;
  jc["batch_size"] = config.classifier.batch_size;
  jc["initial_epochs"] = config.classifier.initial_epochs;
  jc["finetune_steps_per_episode"] = config.classifier.finetune_steps_per_episode;
  jc["learning_rate"] = config.classifier.learning_rate;
  jc["symmetrized_scoring"] = config.classifier.symmetrized_scoring;
  if (config.classifier.recent_pool_cap) {
    jc["recent_pool_cap"] = *config.classifier.recent_pool_cap;
  }
  jc["fractions"] = {config.classifier.fractions.unseen, config.classifier.fractions.older,
                     config.classifier.fractions.recent};
  j["classifier"] = std::move(jc);
  return j;
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::ours: return "ours";
    case Variant::cm: return "cm";
    case Variant::cm_fv: return "cm_fv";
  }
  return "ours";
}

Variant variant_from_name(const std::string& name) {
  if (name == "ours") return Variant::ours;
  if (name == "cm") return Variant::cm;
  if (name == "cm_fv" || name == "cm-fv") return Variant::cm_fv;
  throw std::invalid_argument("unknown variant: " + name);
}

void DetectorConfig::validate() const {
  if (!(threshold_c > 1.0)) throw std::invalid_argument("detector config: threshold_c must exceed 1");
  martingale.validate();
}

std::string DetectionReport::to_json() const {
  nlohmann::ordered_json j;
  j["variant"] = variant_name(variant);
  j["horizon"] = horizon;
  j["steps_observed"] = std::int64_t(steps.size());
  if (discovery_step) {
    j["discovery_step"] = *discovery_step;
  } else {
    j["discovery_step"] = nullptr;
  }
  j["alerted"] = discovery_step.has_value();
  j["shifted_stream"] = shifted_stream;
  j["false_negative"] = false_negative;
  j["warnings"] = warnings;
  if (!config_echo.empty()) j["config"] = nlohmann::ordered_json::parse(config_echo);
  return j.dump(2);
}

std::string DetectionReport::trace_csv() const {
  const bool conformal = variant != Variant::ours;
  std::string out = conformal ? "n,p,log_M,M,alerted\n" : "n,y,log_M,M,alerted\n";
  for (const StepRecord& rec : steps) {
    out += std::to_string(rec.step);
    out += ',';
    out += conformal ? format_double(rec.stat) : std::to_string(int(rec.stat));
    out += ',';
    out += format_double(rec.log_m);
    out += ',';
    // M is display-clamped to inf above exp(700).
    out += rec.log_m > 700.0 ? "inf" : format_double(std::exp(rec.log_m));
    out += ',';
    out += rec.alerted ? '1' : '0';
    out += '\n';
  }
  return out;
}

int ClassifierJudge::predict(const PairExample& pair) {
  return predict_pair(classifier_, pair).predicted_label;
}

void ClassifierJudge::on_episode(SplitDatasets& split, Rng& rng) {
  finetune_step(classifier_, split, rng);
}

std::unique_ptr<ScriptedJudge> ScriptedJudge::from_sequence(std::vector<int> y_sequence) {
  auto judge = std::unique_ptr<ScriptedJudge>(new ScriptedJudge());
  judge->sequence_ = std::move(y_sequence);
  return judge;
}

std::unique_ptr<ScriptedJudge> ScriptedJudge::coin(double accuracy, const Rng& rng) {
  auto judge = std::unique_ptr<ScriptedJudge>(new ScriptedJudge());
  judge->use_coin_ = true;
  judge->accuracy_ = accuracy;
  judge->rng_ = rng.split("scripted-coin");
  return judge;
}

int ScriptedJudge::predict(const PairExample& pair) {
  bool correct;
  if (use_coin_) {
    correct = rng_.bernoulli(accuracy_);
  } else {
    if (pos_ >= sequence_.size()) {
      throw std::runtime_error("scripted judge: sequence exhausted");
    }
    correct = sequence_[pos_++] != 0;
  }
  return correct ? pair.label : 1 - pair.label;
}

ShiftDetector::ShiftDetector(Variant variant, const DetectorConfig& config)
    : variant_(variant), config_(config), martingale_(config.martingale) {
  alert_.threshold_c = config.threshold_c;
}

ShiftDetector ShiftDetector::fit(Variant variant, const std::vector<Episode>& d_orig,
                                 const DetectorConfig& config) {
  config.validate();
  if (d_orig.empty()) throw std::invalid_argument("fit: empty training set");
  const Rng master(config.seed);

  if (variant == Variant::ours) {
    Rng split_rng_child = master.split("split");
    ShiftDetector det(variant, config);
    det.split_ = make_split(d_orig, config.classifier.fractions, split_rng_child);
    Rng classifier_rng = master.split("classifier");
    RecencyClassifier classifier =
        make_classifier(int(d_orig.front().features.size()), config.classifier, classifier_rng);
    Rng train_rng = master.split("train");
    train_initial(classifier, det.split_, train_rng);
    det.judge_ = std::make_unique<ClassifierJudge>(std::move(classifier));
    det.init_ours(master, d_orig);
    return det;
  }

  ShiftDetector det(variant, config);
  det.cm_ = make_cm_detector(d_orig, config.threshold_c, master.split("conformal"),
                             variant == Variant::cm_fv ? std::optional<int>(config.pca_dim)
                                                       : std::nullopt);
  if (variant == Variant::cm_fv && det.cm_->extractor.rank_reduced) {
    det.warnings_.push_back("pca rank reduction: requested " +
                            std::to_string(det.cm_->extractor.requested_dim) + " components, kept " +
                            std::to_string(det.cm_->extractor.components.rows));
  }
  return det;
}

ShiftDetector ShiftDetector::fit_with_judge(std::unique_ptr<PairJudge> judge,
                                            const std::vector<Episode>& d_orig,
                                            const DetectorConfig& config) {
  config.validate();
  if (d_orig.empty()) throw std::invalid_argument("fit: empty training set");
  const Rng master(config.seed);
  ShiftDetector det(Variant::ours, config);
  Rng split_rng_child = master.split("split");
  det.split_ = make_split(d_orig, config.classifier.fractions, split_rng_child);
  det.judge_ = std::move(judge);
  det.init_ours(master, d_orig);
  return det;
}

void ShiftDetector::init_ours(const Rng& master, const std::vector<Episode>& d_orig) {
  partner_rng_ = master.split("heldout");
  pair_rng_ = master.split("pairs");
  finetune_rng_ = master.split("finetune");
  unseen_remaining_.resize(split_.unseen.size());
  for (std::size_t i = 0; i < unseen_remaining_.size(); ++i) unseen_remaining_[i] = i;
  next_internal_id_ = d_orig.back().id + 1;
}

const SplitDatasets& ShiftDetector::split() const {
  if (variant_ != Variant::ours) throw std::logic_error("split(): not an ours-variant detector");
  return split_;
}

std::string ShiftDetector::pair_audit_jsonl() const {
  std::string out;
  for (const PairAuditRecord& rec : pair_audit_) {
    nlohmann::ordered_json j;
    j["step"] = rec.step;
    j["episode_id"] = rec.episode_id;
    j["partner_id"] = rec.partner_id;
    j["slot_bit"] = rec.slot_bit;
    j["predicted_label"] = rec.predicted_label;
    j["y"] = rec.y;
    out += j.dump();
    out += '\n';
  }
  return out;
}

ShiftDetector::Observation ShiftDetector::observe(const Episode& episode) {
  if (last_test_id_ && episode.id <= *last_test_id_) {
    throw std::invalid_argument("observe: out-of-order episode id " + std::to_string(episode.id));
  }
  last_test_id_ = episode.id;
  const Observation obs =
      variant_ == Variant::ours ? observe_ours(episode) : observe_cm(episode);
  trace_.push_back(StepRecord{steps_observed_, episode.id, obs.stat, obs.log_m,
                              alert_.alerted});
  return obs;
}

ShiftDetector::Observation ShiftDetector::observe_ours(const Episode& episode) {
  if (!judge_) throw std::logic_error("observe: detector not fitted");

  // Held-out partner: without replacement until the unseen set is exhausted,
  // then uniform with replacement (flagged once).
  std::size_t partner_index;
  if (!unseen_remaining_.empty()) {
    const std::size_t pick = std::size_t(partner_rng_.uniform_index(unseen_remaining_.size()));
    partner_index = unseen_remaining_[pick];
    unseen_remaining_[pick] = unseen_remaining_.back();
    unseen_remaining_.pop_back();
  } else {
    if (!recycling_partners_) {
      recycling_partners_ = true;
      warnings_.push_back("held-out partners exhausted after step " +
                          std::to_string(steps_observed_) +
                          "; recycling with replacement (guarantee caveat)");
    }
    partner_index = std::size_t(partner_rng_.uniform_index(split_.unseen.size()));
  }

  const int slot_bit = int(pair_rng_.next_u64() & 1u);
  const PairExample pair = make_pair(split_.unseen[partner_index], episode, slot_bit);
  const int predicted = judge_->predict(pair);
  const int y = predicted == pair.label ? 1 : 0;
  if (config_.record_pair_audit) {
    pair_audit_.push_back(PairAuditRecord{steps_observed_ + 1, episode.id,
                                          split_.unseen[partner_index].id, slot_bit, predicted,
                                          y});
  }

  martingale_.update(y);
  ++steps_observed_;
  const bool was_alerted = alert_.alerted;
  alert_ = check_alert(martingale_, alert_);

  Episode stored = episode;
  stored.id = next_internal_id_++;
  append_recent(split_, std::move(stored), config_.classifier.recent_pool_cap);
  judge_->on_episode(split_, finetune_rng_);

  Observation obs;
  obs.log_m = martingale_.log_value();
  obs.stat = double(y);
  obs.alerted_now = alert_.alerted && !was_alerted;
  return obs;
}

ShiftDetector::Observation ShiftDetector::observe_cm(const Episode& episode) {
  if (!cm_) throw std::logic_error("observe: detector not fitted");
  const CmStep step = cm_observe(*cm_, episode);
  ++steps_observed_;
  alert_ = cm_->alert;

  Observation obs;
  obs.log_m = step.log_martingale;
  obs.stat = step.p;
  obs.alerted_now = step.alerted_now;
  return obs;
}

DetectionReport ShiftDetector::run_deployment(EpisodeStream& test_stream, std::int64_t horizon,
                                              bool stream_shifted, bool stop_after_alert) {
  if (horizon < 0) throw std::invalid_argument("run_deployment: negative horizon");
  for (std::int64_t i = 0; i < horizon && !test_stream.exhausted(); ++i) {
    const Observation obs = observe(test_stream.next());
    if (stop_after_alert && obs.alerted_now) break;
  }

  DetectionReport report;
  report.variant = variant_;
  report.steps = trace_;
  report.discovery_step = alert_.discovery_step;
  report.shifted_stream = stream_shifted;
  report.false_negative = stream_shifted && !alert_.alerted;
  report.horizon = horizon;
  report.warnings = warnings_;
  report.config_echo = config_to_json(config_).dump();
  return report;
}

}  // namespace driftgale

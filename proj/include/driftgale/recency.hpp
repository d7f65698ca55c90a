#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "driftgale/episode.hpp"
#include "driftgale/nn.hpp"
#include "driftgale/rng.hpp"

namespace driftgale {

struct SplitFractions {
  double unseen = 1.0 / 3.0;
  double older = 1.0 / 3.0;
  double recent = 1.0 / 3.0;
};

// Three-way partition of the training sequence: a uniformly sampled held-back
// "unseen" set, and the remainder split by temporal order into "older"
// (earlier ids) and "recent" (later ids). Disjoint by episode id; the recent
// pool grows at test time.
struct SplitDatasets {
  std::vector<Episode> unseen;
  std::vector<Episode> older;
  std::vector<Episode> recent;
};

// Throws std::invalid_argument when the fractions are invalid or too few
// episodes remain for any partition. d_orig must be id-sorted.
SplitDatasets make_split(const std::vector<Episode>& d_orig, const SplitFractions& fractions,
                         Rng& rng);

// Appends a test-time episode to the recent pool, evicting the oldest entry
// when a sliding-window cap is set.
void append_recent(SplitDatasets& split, Episode episode,
                   std::optional<std::size_t> cap = std::nullopt);

// An unordered sample pair presented in randomized slots. label = 1 means
// slot_b holds the more recent sample; slot_bit records the uniform draw
// that chose the presentation (bit 0 -> recent in slot_b).
struct PairExample {
  std::vector<double> slot_a;
  std::vector<double> slot_b;
  int label = 1;
  int slot_bit = 0;
  std::int64_t older_id = -1;
  std::int64_t recent_id = -1;
};

// Deterministic pair construction from a forced slot bit.
PairExample make_pair(const Episode& older_episode, const Episode& recent_episode, int slot_bit);

// Uniform draw from each pool, uniform slot assignment. Throws on empty pools.
PairExample sample_pair(const std::vector<Episode>& older_pool,
                        const std::vector<Episode>& recent_pool, Rng& rng);

struct ClassifierConfig {
  std::vector<int> hidden_dims{64, 32};
  int batch_size = 32;
  int initial_epochs = 20;
  int finetune_steps_per_episode = 5;
  double learning_rate = 1e-4;
  // Score pairs as 0.5*(f(a,b) + 1 - f(b,a)) instead of f(a,b).
  bool symmetrized_scoring = false;
  std::optional<std::size_t> recent_pool_cap;
  SplitFractions fractions;
};

// Binary predictor over concatenated pairs (input dimension 2*d) plus its
// optimizer state.
struct RecencyClassifier {
  MlpModel model;
  AdamState adam;
  ClassifierConfig config;

  int pair_input_dim() const { return model.input_dim(); }
  int feature_dim() const { return model.input_dim() / 2; }
};

RecencyClassifier make_classifier(int feature_dim, const ClassifierConfig& config, Rng& rng);

// initial_epochs passes of minibatch Adam over freshly sampled older/recent
// pairs; pairs are re-sampled every epoch. No-op when initial_epochs == 0.
void train_initial(RecencyClassifier& classifier, const SplitDatasets& split, Rng& rng);

struct PairPrediction {
  int predicted_label = 1;  // 1 iff score >= 0.5 (ties resolve to 1)
  int y = 0;                // 1 iff predicted_label == pair.label
  double prob_b_recent = 0.5;
};

PairPrediction predict_pair(const RecencyClassifier& classifier, const PairExample& pair);

// finetune_steps_per_episode minibatch Adam steps on freshly sampled pairs.
void finetune_step(RecencyClassifier& classifier, const SplitDatasets& split, Rng& rng);

// Fraction of freshly sampled pairs judged correctly; evaluation helper used
// by tests and experiments.
double pair_accuracy(const RecencyClassifier& classifier, const std::vector<Episode>& older_pool,
                     const std::vector<Episode>& recent_pool, int pairs, Rng& rng);

}  // namespace driftgale

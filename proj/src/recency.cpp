#include "driftgale/recency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace driftgale {

namespace {

void validate_fractions(const SplitFractions& f) {
  if (!(f.unseen > 0.0 && f.older > 0.0 && f.recent > 0.0)) {
    throw std::invalid_argument("make_split: fractions must be positive");
  }
  if (std::abs(f.unseen + f.older + f.recent - 1.0) > 1e-9) {
    throw std::invalid_argument("make_split: fractions must sum to 1");
  }
}

Tensor2 pairs_to_batch(const std::vector<PairExample>& pairs) {
  const int d = int(pairs.front().slot_a.size());
  Tensor2 batch(int(pairs.size()), 2 * d);
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    std::copy(pairs[r].slot_a.begin(), pairs[r].slot_a.end(),
              batch.data.begin() + std::ptrdiff_t(r) * 2 * d);
    std::copy(pairs[r].slot_b.begin(), pairs[r].slot_b.end(),
              batch.data.begin() + std::ptrdiff_t(r) * 2 * d + d);
  }
  return batch;
}

void train_on_pairs(RecencyClassifier& classifier, const std::vector<PairExample>& pairs) {
  const Tensor2 batch = pairs_to_batch(pairs);
  std::vector<double> labels(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) labels[i] = double(pairs[i].label);
  ForwardCache cache;
  forward(classifier.model, batch, &cache);
  const Gradients grads = backward(classifier.model, cache, labels);
  adam_step(classifier.model, grads, classifier.adam);
}

std::vector<PairExample> draw_pairs(const SplitDatasets& split, int count, Rng& rng) {
  std::vector<PairExample> pairs;
  pairs.reserve(std::size_t(count));
  for (int i = 0; i < count; ++i) pairs.push_back(sample_pair(split.older, split.recent, rng));
  return pairs;
}

}  // namespace

SplitDatasets make_split(const std::vector<Episode>& d_orig, const SplitFractions& fractions,
                         Rng& rng) {
  validate_fractions(fractions);
  const std::size_t n = d_orig.size();
  if (n < 3) throw std::invalid_argument("make_split: need at least 3 episodes");
  for (std::size_t i = 1; i < n; ++i) {
    if (d_orig[i].id <= d_orig[i - 1].id) {
      throw std::invalid_argument("make_split: episodes must be id-sorted");
    }
  }

  const auto n_unseen = std::size_t(std::llround(fractions.unseen * double(n)));
  const auto n_older = std::size_t(std::llround(fractions.older * double(n)));
  if (n_unseen < 1 || n_older < 1 || n_unseen + n_older + 1 > n) {
    throw std::invalid_argument("make_split: too few episodes for requested fractions");
  }

  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), 0);
  rng.shuffle(indices);

  std::unordered_set<std::size_t> unseen_idx(indices.begin(),
                                             indices.begin() + std::ptrdiff_t(n_unseen));
  SplitDatasets split;
  split.unseen.reserve(n_unseen);
  for (std::size_t i = 0; i < n; ++i) {
    if (unseen_idx.count(i)) split.unseen.push_back(d_orig[i]);
  }
  // Remaining episodes stay in temporal order: earlier ids become older,
  // later ids become recent.
  for (std::size_t i = 0; i < n; ++i) {
    if (unseen_idx.count(i)) continue;
    if (split.older.size() < n_older) {
      split.older.push_back(d_orig[i]);
    } else {
      split.recent.push_back(d_orig[i]);
    }
  }
  return split;
}

void append_recent(SplitDatasets& split, Episode episode, std::optional<std::size_t> cap) {
  split.recent.push_back(std::move(episode));
  if (cap && split.recent.size() > *cap) {
    split.recent.erase(split.recent.begin(),
                       split.recent.begin() + std::ptrdiff_t(split.recent.size() - *cap));
  }
}

PairExample make_pair(const Episode& older_episode, const Episode& recent_episode, int slot_bit) {
  if (slot_bit != 0 && slot_bit != 1) throw std::invalid_argument("make_pair: slot bit must be 0 or 1");
  if (older_episode.features.size() != recent_episode.features.size()) {
    throw std::invalid_argument("make_pair: feature dimension mismatch");
  }
  PairExample pair;
  pair.slot_bit = slot_bit;
  pair.older_id = older_episode.id;
  pair.recent_id = recent_episode.id;
  if (slot_bit == 0) {
    pair.slot_a = older_episode.features;
    pair.slot_b = recent_episode.features;
    pair.label = 1;
  } else {
    pair.slot_a = recent_episode.features;
    pair.slot_b = older_episode.features;
    pair.label = 0;
  }
  return pair;
}

PairExample sample_pair(const std::vector<Episode>& older_pool,
                        const std::vector<Episode>& recent_pool, Rng& rng) {
  if (older_pool.empty() || recent_pool.empty()) {
    throw std::invalid_argument("sample_pair: empty pool");
  }
  const Episode& older_ep = older_pool[rng.uniform_index(older_pool.size())];
  const Episode& recent_ep = recent_pool[rng.uniform_index(recent_pool.size())];
  const int bit = int(rng.next_u64() & 1u);
  return make_pair(older_ep, recent_ep, bit);
}

RecencyClassifier make_classifier(int feature_dim, const ClassifierConfig& config, Rng& rng) {
  if (feature_dim <= 0) throw std::invalid_argument("make_classifier: feature_dim must be positive");
  std::vector<int> dims;
  dims.push_back(2 * feature_dim);
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(1);
  Rng init_rng = rng.split("init");
  RecencyClassifier classifier;
  classifier.model = init_weights(dims, init_rng);
  classifier.adam = AdamState::for_model(classifier.model, config.learning_rate);
  classifier.config = config;
  return classifier;
}

void train_initial(RecencyClassifier& classifier, const SplitDatasets& split, Rng& rng) {
  if (classifier.config.initial_epochs <= 0) return;
  if (split.older.empty() || split.recent.empty()) {
    throw std::invalid_argument("train_initial: empty older or recent pool");
  }
  const int pairs_per_epoch = int(std::min(split.older.size(), split.recent.size()));
  Rng epoch_rng = rng.split("initial-training");
  for (int epoch = 0; epoch < classifier.config.initial_epochs; ++epoch) {
    // Pairs are re-sampled every epoch rather than fixed once.
    std::vector<PairExample> pairs = draw_pairs(split, pairs_per_epoch, epoch_rng);
    const int bs = classifier.config.batch_size;
    for (int start = 0; start < int(pairs.size()); start += bs) {
      const int end = std::min<int>(start + bs, int(pairs.size()));
      std::vector<PairExample> minibatch(pairs.begin() + start, pairs.begin() + end);
      train_on_pairs(classifier, minibatch);
    }
  }
}

PairPrediction predict_pair(const RecencyClassifier& classifier, const PairExample& pair) {
  const int d = classifier.feature_dim();
  if (int(pair.slot_a.size()) != d || int(pair.slot_b.size()) != d) {
    throw std::invalid_argument("predict_pair: feature dimension mismatch");
  }
  Tensor2 batch(1, 2 * d);
  std::copy(pair.slot_a.begin(), pair.slot_a.end(), batch.data.begin());
  std::copy(pair.slot_b.begin(), pair.slot_b.end(), batch.data.begin() + d);
  double prob = forward(classifier.model, batch)[0];
  if (classifier.config.symmetrized_scoring) {
    std::copy(pair.slot_b.begin(), pair.slot_b.end(), batch.data.begin());
    std::copy(pair.slot_a.begin(), pair.slot_a.end(), batch.data.begin() + d);
    prob = 0.5 * (prob + 1.0 - forward(classifier.model, batch)[0]);
  }
  PairPrediction out;
  out.prob_b_recent = prob;
  out.predicted_label = prob >= 0.5 ? 1 : 0;  // tie at exactly 0.5 resolves to 1
  out.y = out.predicted_label == pair.label ? 1 : 0;
  return out;
}

void finetune_step(RecencyClassifier& classifier, const SplitDatasets& split, Rng& rng) {
  if (classifier.config.finetune_steps_per_episode <= 0) return;
  if (split.older.empty() || split.recent.empty()) {
    throw std::invalid_argument("finetune_step: empty older or recent pool");
  }
  for (int s = 0; s < classifier.config.finetune_steps_per_episode; ++s) {
    std::vector<PairExample> pairs = draw_pairs(split, classifier.config.batch_size, rng);
    train_on_pairs(classifier, pairs);
  }
}

double pair_accuracy(const RecencyClassifier& classifier, const std::vector<Episode>& older_pool,
                     const std::vector<Episode>& recent_pool, int pairs, Rng& rng) {
  if (pairs <= 0) throw std::invalid_argument("pair_accuracy: pairs must be positive");
  std::int64_t correct = 0;
  for (int i = 0; i < pairs; ++i) {
    const PairExample pair = sample_pair(older_pool, recent_pool, rng);
    correct += predict_pair(classifier, pair).y;
  }
  return double(correct) / double(pairs);
}

}  // namespace driftgale

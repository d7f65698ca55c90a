#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "driftgale/rng.hpp"

namespace driftgale {

// Dense row-major matrix.
struct Tensor2 {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(int r, int c) : rows(r), cols(c), data(std::size_t(r) * c, 0.0) {}

  double& at(int r, int c) { return data[std::size_t(r) * cols + c]; }
  double at(int r, int c) const { return data[std::size_t(r) * cols + c]; }
  std::span<double> row(int r) { return {data.data() + std::size_t(r) * cols, std::size_t(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + std::size_t(r) * cols, std::size_t(cols)};
  }
};

// Multilayer perceptron with ReLU hidden layers and a single sigmoid output
// unit. weights[l] has shape layer_dims[l+1] x layer_dims[l].
struct MlpModel {
  std::vector<int> layer_dims;  // [d_in, h_1, ..., h_k, 1]
  std::vector<Tensor2> weights;
  std::vector<std::vector<double>> biases;

  int input_dim() const { return layer_dims.front(); }
  std::size_t layer_count() const { return weights.size(); }
  std::size_t param_count() const;
};

// Per-layer activations retained by forward for the matching backward call.
struct ForwardCache {
  Tensor2 input;
  std::vector<Tensor2> pre_activations;
  std::vector<Tensor2> activations;  // post-ReLU for hidden, sigmoid for output
};

// Returns one probability in (0,1) per batch row. cache, when non-null, is
// filled for backward. Throws on batch.cols != input_dim.
std::vector<double> forward(const MlpModel& model, const Tensor2& batch,
                            ForwardCache* cache = nullptr);

// Mean binary cross-entropy; probs are clamped to [1e-12, 1-1e-12] before
// the logs so the result is finite for any model output.
double bce_loss(std::span<const double> probs, std::span<const double> labels);

struct Gradients {
  std::vector<Tensor2> weights;
  std::vector<std::vector<double>> biases;

  static Gradients zeros_like(const MlpModel& model);
};

// Gradients of mean BCE loss w.r.t. every parameter, from a cache produced
// by forward on this model.
Gradients backward(const MlpModel& model, const ForwardCache& cache,
                   std::span<const double> labels);

struct AdamState {
  std::int64_t step_count = 0;
  Gradients first_moment;
  Gradients second_moment;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_stability = 1e-8;

  static AdamState for_model(const MlpModel& model, double learning_rate = 1e-4);
};

// Standard Adam update with bias correction; accumulator shapes must mirror
// the model's.
void adam_step(MlpModel& model, const Gradients& grads, AdamState& state);

// He-uniform weights (bound sqrt(6/fan_in)), zero biases; deterministic
// given the rng. Throws on empty or non-positive dims.
MlpModel init_weights(const std::vector<int>& layer_dims, Rng& rng);

// Versioned JSON checkpoint of model plus optimizer state; round-trips
// exactly (doubles are serialized shortest-round-trip).
std::string checkpoint_to_json(const MlpModel& model, const AdamState& adam);
void checkpoint_from_json(const std::string& text, MlpModel& model, AdamState& adam);
void save_checkpoint(const std::filesystem::path& path, const MlpModel& model,
                     const AdamState& adam);
void load_checkpoint(const std::filesystem::path& path, MlpModel& model, AdamState& adam);

// Max relative error between analytic gradients and central finite
// differences (h = 1e-5) on a model/batch pair; parameters with tiny
// analytic gradient are compared absolutely.
double gradient_check(const MlpModel& model, const Tensor2& batch,
                      std::span<const double> labels, double h = 1e-5);

}  // namespace driftgale

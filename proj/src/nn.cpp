#include "driftgale/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace driftgale {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

constexpr double kProbClamp = 1e-12;

void check_model(const MlpModel& model) {
  if (model.layer_dims.size() < 2) throw std::invalid_argument("mlp: need at least two layer dims");
  if (model.layer_dims.back() != 1) throw std::invalid_argument("mlp: output dimension must be 1");
  if (model.weights.size() != model.layer_dims.size() - 1 ||
      model.biases.size() != model.weights.size()) {
    throw std::invalid_argument("mlp: weight/bias count does not match layer dims");
  }
}

}  // namespace

std::size_t MlpModel::param_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.data.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

std::vector<double> forward(const MlpModel& model, const Tensor2& batch, ForwardCache* cache) {
  check_model(model);
  if (batch.cols != model.input_dim()) {
    throw std::invalid_argument("forward: batch has " + std::to_string(batch.cols) +
                                " columns, model expects " + std::to_string(model.input_dim()));
  }
  const std::size_t layers = model.layer_count();
  if (cache) {
    cache->input = batch;
    cache->pre_activations.assign(layers, {});
    cache->activations.assign(layers, {});
  }

  Tensor2 current = batch;
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor2& w = model.weights[l];
    const auto& b = model.biases[l];
    Tensor2 z(current.rows, w.rows);
    for (int r = 0; r < current.rows; ++r) {
      const double* in = current.data.data() + std::size_t(r) * current.cols;
      for (int o = 0; o < w.rows; ++o) {
        const double* wrow = w.data.data() + std::size_t(o) * w.cols;
        double acc = b[std::size_t(o)];
        for (int c = 0; c < w.cols; ++c) acc += wrow[c] * in[c];
        z.at(r, o) = acc;
      }
    }
    if (cache) cache->pre_activations[l] = z;
    const bool is_output = l + 1 == layers;
    Tensor2 a = z;
    for (double& v : a.data) v = is_output ? sigmoid(v) : std::max(0.0, v);
    if (cache) cache->activations[l] = a;
    current = std::move(a);
  }

  std::vector<double> probs(std::size_t(current.rows));
  for (int r = 0; r < current.rows; ++r) probs[std::size_t(r)] = current.at(r, 0);
  return probs;
}

double bce_loss(std::span<const double> probs, std::span<const double> labels) {
  if (probs.size() != labels.size()) throw std::invalid_argument("bce_loss: length mismatch");
  if (probs.empty()) throw std::invalid_argument("bce_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    total += -(labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
  }
  return total / double(probs.size());
}

Gradients Gradients::zeros_like(const MlpModel& model) {
  Gradients g;
  g.weights.reserve(model.weights.size());
  g.biases.reserve(model.biases.size());
  for (const auto& w : model.weights) g.weights.emplace_back(w.rows, w.cols);
  for (const auto& b : model.biases) g.biases.emplace_back(b.size(), 0.0);
  return g;
}

Gradients backward(const MlpModel& model, const ForwardCache& cache,
                   std::span<const double> labels) {
  check_model(model);
  const std::size_t layers = model.layer_count();
  if (cache.activations.size() != layers || cache.pre_activations.size() != layers) {
    throw std::invalid_argument("backward: cache does not match model");
  }
  const int batch = cache.input.rows;
  if (std::size_t(batch) != labels.size()) {
    throw std::invalid_argument("backward: label count does not match cached batch");
  }

  Gradients grads = Gradients::zeros_like(model);

  // delta: dL/dz for the current layer; output layer combines sigmoid and
  // mean BCE into (p - y)/batch.
  Tensor2 delta(batch, 1);
  for (int r = 0; r < batch; ++r) {
    delta.at(r, 0) = (cache.activations[layers - 1].at(r, 0) - labels[std::size_t(r)]) / batch;
  }

  for (std::size_t l = layers; l-- > 0;) {
    const Tensor2& a_prev = l == 0 ? cache.input : cache.activations[l - 1];
    Tensor2& gw = grads.weights[l];
    auto& gb = grads.biases[l];
    for (int r = 0; r < batch; ++r) {
      const double* in = a_prev.data.data() + std::size_t(r) * a_prev.cols;
      for (int o = 0; o < gw.rows; ++o) {
        const double d = delta.at(r, o);
        if (d == 0.0) continue;
        double* grow = gw.data.data() + std::size_t(o) * gw.cols;
        for (int c = 0; c < gw.cols; ++c) grow[c] += d * in[c];
        gb[std::size_t(o)] += d;
      }
    }
    if (l == 0) break;

    const Tensor2& w = model.weights[l];
    const Tensor2& z_prev = cache.pre_activations[l - 1];
    Tensor2 next_delta(batch, w.cols);
    for (int r = 0; r < batch; ++r) {
      for (int c = 0; c < w.cols; ++c) {
        if (z_prev.at(r, c) <= 0.0) {
          next_delta.at(r, c) = 0.0;
          continue;
        }
        double acc = 0.0;
        for (int o = 0; o < w.rows; ++o) acc += w.at(o, c) * delta.at(r, o);
        next_delta.at(r, c) = acc;
      }
    }
    delta = std::move(next_delta);
  }
  return grads;
}

AdamState AdamState::for_model(const MlpModel& model, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.first_moment = Gradients::zeros_like(model);
  s.second_moment = Gradients::zeros_like(model);
  return s;
}

namespace {

void adam_update_span(std::span<double> params, std::span<const double> grads,
                      std::span<double> m, std::span<double> v, const AdamState& s,
                      double bias1, double bias2) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * grads[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    params[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.eps_stability);
  }
}

}  // namespace

void adam_step(MlpModel& model, const Gradients& grads, AdamState& state) {
  if (grads.weights.size() != model.weights.size() ||
      state.first_moment.weights.size() != model.weights.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  state.step_count += 1;
  const double bias1 = 1.0 - std::pow(state.beta1, double(state.step_count));
  const double bias2 = 1.0 - std::pow(state.beta2, double(state.step_count));
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    if (grads.weights[l].data.size() != model.weights[l].data.size() ||
        grads.biases[l].size() != model.biases[l].size()) {
      throw std::invalid_argument("adam_step: shape mismatch at layer " + std::to_string(l));
    }
    adam_update_span(model.weights[l].data, grads.weights[l].data,
                     state.first_moment.weights[l].data, state.second_moment.weights[l].data,
                     state, bias1, bias2);
    adam_update_span(model.biases[l], grads.biases[l], state.first_moment.biases[l],
                     state.second_moment.biases[l], state, bias1, bias2);
  }
}

MlpModel init_weights(const std::vector<int>& layer_dims, Rng& rng) {
  if (layer_dims.size() < 2) throw std::invalid_argument("init_weights: need at least two dims");
  for (int d : layer_dims) {
    if (d <= 0) throw std::invalid_argument("init_weights: non-positive layer dim");
  }
  MlpModel model;
  model.layer_dims = layer_dims;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double bound = std::sqrt(6.0 / double(fan_in));
    Tensor2 w(fan_out, fan_in);
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    model.weights.push_back(std::move(w));
    model.biases.emplace_back(std::size_t(fan_out), 0.0);
  }
  return model;
}

namespace {

constexpr int kCheckpointVersion = 1;

nlohmann::ordered_json grads_to_json(const Gradients& g) {
  nlohmann::ordered_json j;
  j["weights"] = nlohmann::ordered_json::array();
  for (const auto& w : g.weights) j["weights"].push_back(w.data);
  j["biases"] = g.biases;
  return j;
}

Gradients grads_from_json(const nlohmann::json& j, const MlpModel& model) {
  Gradients g = Gradients::zeros_like(model);
  const auto& jw = j.at("weights");
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    g.weights[l].data = jw.at(l).get<std::vector<double>>();
  }
  g.biases = j.at("biases").get<std::vector<std::vector<double>>>();
  return g;
}

}  // namespace

std::string checkpoint_to_json(const MlpModel& model, const AdamState& adam) {
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointVersion;
  j["layer_dims"] = model.layer_dims;
  j["weights"] = nlohmann::ordered_json::array();
  for (const auto& w : model.weights) j["weights"].push_back(w.data);
  j["biases"] = model.biases;
  nlohmann::ordered_json ja;
  ja["step_count"] = adam.step_count;
  ja["learning_rate"] = adam.learning_rate;
  ja["beta1"] = adam.beta1;
  ja["beta2"] = adam.beta2;
  ja["eps_stability"] = adam.eps_stability;
  ja["first_moment"] = grads_to_json(adam.first_moment);
  ja["second_moment"] = grads_to_json(adam.second_moment);
  j["adam"] = std::move(ja);
  return j.dump();
}

void checkpoint_from_json(const std::string& text, MlpModel& model, AdamState& adam) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("format_version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported format version");
  }
  model.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  model.weights.clear();
  for (std::size_t l = 0; l + 1 < model.layer_dims.size(); ++l) {
    Tensor2 w(model.layer_dims[l + 1], model.layer_dims[l]);
    w.data = j.at("weights").at(l).get<std::vector<double>>();
    if (w.data.size() != std::size_t(w.rows) * std::size_t(w.cols)) {
      throw std::runtime_error("checkpoint: weight size mismatch");
    }
    model.weights.push_back(std::move(w));
  }
  model.biases = j.at("biases").get<std::vector<std::vector<double>>>();
  check_model(model);
  const auto& ja = j.at("adam");
  adam.step_count = ja.at("step_count").get<std::int64_t>();
  adam.learning_rate = ja.at("learning_rate").get<double>();
  adam.beta1 = ja.at("beta1").get<double>();
  adam.beta2 = ja.at("beta2").get<double>();
  adam.eps_stability = ja.at("eps_stability").get<double>();
  adam.first_moment = grads_from_json(ja.at("first_moment"), model);
  adam.second_moment = grads_from_json(ja.at("second_moment"), model);
}

void save_checkpoint(const std::filesystem::path& path, const MlpModel& model,
                     const AdamState& adam) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << checkpoint_to_json(model, adam);
}

void load_checkpoint(const std::filesystem::path& path, MlpModel& model, AdamState& adam) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  checkpoint_from_json(text, model, adam);
}

double gradient_check(const MlpModel& model, const Tensor2& batch,
                      std::span<const double> labels, double h) {
  ForwardCache cache;
  forward(model, batch, &cache);
  const Gradients analytic = backward(model, cache, labels);

  MlpModel probe = model;
  auto loss_at = [&]() {
    const std::vector<double> probs = forward(probe, batch);
    return bce_loss(probs, labels);
  };

  double max_rel = 0.0;
  auto check_param = [&](double& param, double analytic_grad) {
    const double original = param;
    param = original + h;
    const double up = loss_at();
    param = original - h;
    const double down = loss_at();
    param = original;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max(std::abs(analytic_grad), std::abs(numeric));
    const double err = std::abs(analytic_grad) < 1e-8 && std::abs(numeric) < 1e-8
                           ? std::abs(analytic_grad - numeric)
                           : std::abs(analytic_grad - numeric) / std::max(denom, 1e-12);
    max_rel = std::max(max_rel, err);
  };

  for (std::size_t l = 0; l < probe.weights.size(); ++l) {
    for (std::size_t i = 0; i < probe.weights[l].data.size(); ++i) {
      check_param(probe.weights[l].data[i], analytic.weights[l].data[i]);
    }
    for (std::size_t i = 0; i < probe.biases[l].size(); ++i) {
      check_param(probe.biases[l][i], analytic.biases[l][i]);
    }
  }
  return max_rel;
}

}  // namespace driftgale

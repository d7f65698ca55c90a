#include "driftgale/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "driftgale/rng.hpp"

namespace driftgale {

double ShiftSchedule::magnitude_at(std::int64_t j) const {
  if (kind == ShiftKind::none || j < change_point) return 0.0;
  if (kind == ShiftKind::abrupt) return rate;
  return rate * double(j - change_point);
}

void ShiftSchedule::validate() const {
  if (kind == ShiftKind::none && rate != 0.0) {
    throw std::invalid_argument("shift schedule: kind none requires rate = 0");
  }
}

int GeneratorSpec::feature_dim() const {
  return family == Family::gaussian_mean_drift ? dim : image_shape[0] * image_shape[1];
}

void GeneratorSpec::validate() const {
  schedule.validate();
  if (family == Family::gaussian_mean_drift) {
    if (dim < 1) throw std::invalid_argument("generator spec: dim must be >= 1");
  } else if (image_shape[0] < 4 || image_shape[1] < 4) {
    throw std::invalid_argument("generator spec: image shape must be at least 4x4");
  }
  if (noise_scale < 0.0) throw std::invalid_argument("generator spec: negative noise scale");
}

namespace {

// Fixed procedural scene on the unit square: vertical gradient background, a
// rectangular runway in the lower middle, and a bright centerline strip.
double scene_value(double u, double v) {
  u = std::clamp(u, 0.0, 1.0);
  v = std::clamp(v, 0.0, 1.0);
  double value = 0.2 + 0.2 * u;
  if (u >= 0.375 && v >= 0.25 && v < 0.75) {
    value = 0.55;
    if (std::abs(v - 0.5) <= 1.0 / 32.0) value = 0.95;
  }
  return value;
}

struct Affine {
  // Inverse-mapped sampling: output pixel (u,v) reads the scene at the
  // rotated/translated source point.
  double cos_t = 1.0, sin_t = 0.0, du = 0.0, dv = 0.0;

  static Affine for_warp(double delta) {
    Affine a;
    a.cos_t = std::cos(delta);
    a.sin_t = std::sin(delta);
    a.du = 0.5 * delta;
    a.dv = 0.25 * delta;
    return a;
  }

  std::pair<double, double> source(double u, double v) const {
    const double cu = u - 0.5 - du;
    const double cv = v - 0.5 - dv;
    return {0.5 + cos_t * cu + sin_t * cv, 0.5 - sin_t * cu + cos_t * cv};
  }
};

std::vector<double> render_image(const GeneratorSpec& spec, double delta, Rng* noise_rng) {
  const int rows = spec.image_shape[0];
  const int cols = spec.image_shape[1];
  const bool warp = spec.family == Family::synthetic_image_warp;
  const Affine affine = warp ? Affine::for_warp(delta) : Affine{};
  const double brightness =
      spec.family == Family::synthetic_image_brightness ? std::max(0.0, 1.0 - delta) : 1.0;

  std::vector<double> pixels(std::size_t(rows) * std::size_t(cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double u = (r + 0.5) / rows;
      const double v = (c + 0.5) / cols;
      const auto [su, sv] = affine.source(u, v);
      double value = scene_value(su, sv);
      if (noise_rng) value += spec.noise_scale * noise_rng->normal();
      pixels[std::size_t(r) * std::size_t(cols) + std::size_t(c)] = brightness * value;
    }
  }
  return pixels;
}

}  // namespace

std::vector<Episode> generate(const GeneratorSpec& spec, std::int64_t count) {
  if (count < 1) throw std::invalid_argument("generate: count must be >= 1");
  spec.validate();
  Rng rng = Rng(spec.seed).split("datagen");

  std::vector<Episode> episodes;
  episodes.reserve(std::size_t(count));
  for (std::int64_t j = 0; j < count; ++j) {
    const double delta = spec.schedule.magnitude_at(j);
    Episode ep;
    ep.id = spec.id_offset + j;
    if (spec.family == Family::gaussian_mean_drift) {
      ep.features.resize(std::size_t(spec.dim));
      for (double& v : ep.features) v = delta + spec.noise_scale * rng.normal();
    } else {
      ep.features = render_image(spec, delta, &rng);
      ep.shape = std::vector<int>{spec.image_shape[0], spec.image_shape[1]};
    }
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

std::vector<double> render_scene(const GeneratorSpec& spec, double delta) {
  spec.validate();
  if (spec.family == Family::gaussian_mean_drift) {
    return std::vector<double>(std::size_t(spec.dim), delta);
  }
  return render_image(spec, delta, nullptr);
}

double failure_proxy(const Episode& episode, Family family) {
  if (episode.features.empty()) throw std::invalid_argument("failure_proxy: empty episode");
  const double n = double(episode.features.size());
  double mean = 0.0;
  for (double v : episode.features) mean += v;
  mean /= n;

  switch (family) {
    case Family::synthetic_image_brightness: {
      // Centerline contrast: brightest pixel against the frame average.
      const double peak = *std::max_element(episode.features.begin(), episode.features.end());
      return peak - mean;
    }
    case Family::gaussian_mean_drift:
      // Distance of the coordinate-mean estimate from the origin; grows with
      // shift (opposite polarity to the image proxies).
      return std::abs(mean);
    default:
      throw std::invalid_argument("failure_proxy: unsupported family");
  }
}

}  // namespace driftgale

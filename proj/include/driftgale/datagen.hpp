#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "driftgale/episode.hpp"

namespace driftgale {

enum class ShiftKind { none, gradual_linear, abrupt };

// Shift magnitude schedule over episode indices. change_point may be
// negative, meaning the stream starts mid-shift (the shift began
// |change_point| episodes before this stream's first episode).
struct ShiftSchedule {
  ShiftKind kind = ShiftKind::none;
  std::int64_t change_point = 0;
  double rate = 0.0;

  // delta_j: 0 before change_point; rate*(j - change_point) for gradual,
  // rate for abrupt.
  double magnitude_at(std::int64_t j) const;
  void validate() const;  // kind none requires rate == 0
};

enum class Family { gaussian_mean_drift, synthetic_image_brightness, synthetic_image_warp };

struct GeneratorSpec {
  Family family = Family::gaussian_mean_drift;
  int dim = 8;                           // gaussian family
  std::array<int, 2> image_shape{16, 16};  // image families, rows x cols
  double noise_scale = 0.05;
  ShiftSchedule schedule;
  std::uint64_t seed = 0;
  // First episode id; lets a test stream continue numbering after its
  // training stream.
  std::int64_t id_offset = 0;

  int feature_dim() const;
  void validate() const;
};

// Deterministic episode generation.
//   gaussian_mean_drift:        x ~ N(delta_j * 1, noise_scale^2 I)
//   synthetic_image_brightness: fixed procedural scene (gradient background,
//                               rectangle runway, bright centerline) plus
//                               additive pixel noise, everything multiplied
//                               by max(0, 1 - delta_j)
//   synthetic_image_warp:       same scene rendered through a fixed small
//                               affine map (rotation + translation scaled by
//                               delta_j) for j >= change_point
std::vector<Episode> generate(const GeneratorSpec& spec, std::int64_t count);

// Noise-free render of the image scene at shift magnitude delta; exposes the
// deterministic part of the generator for degradation checks.
std::vector<double> render_scene(const GeneratorSpec& spec, double delta);

// Scalar task-health proxy.
//   brightness: contrast of the centerline against the rest of the frame
//               (max pixel minus mean pixel); monotonically degrades as the
//               image dims, failure is declared against a contrast floor
//   gaussian:   distance of the coordinate mean from the origin (grows with
//               shift; polarity differs from the image families)
// Throws std::invalid_argument for unsupported families (warp).
double failure_proxy(const Episode& episode, Family family);

}  // namespace driftgale

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace driftgale {

// One deployment episode reduced to a single representative feature vector.
struct Episode {
  std::int64_t id = 0;
  std::vector<double> features;
  // Present for image-like data flattened row-major; product must equal
  // features.size().
  std::optional<std::vector<int>> shape;
};

enum class StreamLabel { train, test };

// In-memory episode sequence with validated invariants: ids strictly
// increasing, all features finite, consistent dimension, shape product
// matching the feature length.
class EpisodeStream {
 public:
  EpisodeStream(std::vector<Episode> episodes, StreamLabel label);

  bool exhausted() const { return pos_ >= episodes_.size(); }
  const Episode& next();
  void reset() { pos_ = 0; }

  std::size_t size() const { return episodes_.size(); }
  int dim() const { return dim_; }
  StreamLabel label() const { return label_; }
  const std::vector<Episode>& episodes() const { return episodes_; }

 private:
  std::vector<Episode> episodes_;
  StreamLabel label_;
  std::size_t pos_ = 0;
  int dim_ = 0;
};

enum class StreamFormat { jsonl, csv };

// Parses a .jsonl ({"id":..,"features":[..],"shape":[..]?} per line) or .csv
// (header id,f0,f1,...) episode file. Throws std::runtime_error naming the
// offending row on malformed records, dimension mismatches, or non-finite
// values. An empty file yields an empty stream.
EpisodeStream load_stream(const std::filesystem::path& path, StreamFormat format,
                          StreamLabel label = StreamLabel::test);

void save_stream(const std::filesystem::path& path, const std::vector<Episode>& episodes,
                 StreamFormat format);

// "jsonl" / "csv" from a path extension or explicit name; throws on others.
StreamFormat stream_format_from_name(const std::string& name);

}  // namespace driftgale

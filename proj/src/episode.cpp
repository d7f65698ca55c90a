#include "driftgale/episode.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "driftgale/rng.hpp"
#include "json.hpp"

namespace driftgale {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

void validate_episode(const Episode& ep, std::size_t row, int expected_dim) {
  if (expected_dim >= 0 && int(ep.features.size()) != expected_dim) {
    throw std::runtime_error("dimension mismatch at row " + std::to_string(row) + ": got " +
                             std::to_string(ep.features.size()) + ", expected " +
                             std::to_string(expected_dim));
  }
  for (double v : ep.features) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("non-finite feature value at row " + std::to_string(row));
    }
  }
  if (ep.shape) {
    std::size_t prod = 1;
    for (int d : *ep.shape) {
      if (d <= 0) throw std::runtime_error("non-positive shape dimension at row " + std::to_string(row));
      prod *= std::size_t(d);
    }
    if (prod != ep.features.size()) {
      throw std::runtime_error("shape product does not match feature length at row " +
                               std::to_string(row));
    }
  }
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : key_(mix64(seed + kGolden)) {}

Rng Rng::split(std::string_view tag) const {
  return Rng(mix64(key_ ^ mix64(fnv1a(tag))), 0);
}

std::uint64_t Rng::next_u64() { return mix64(key_ + kGolden * ++counter_); }

double Rng::uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() { return (double(next_u64() >> 12) + 0.5) * 0x1.0p-52; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::uniform_index(std::uint64_t n) { return next_u64() % n; }

bool Rng::bernoulli(double p) { return uniform() < p; }

double Rng::normal() {
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

Rng split_rng(const Rng& rng, std::string_view purpose_tag) {
  if (purpose_tag.empty()) throw std::invalid_argument("split_rng: empty purpose tag");
  return rng.split(purpose_tag);
}

EpisodeStream::EpisodeStream(std::vector<Episode> episodes, StreamLabel label)
    : episodes_(std::move(episodes)), label_(label) {
  std::int64_t prev_id = 0;
  for (std::size_t i = 0; i < episodes_.size(); ++i) {
    if (i == 0) {
      dim_ = int(episodes_[0].features.size());
    } else if (episodes_[i].id <= prev_id) {
      throw std::runtime_error("episode ids not strictly increasing at row " + std::to_string(i + 1));
    }
    validate_episode(episodes_[i], i + 1, dim_);
    prev_id = episodes_[i].id;
  }
}

const Episode& EpisodeStream::next() {
  if (exhausted()) throw std::runtime_error("episode stream exhausted");
  return episodes_[pos_++];
}

namespace {

std::vector<Episode> parse_jsonl(std::istream& in) {
  std::vector<Episode> episodes;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("parse error at row " + std::to_string(row) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("features")) {
      throw std::runtime_error("parse error at row " + std::to_string(row) +
                               ": expected object with id and features");
    }
    Episode ep;
    try {
      ep.id = j.at("id").get<std::int64_t>();
      ep.features = j.at("features").get<std::vector<double>>();
      if (j.contains("shape")) ep.shape = j.at("shape").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("parse error at row " + std::to_string(row) + ": " + e.what());
    }
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

std::vector<Episode> parse_csv(std::istream& in) {
  std::vector<Episode> episodes;
  std::string line;
  std::size_t row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      if (line.rfind("id", 0) != 0) {
        throw std::runtime_error("parse error at row 1: expected header starting with id");
      }
      header_seen = true;
      continue;
    }
    Episode ep;
    std::stringstream ss(line);
    std::string cell;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      try {
        if (first) {
          ep.id = std::stoll(cell);
          first = false;
        } else {
          std::size_t used = 0;
          double v = std::stod(cell, &used);
          if (used != cell.size()) throw std::invalid_argument(cell);
          ep.features.push_back(v);
        }
      } catch (const std::exception&) {
        throw std::runtime_error("parse error at row " + std::to_string(row) + ": bad cell '" +
                                 cell + "'");
      }
    }
    if (first) {
      throw std::runtime_error("parse error at row " + std::to_string(row) + ": empty record");
    }
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

}  // namespace

EpisodeStream load_stream(const std::filesystem::path& path, StreamFormat format,
                          StreamLabel label) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Episode> episodes =
      format == StreamFormat::jsonl ? parse_jsonl(in) : parse_csv(in);
  return EpisodeStream(std::move(episodes), label);
}

void save_stream(const std::filesystem::path& path, const std::vector<Episode>& episodes,
                 StreamFormat format) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  if (format == StreamFormat::jsonl) {
    for (const Episode& ep : episodes) {
      nlohmann::ordered_json j;
      j["id"] = ep.id;
      j["features"] = ep.features;
      if (ep.shape) j["shape"] = *ep.shape;
      out << j.dump() << '\n';
    }
  } else {
    out << "id";
    const std::size_t dim = episodes.empty() ? 0 : episodes.front().features.size();
    for (std::size_t i = 0; i < dim; ++i) out << ",f" << i;
    out << '\n';
    for (const Episode& ep : episodes) {
      out << ep.id;
      for (double v : ep.features) out << ',' << format_double(v);
      out << '\n';
    }
  }
}

StreamFormat stream_format_from_name(const std::string& name) {
  std::string ext = name;
  if (auto pos = ext.rfind('.'); pos != std::string::npos) ext = ext.substr(pos + 1);
  if (ext == "jsonl") return StreamFormat::jsonl;
  if (ext == "csv") return StreamFormat::csv;
  throw std::invalid_argument("unknown stream format: " + name);
}

}  // namespace driftgale

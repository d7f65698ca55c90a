#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace driftgale {

// Counter-based pseudo-random generator (splitmix64 finalizer over a keyed
// counter). Outputs depend only on (key, counter), so a generator can be
// split into statistically independent children keyed by a purpose tag
// without consuming parent state. Identical seed + identical call sequence
// gives bit-identical outputs on every platform.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed);

  // Child generator determined by this generator's key and the tag alone;
  // the same (key, tag) always yields the same child.
  [[nodiscard]] Rng split(std::string_view tag) const;

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform strictly inside (0, 1); safe as a log/tie-break argument.
  double uniform_open();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). Requires n > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  bool bernoulli(double p);
  // Standard normal via Box-Muller (two uniforms per draw, no caching).
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Free-function form of Rng::split. Requires a nonempty tag.
Rng split_rng(const Rng& rng, std::string_view purpose_tag);

}  // namespace driftgale

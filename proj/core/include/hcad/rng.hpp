#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

namespace hcad {

/// Deterministic, platform-independent RNG (splitmix64 core).
///
/// All randomness in the library flows through this class so that a run is
/// reproducible from its seed alone, independent of the standard library's
/// distribution implementations. Keyed substreams (`fork`) give independent,
/// schedule-invariant streams per (node, round, ...) tuple.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x5851f42d4c957f2dULL)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound) {
    // Lemire's multiply-shift with rejection for exact uniformity.
    std::uint64_t x = next_u64();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<unsigned __int128>(x) * bound;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Derives an independent substream keyed by up to three values. Does not
  /// advance this stream's state.
  Rng fork(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    std::uint64_t s = state_;
    s = mix(s ^ mix(a + 0x9e3779b97f4a7c15ULL));
    s = mix(s ^ mix(b + 0xbf58476d1ce4e5b9ULL));
    s = mix(s ^ mix(c + 0x94d049bb133111ebULL));
    Rng r(0);
    r.state_ = s;
    return r;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[next_below(i)]);
    }
  }

  /// k distinct values from [0, n), in draw order. O(k) memory.
  std::vector<std::int64_t> sample_without_replacement(std::int64_t n, std::int64_t k) {
    std::unordered_map<std::int64_t, std::int64_t> swapped;
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(k));
    for (std::int64_t i = 0; i < k; ++i) {
      const auto j = static_cast<std::int64_t>(next_below(static_cast<std::uint64_t>(n - i))) + i;
      auto value_at = [&](std::int64_t idx) {
        auto it = swapped.find(idx);
        return it == swapped.end() ? idx : it->second;
      };
      const std::int64_t vj = value_at(j);
      swapped[j] = value_at(i);
      out.push_back(vj);
    }
    return out;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace hcad

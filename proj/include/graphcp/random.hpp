#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>

#include "graphcp/errors.hpp"

namespace graphcp {

/// Independent random streams. Each purpose owns a disjoint key space.
enum class Purpose : std::uint32_t {
  split = 1,
  aps_u = 2,
  y_random = 3,
  cfgnn_init = 4,
  cfgnn_batch = 5,
  synth = 6,
};

inline std::string_view to_string(Purpose p) {
  switch (p) {
    case Purpose::split: return "split";
    case Purpose::aps_u: return "aps-u";
    case Purpose::y_random: return "y-random";
    case Purpose::cfgnn_init: return "cfgnn-init";
    case Purpose::cfgnn_batch: return "cfgnn-batch";
    case Purpose::synth: return "synth";
  }
  return "unknown";
}

inline std::optional<Purpose> parse_purpose(std::string_view s) {
  for (auto p : {Purpose::split, Purpose::aps_u, Purpose::y_random, Purpose::cfgnn_init,
                 Purpose::cfgnn_batch, Purpose::synth}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

namespace detail {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// Counter-based randomness: every draw is a pure function of
/// (master seed, purpose, key, counter). Order of evaluation never matters.
class RandomPolicy {
 public:
  constexpr RandomPolicy() = default;
  constexpr explicit RandomPolicy(std::uint64_t master_seed) : seed_(master_seed) {}

  [[nodiscard]] constexpr std::uint64_t seed() const noexcept { return seed_; }

  [[nodiscard]] constexpr std::uint64_t bits(Purpose purpose, std::uint64_t key,
                                             std::uint64_t counter = 0) const noexcept {
    std::uint64_t h = detail::mix64(seed_ ^ (0xD1B54A32D192ED03ULL * static_cast<std::uint64_t>(purpose)));
    h = detail::mix64(h ^ detail::mix64(key));
    return detail::mix64(h ^ (counter * 0xA24BAED4963EE407ULL));
  }

 private:
  std::uint64_t seed_ = 0;
};

/// Uniform draw in [0, 1) for (purpose, node), optionally indexed by a counter.
[[nodiscard]] constexpr double uniform_unit(const RandomPolicy& policy, Purpose purpose,
                                            std::uint64_t node, std::uint64_t counter = 0) noexcept {
  return detail::to_unit(policy.bits(purpose, node, counter));
}

/// Sequential view of one (purpose, key) stream. Used where a single
/// logical draw consumes a variable number of values (shuffles, rejection).
class Stream {
 public:
  Stream(const RandomPolicy& policy, Purpose purpose, std::uint64_t key)
      : policy_(policy), purpose_(purpose), key_(key) {}

  std::uint64_t next_bits() noexcept { return policy_.bits(purpose_, key_, counter_++); }
  double next_unit() noexcept { return detail::to_unit(next_bits()); }

  /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) throw ConfigError("next_below: bound must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    for (;;) {
      const std::uint64_t x = next_bits();
      if (x < limit) return x % bound;
    }
  }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(next_below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  RandomPolicy policy_;
  Purpose purpose_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace graphcp

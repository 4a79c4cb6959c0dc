#pragma once

#include <cstdint>
#include <string_view>

namespace epr {

/// splitmix64 finalizer; the workhorse behind every stream in the project.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Deterministic seed derivation: master seed + ASCII label -> stream seed.
/// Used to split one master seed into the independent named streams
/// (source, settings/S1, settings/S2, stack, model).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  std::uint64_t h = mix64(master ^ 0x9E3779B97F4A7C15ULL);
  for (char ch : label) {
    h = mix64(h ^ (static_cast<std::uint64_t>(static_cast<unsigned char>(ch)) * 0xFF51AFD7ED558CCDULL));
  }
  return h;
}

/// Stateless position hash for counter-based streams (instrument stacks):
/// the value at a coordinate never depends on evaluation order.
constexpr std::uint64_t hash_at(std::uint64_t seed, std::uint64_t lane, std::uint64_t position) {
  return mix64(seed ^ mix64(lane ^ mix64(position + 0x632BE59BD9B4E019ULL)));
}

/// Sequential pseudorandom stream (splitmix64). Deterministic and portable;
/// all sampling helpers avoid implementation-defined std:: distributions.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  /// Uniform double in [0, 1), 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Multiply-high; bias is O(n / 2^64).
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  void skip(std::uint64_t draws) { state_ += draws * 0x9E3779B97F4A7C15ULL; }

 private:
  std::uint64_t state_;
};

}  // namespace epr

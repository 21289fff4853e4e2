#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace empaste {

// Seeded generator with platform-independent draw helpers. std::*_distribution
// output is implementation-defined, so draws are built directly from the
// 64-bit engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double low, double high) { return low + (high - low) * uniform(); }

  // Uniform integer in [0, n), rejection-sampled to remove modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Uniform integer in [low, high].
  std::int64_t between(std::int64_t low, std::int64_t high) {
    return low + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(high - low) + 1));
  }

  // Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Sub-seed for (global seed, stage, key); independent of scheduling order.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage, std::string_view key) noexcept;

}  // namespace empaste

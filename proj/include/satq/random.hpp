#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace satq {

// Deterministic random stream. Substreams are derived from a master seed and
// a name, so adding a new consumer never shifts the draws of existing ones.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng substream(std::uint64_t master_seed, std::string_view name);
  static Rng substream(std::uint64_t master_seed, std::string_view name,
                       std::uint64_t index);

  // Uniform on [0, 1) with 53 random bits. Independent of the standard
  // library's distribution implementations.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform_open_zero() { return 1.0 - uniform(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int index(int n) {
    return static_cast<int>(uniform() * static_cast<double>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Draw an index according to `probs` (assumed to sum to 1).
  int categorical(std::span<const double> probs);

  std::uint64_t next_u64() { return engine_(); }

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace satq

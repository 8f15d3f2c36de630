#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dsegan/tensor.hpp"

namespace dsegan {

// Deterministic random source. All sampling goes through explicit method calls
// so that a given seed yields the same stream on every platform, and the full
// engine state round-trips through text for checkpointing.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed = 0) : engine_(seed) {}

  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, n).
  std::int64_t uniform_int(std::int64_t n);
  // Standard normal via Box-Muller. Draws two uniforms per call; no spare is
  // cached, so the stream position is a pure function of the call count.
  double gaussian();

  Tensor uniform_tensor(std::vector<int> shape, float lo, float hi);
  Tensor gaussian_tensor(std::vector<int> shape, float stddev = 1.0f);

  // Random permutation of {0..n-1} with no fixed point (Sattolo's algorithm).
  // Used to pair each sample with a mismatched partner.
  std::vector<int> derangement(int n);

  std::string serialize_state() const;
  void restore_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

}  // namespace dsegan

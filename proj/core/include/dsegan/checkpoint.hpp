#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dsegan/tensor.hpp"

namespace dsegan {

// On-disk layout: "DSEG" magic, format version u32, run config as a JSON
// string, named tensor count and entries (name, then the tensor-core binary
// form), step counter u64, RNG state string.
struct Checkpoint {
  std::uint32_t version = 1;
  std::string config_json;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::uint64_t step = 0;
  std::string rng_state;

  const Tensor* find(const std::string& name) const;
};

// Writes to a temp file and renames, so an interrupted save never corrupts an
// existing checkpoint.
void save_checkpoint(const std::string& path, const Checkpoint& cp);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dsegan

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dsegan/adversarial.hpp"
#include "dsegan/checkpoint.hpp"
#include "dsegan/sama.hpp"
#include "dsegan/toyworld.hpp"

namespace dsegan {

struct RunConfig {
  std::uint64_t seed = 1;
  StageConfig stage;
  int d_t = 256;
  int k_agg = 4;
  std::vector<int> grains = {256, 128, 64, 32, 16, 8, 4, 2};
  float beta1 = 0.0f;
  float beta2 = 0.99f;
  float lr_g = 1e-4f;
  float lr_d = 4e-4f;
  LossConfig loss;
  int batch = 16;
  int steps = 3000;
  int checkpoint_every = 500;
  std::string checkpoint_dir = "run";
  std::string out_dir = "out";
  bool element_routing = true;
  bool subspace_routing = true;
  bool hard_router = false;
  int d_base_width = 64;
  int d_max_width = 512;

  // Missing keys keep their defaults; unknown keys are an error.
  static RunConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

struct StepMetrics {
  std::uint64_t step = 0;
  float d_loss = 0;
  float g_loss = 0;
  float ca_loss = 0;
  float gp = 0;
  float grad_norm = 0;
  float adv = 0;
  float match = 0;
};

// Everything a run carries: models, optimizers, the RNG stream, and the
// rendered caption set. Rebuilding the dataset is deterministic, so only
// parameters, optimizer moments, the step counter, and the RNG state go into
// a checkpoint.
struct TrainState {
  RunConfig cfg;
  ToyTextEncoder encoder;
  GeneratorParams gen;
  DiscriminatorParams disc;
  ParamSet g_params;
  ParamSet d_params;
  Adam g_opt{AdamConfig{}};
  Adam d_opt{AdamConfig{}};
  RandomSource rng;
  std::uint64_t step = 0;
  std::vector<std::pair<ToyCaption, ToyImage>> dataset;

  static TrainState init(const RunConfig& cfg);

  // One alternating update: D on real/fake/mismatched triples, then G.
  StepMetrics train_step();

  DseOptions dse_options() const;
  Checkpoint to_checkpoint() const;
  static TrainState from_checkpoint(const Checkpoint& cp);
};

struct GenerationResult {
  ToyImage image;
  std::vector<ToyImage> stage_images;  // upsampled alpha_i * x_i per stage
  std::vector<RoutingTrace> traces;
};

// Gradient-free sampling pass; noise comes from gen_rng, not the train stream.
GenerationResult generate_one(const TrainState& state, const ToyCaption& caption,
                              RandomSource& gen_rng);

}  // namespace dsegan

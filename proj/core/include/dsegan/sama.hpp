#pragma once

#include <utility>
#include <vector>

#include "dsegan/dse.hpp"

namespace dsegan {

// Conditioning augmentation: resamples the sentence vector from a diagonal
// Gaussian whose moments are learned projections of it.
struct CaParams {
  Tensor w_mu;      // [d_t x d_ca]
  Tensor w_logvar;  // [d_t x d_ca]

  static CaParams init(RandomSource& rng, int d_t, int d_ca);
  void register_params(ParamSet& ps) const;
};

// (s_aug, mu, logvar), each [d_ca].
struct CaResult {
  Tensor s_aug;
  Tensor mu;
  Tensor logvar;
};

CaResult ca_augment(const Tensor& sentence, const CaParams& p, const Tensor& noise);

// Stage ladder: stage i works on a (g0*2^i)^2 token grid; channel width
// halves each stage with a floor of 16.
struct StageConfig {
  int num_stages = 4;  // M+1
  int base_grid = 8;   // g0
  int d0 = 64;         // width at stage 0
  int d_z = 100;
  int d_ca = 128;
  int blocks_per_stage = 1;
  int attn_window = 8;  // self-attention window side; grids at or below it run full

  int stage_count() const { return num_stages; }
  int grid(int i) const;
  int tokens(int i) const { return grid(i) * grid(i); }
  int width(int i) const;
  int final_resolution() const { return grid(num_stages - 1); }
};

struct AttnBlockParams {
  Tensor ln_g, ln_b;          // [1 x d]
  Tensor w_q, w_k, w_v, w_o;  // [d x d] (w_k, w_v are [d_kv x d] for cross)
};

struct FfnParams {
  Tensor ln_g, ln_b;  // [1 x d]
  Tensor w1, b1;      // [d x d_hidden], [1 x d_hidden]
  Tensor w2, b2;      // [d_hidden x d], [1 x d]
};

// One transformer unit: self-attention then feedforward, both residual.
struct BlockParams {
  AttnBlockParams attn;
  FfnParams ffn;
};

// Sub-generator for stage i >= 1.
struct StageParams {
  AttnBlockParams cross;            // queries = image tokens, kv = words
  std::vector<BlockParams> blocks;
  Tensor proj;                      // [d_prev x d_i] channel projection after upsample
  Tensor pos;                       // [tokens_i x d_i] positional embedding
  Tensor rgb_w;                     // [d_i x 3]
  Tensor rgb_b;                     // [1 x 3]
};

struct IntegrationWeights {
  Tensor alphas;  // [num_stages], each initialized to 1/num_stages

  static IntegrationWeights init(int num_stages);
};

struct GeneratorParams {
  StageConfig cfg;
  CaParams ca;
  Tensor fc0;    // [(d_z+d_ca) x tokens_0*d0]
  Tensor pos0;   // [tokens_0 x d0]
  std::vector<BlockParams> blocks0;
  Tensor rgb0_w, rgb0_b;
  std::vector<StageParams> stages;  // stages 1..M
  std::vector<DseParams> dse;       // one per stage transition, image dim = width(i-1)
  IntegrationWeights integration;

  static GeneratorParams init(RandomSource& rng, const StageConfig& cfg, int d_t, int k_agg,
                              const std::vector<int>& grains, int l_t);
  void register_params(ParamSet& ps) const;
};

struct StageOutput {
  ImageFeatureMap features;
  Tensor rgb;  // [tokens x 3], tanh-bounded
};

// Self-attention over non-overlapping square windows (full when the grid is
// not larger than the window).
Tensor window_self_attention(const Tensor& x, int h, int w, int window,
                             const AttnBlockParams& p);

StageOutput initial_stage(const Tensor& z, const Tensor& s_aug, const GeneratorParams& p);

StageOutput sub_generator(const ImageFeatureMap& prev, const TextFeatures& words,
                          const StageParams& sp, const StageConfig& cfg, int stage_index);

// Upsamples every stage RGB to the final grid and sums them with the learned
// integration weights.
Tensor integrate_rgb(const std::vector<Tensor>& stage_rgbs, const IntegrationWeights& w,
                     const StageConfig& cfg);

struct GeneratorOutput {
  Tensor image;  // [final_tokens x 3]
  std::vector<StageOutput> stages;
  std::vector<RoutingTrace> traces;
  std::vector<TextFeatures> texts;  // T_0..T_M (input first, then each re-composition)
  Tensor mu, logvar;
};

GeneratorOutput generator_forward(const Tensor& z, const Tensor& ca_noise,
                                  const TextFeatures& text, const GeneratorParams& p,
                                  const DseOptions& dse_opts = {});

}  // namespace dsegan

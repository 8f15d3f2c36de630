#pragma once

#include <functional>
#include <vector>

#include "dsegan/adam.hpp"
#include "dsegan/ops.hpp"
#include "dsegan/random.hpp"
#include "dsegan/tensor.hpp"

namespace dsegan {

// Scores one (image, sentence) pair; returns a [1] tensor. Losses take the
// discriminator as a functor so tests can substitute closed-form scorers.
using ScoreFn = std::function<Tensor(const Tensor& image, const Tensor& sentence)>;

struct ConvLayer {
  Tensor w;  // [k*k*c_in x c_out]
  Tensor b;  // [1 x c_out]
};

// One-way discriminator: strided conv trunk down to a 4x4 grid, sentence
// replicated and fused on channels, two conv layers to a scalar.
struct DiscriminatorParams {
  int resolution = 64;
  int d_t = 256;
  std::vector<ConvLayer> trunk;  // stride-2, kernel 4, pad 1 each
  ConvLayer fuse;                // 3x3 at the 4x4 grid after sentence concat
  Tensor head_w;                 // [16*c_fuse x 1]
  Tensor head_b;                 // [1 x 1]
  Tensor enc_proj;               // frozen projection of trunk features to d_t

  static DiscriminatorParams init(RandomSource& rng, int resolution, int d_t,
                                  int base_width = 64, int max_width = 512);
  void register_params(ParamSet& ps) const;
  int trunk_width() const;
};

Tensor discriminate(const Tensor& image, const Tensor& sentence, const DiscriminatorParams& p);

ScoreFn make_score_fn(const DiscriminatorParams& p);

// Image encoder for the matching loss: the discriminator trunk with detached
// weights plus the frozen projection head, so gradients reach the generator
// only. Weights are captured at call time.
using EncodeFn = std::function<Tensor(const Tensor& image)>;
EncodeFn frozen_trunk_encoder(const DiscriminatorParams& p);

struct LossConfig {
  float lambda_ma = 2.0f;  // gradient-penalty weight
  float p = 6.0f;          // gradient-penalty exponent
  float lambda1 = 1.0f;    // CA weight
  float lambda2 = 0.1f;    // matching weight
};

struct DLossResult {
  Tensor total;
  Tensor real_term;      // E[max(0, 1 - D(x, s))]
  Tensor fake_term;      // E[max(0, 1 + D(fake, s))], pre-halving
  Tensor mismatch_term;  // E[max(0, 1 + D(x, mismatched))], pre-halving
  Tensor gp;             // lambda_MA * E[(|grad_x D| + |grad_s D|)^p]
  Tensor grad_norm;      // E[|grad_x D| + |grad_s D|] at real matched pairs
};

// Hinge discriminator loss with the matching-aware gradient penalty taken at
// real matched pairs. Fake images must already be detached from the
// generator's graph.
DLossResult d_loss(const ScoreFn& d, const std::vector<Tensor>& real_images,
                   const std::vector<Tensor>& fake_images,
                   const std::vector<Tensor>& sentences,
                   const std::vector<Tensor>& mismatched_sentences, const LossConfig& cfg);

struct GLossResult {
  Tensor total;
  Tensor adv;    // -E[D(fake, s)]
  Tensor ca;     // mean KL to the standard normal
  Tensor match;  // the supplied matching term
};

GLossResult g_loss(const ScoreFn& d, const std::vector<Tensor>& fake_images,
                   const std::vector<Tensor>& sentences, const std::vector<Tensor>& mus,
                   const std::vector<Tensor>& logvars, const Tensor& match_term,
                   const LossConfig& cfg);

// KL(N(mu, diag(exp(logvar))) || N(0, I)) for one sample.
Tensor ca_loss(const Tensor& mu, const Tensor& logvar);

// Symmetric contrastive matching stand-in over a batch; returns 0 (with a
// warning) below batch size 2.
Tensor match_loss(const std::vector<Tensor>& images, const std::vector<Tensor>& sentences,
                  const EncodeFn& encode, float temperature = 0.1f);

}  // namespace dsegan

#pragma once

#include <utility>
#include <vector>

#include "dsegan/adam.hpp"
#include "dsegan/ops.hpp"
#include "dsegan/random.hpp"
#include "dsegan/tensor.hpp"

namespace dsegan {

// Word-level text features plus the sentence vector they summarize.
struct TextFeatures {
  Tensor words;     // [l_t x d_t]
  Tensor sentence;  // [d_t]

  int l_t() const { return words.dim(0); }
  int d_t() const { return words.dim(1); }
};

// Flattened token grid of image features at one stage.
struct ImageFeatureMap {
  Tensor tokens;  // [h*w x d]
  int h = 0;
  int w = 0;

  int count() const { return tokens.dim(0); }
  int dim() const { return tokens.dim(1); }
};

// Subspace granularity list. Every entry must divide the text width, so each
// granularity h splits a word vector into h pieces of width d_t/h.
struct GranularitySchedule {
  int d_t = 0;
  std::vector<int> grains;     // h_0..h_{n-1}, strictly distinct
  std::vector<int> dims;       // d_j = d_t / h_j
  std::vector<int> q_offsets;  // column starts of each d_j block in d_sum
  std::vector<int> v_offsets;  // column starts of each h_j block in h_sum
  int d_sum = 0;
  int h_sum = 0;

  int count() const { return static_cast<int>(grains.size()); }
  static GranularitySchedule make(int d_t, std::vector<int> grains);
};

// Binary column-block masks, one pair per granularity. m_q[j] is [l_t x d_sum]
// with ones exactly over block j's query/key columns; m_v[j] is
// [k_agg x h_sum] with ones over block j's value columns. Blocks partition the
// columns, so the per-slice masks sum to all-ones.
struct AdjacencyMasks {
  std::vector<Tensor> m_q;
  std::vector<Tensor> m_v;
};

AdjacencyMasks build_masks(const GranularitySchedule& sched, int l_t, int k_agg);

struct DseParams {
  Tensor w_a;    // [d_img x k_agg] aggregation scores
  Tensor w_c;    // [d_img x d_t] image-to-text projection
  Tensor w_e;    // [1 x 2*d_t] element gate
  Tensor alpha;  // [1] gate strength, init 1
  Tensor w_q;    // [d_t x d_sum] concatenated per-granularity query weights
  Tensor w_k;    // [d_t x d_sum]
  Tensor w_v;    // [d_t x h_sum]
  Tensor w_r;    // [d_t x n] router value weights, one column per granularity
  GranularitySchedule schedule;
  AdjacencyMasks masks;
  int k_agg = 4;

  static DseParams init(RandomSource& rng, int d_img, int d_t, int k_agg,
                        std::vector<int> grains, int l_t);
  void register_params(ParamSet& ps) const;
};

// Per-stage routing decisions, exposed for inspection.
struct RoutingTrace {
  Tensor element_gate;   // [l_t], each in [0, alpha]
  Tensor subspace_probs; // [n], on the simplex
  int stage_index = 0;
};

struct DseOptions {
  bool element_routing = true;   // off: gate fixed at alpha for every word
  bool subspace_routing = true;  // off: probs forced one-hot on granularity 0
  bool hard_router = false;      // on: straight-through one-hot at the router argmax
  // Optional [n] noise added to router scores before the hard argmax
  // (pass Gumbel samples during training; leave empty for a plain argmax).
  Tensor router_noise;
};

// Pools the image token grid into k_agg summary vectors in text space.
Tensor aggregate_features(const Tensor& img, const DseParams& p);

// Gates each word by its relevance to the aggregated image context.
// Returns (gated_words [l_t x d_t], gate [l_t]).
std::pair<Tensor, Tensor> route_elements(const TextFeatures& t, const Tensor& agg,
                                         const DseParams& p);

// Re-composes gated words across granularity subspaces, looping granularities
// with explicitly sliced weights. Returns (t_next [l_t x d_t], probs [n]).
std::pair<Tensor, Tensor> recompose_naive(const Tensor& gated, const Tensor& prev_words,
                                          const Tensor& agg, const DseParams& p,
                                          const DseOptions& opts = {});

// Same result via the fused projections with adjacency masks; numerically
// equal to recompose_naive on identical parameters.
std::pair<Tensor, Tensor> recompose_masked(const Tensor& gated, const Tensor& prev_words,
                                           const Tensor& agg, const DseParams& p,
                                           const DseOptions& opts = {});

// Full module: aggregate -> element gate -> masked re-composition. The
// sentence vector passes through unchanged.
std::pair<TextFeatures, RoutingTrace> dse_forward(const TextFeatures& t,
                                                  const ImageFeatureMap& img,
                                                  const DseParams& p,
                                                  const DseOptions& opts = {});

}  // namespace dsegan

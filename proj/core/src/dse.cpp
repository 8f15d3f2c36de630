#include "dsegan/dse.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dsegan {

namespace {
void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

Tensor uniform_fan_in(RandomSource& rng, int rows, int cols) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(rows));
  Tensor t = rng.uniform_tensor({rows, cols}, -bound, bound);
  t.set_requires_grad(true);
  return t;
}
}  // namespace

GranularitySchedule GranularitySchedule::make(int d_t, std::vector<int> grains) {
  require(d_t >= 1, "schedule: d_t must be positive");
  require(!grains.empty(), "schedule: at least one granularity required");
  GranularitySchedule s;
  s.d_t = d_t;
  s.grains = std::move(grains);
  for (std::size_t j = 0; j < s.grains.size(); ++j) {
    const int h = s.grains[j];
    require(h >= 1, "schedule: granularities must be positive");
    require(d_t % h == 0, "schedule: granularity " + std::to_string(h) + " does not divide d_t");
    for (std::size_t k = 0; k < j; ++k) {
      require(s.grains[k] != h, "schedule: granularities must be distinct");
    }
    s.dims.push_back(d_t / h);
    s.q_offsets.push_back(s.d_sum);
    s.v_offsets.push_back(s.h_sum);
    s.d_sum += d_t / h;
    s.h_sum += h;
  }
  return s;
}

AdjacencyMasks build_masks(const GranularitySchedule& sched, int l_t, int k_agg) {
  require(l_t >= 1 && k_agg >= 1, "build_masks: l_t and k_agg must be positive");
  AdjacencyMasks masks;
  for (int j = 0; j < sched.count(); ++j) {
    std::vector<float> q_row(static_cast<std::size_t>(sched.d_sum), 0.0f);
    for (int c = 0; c < sched.dims[j]; ++c) {
      q_row[static_cast<std::size_t>(sched.q_offsets[j] + c)] = 1.0f;
    }
    std::vector<float> q_full;
    q_full.reserve(static_cast<std::size_t>(l_t) * sched.d_sum);
    for (int r = 0; r < l_t; ++r) q_full.insert(q_full.end(), q_row.begin(), q_row.end());
    masks.m_q.push_back(Tensor::from_data({l_t, sched.d_sum}, std::move(q_full)));

    std::vector<float> v_row(static_cast<std::size_t>(sched.h_sum), 0.0f);
    for (int c = 0; c < sched.grains[j]; ++c) {
      v_row[static_cast<std::size_t>(sched.v_offsets[j] + c)] = 1.0f;
    }
    std::vector<float> v_full;
    v_full.reserve(static_cast<std::size_t>(k_agg) * sched.h_sum);
    for (int r = 0; r < k_agg; ++r) v_full.insert(v_full.end(), v_row.begin(), v_row.end());
    masks.m_v.push_back(Tensor::from_data({k_agg, sched.h_sum}, std::move(v_full)));
  }
  return masks;
}

DseParams DseParams::init(RandomSource& rng, int d_img, int d_t, int k_agg,
                          std::vector<int> grains, int l_t) {
  DseParams p;
  p.schedule = GranularitySchedule::make(d_t, std::move(grains));
  p.masks = build_masks(p.schedule, l_t, k_agg);
  p.k_agg = k_agg;
  p.w_a = uniform_fan_in(rng, d_img, k_agg);
  p.w_c = uniform_fan_in(rng, d_img, d_t);
  const float gate_bound = 1.0f / std::sqrt(static_cast<float>(2 * d_t));
  p.w_e = rng.uniform_tensor({1, 2 * d_t}, -gate_bound, gate_bound);
  p.w_e.set_requires_grad(true);
  p.alpha = Tensor::full({1}, 1.0f);
  p.alpha.set_requires_grad(true);
  p.w_q = uniform_fan_in(rng, d_t, p.schedule.d_sum);
  p.w_k = uniform_fan_in(rng, d_t, p.schedule.d_sum);
  p.w_v = uniform_fan_in(rng, d_t, p.schedule.h_sum);
  p.w_r = uniform_fan_in(rng, d_t, p.schedule.count());
  return p;
}

void DseParams::register_params(ParamSet& ps) const {
  ps.add("w_a", w_a);
  ps.add("w_c", w_c);
  ps.add("w_e", w_e);
  ps.add("alpha", alpha);
  ps.add("w_q", w_q);
  ps.add("w_k", w_k);
  ps.add("w_v", w_v);
  ps.add("w_r", w_r);
}

Tensor aggregate_features(const Tensor& img, const DseParams& p) {
  require(img.rank() == 2, "aggregate_features: image tokens must be rank-2");
  require(img.dim(1) == p.w_a.dim(0), "aggregate_features: image feature width " +
                                          std::to_string(img.dim(1)) + " does not match params");
  Tensor scores = matmul(img, p.w_a);              // [l_img x k_agg]
  Tensor projected = matmul(img, p.w_c);           // [l_img x d_t]
  Tensor weights = softmax(scores, 0);             // convex over positions per column
  return matmul(transpose(weights), projected);    // [k_agg x d_t]
}

std::pair<Tensor, Tensor> route_elements(const TextFeatures& t, const Tensor& agg,
                                         const DseParams& p) {
  const int l_t = t.l_t();
  const int d_t = t.d_t();
  require(agg.rank() == 2 && agg.dim(1) == d_t, "route_elements: aggregated shape mismatch");
  require(p.w_e.dim(1) == 2 * d_t, "route_elements: gate weight width mismatch");
  Tensor cross = matmul(t.words, transpose(agg));        // [l_t x k_agg]
  Tensor pooled = mean(cross, 0);                        // [1 x k_agg]
  Tensor attn = softmax(pooled, 1);                      // simplex over the k summaries
  Tensor context = matmul(attn, agg);                    // [1 x d_t], shared by all words
  Tensor gate_in = concat(t.words, broadcast_rows(context, l_t), 1);
  Tensor logits = matmul(gate_in, transpose(p.w_e));     // [l_t x 1]
  Tensor gate_col = relu_clip(logits, p.alpha);
  Tensor gated = hadamard(t.words, gate_col);
  return {gated, reshape(gate_col, {l_t})};
}

namespace {

// Router scores -> mixture weights over granularities.
Tensor routing_probs(const Tensor& rhat, const DseOptions& opts) {
  const int n = rhat.dim(0);
  if (!opts.subspace_routing) {
    std::vector<float> one_hot(static_cast<std::size_t>(n), 0.0f);
    one_hot[0] = 1.0f;
    return Tensor::from_data({n}, std::move(one_hot));
  }
  Tensor soft = softmax(rhat, 0);
  if (!opts.hard_router) return soft;
  std::vector<float> scores = rhat.values();
  if (opts.router_noise.node() != nullptr) {
    require(opts.router_noise.numel() == rhat.numel(), "router noise length mismatch");
    const auto& noise = opts.router_noise.values();
    for (int j = 0; j < n; ++j) scores[static_cast<std::size_t>(j)] += noise[static_cast<std::size_t>(j)];
  }
  const int winner = static_cast<int>(
      std::max_element(scores.begin(), scores.end()) - scores.begin());
  std::vector<float> one_hot(static_cast<std::size_t>(n), 0.0f);
  one_hot[static_cast<std::size_t>(winner)] = 1.0f;
  // Straight-through: forward value is the one-hot, gradient follows the softmax.
  return add(Tensor::from_data({n}, std::move(one_hot)), sub(soft, detach(soft)));
}

// Reverse the order of the h chunks: new block c takes old block h-1-c.
std::vector<int> reverse_block_perm(int h, int d) {
  std::vector<int> perm(static_cast<std::size_t>(h) * d);
  for (int c = 0; c < h; ++c) {
    for (int r = 0; r < d; ++r) {
      perm[static_cast<std::size_t>(c) * d + r] = (h - 1 - c) * d + r;
    }
  }
  return perm;
}

// [h x d_t] constant that copies column c of an [l x h] matrix across block c.
Tensor block_expander(int h, int d) {
  std::vector<float> data(static_cast<std::size_t>(h) * h * d, 0.0f);
  for (int c = 0; c < h; ++c) {
    for (int r = 0; r < d; ++r) {
      data[static_cast<std::size_t>(c) * h * d + c * d + r] = 1.0f;
    }
  }
  return Tensor::from_data({h, h * d}, std::move(data));
}

void check_recompose_shapes(const Tensor& gated, const Tensor& prev_words, const Tensor& agg,
                            const DseParams& p) {
  require(gated.rank() == 2 && gated.shape() == prev_words.shape(),
          "recompose: gated and previous words must share shape");
  require(gated.dim(1) == p.schedule.d_t, "recompose: word width does not match schedule");
  require(agg.rank() == 2 && agg.dim(1) == p.schedule.d_t,
          "recompose: aggregated width does not match schedule");
  require(!p.masks.m_q.empty() && p.masks.m_q[0].dim(0) == gated.dim(0) &&
              p.masks.m_v[0].dim(0) == agg.dim(0),
          "recompose: masks built for different l_t or k_agg");
}

}  // namespace

std::pair<Tensor, Tensor> recompose_naive(const Tensor& gated, const Tensor& prev_words,
                                          const Tensor& agg, const DseParams& p,
                                          const DseOptions& opts) {
  check_recompose_shapes(gated, prev_words, agg, p);
  const GranularitySchedule& s = p.schedule;
  std::vector<Tensor> deltas;
  std::vector<Tensor> scores;
  for (int j = 0; j < s.count(); ++j) {
    const int h = s.grains[j];
    const int d = s.dims[j];
    Tensor q = matmul(gated, slice(p.w_q, 1, s.q_offsets[j], d));
    Tensor k = matmul(agg, slice(p.w_k, 1, s.q_offsets[j], d));
    Tensor v = matmul(agg, slice(p.w_v, 1, s.v_offsets[j], h));
    Tensor o = tanh(attention(q, k, v));  // [l_t x h]
    std::vector<Tensor> chunks;
    for (int c = h - 1; c >= 0; --c) {
      Tensor piece = slice(gated, 1, c * d, d);
      chunks.push_back(transpose(hadamard(piece, slice(o, 1, c, 1))));
    }
    deltas.push_back(transpose(concat_rows(chunks)));
    Tensor r = attention(q, k, matmul(agg, slice(p.w_r, 1, j, 1)));  // [l_t x 1]
    scores.push_back(mean_all(r));
  }
  Tensor probs = routing_probs(reshape(concat_rows(scores), {s.count()}), opts);
  Tensor next = prev_words;
  for (int j = 0; j < s.count(); ++j) {
    next = add(next, hadamard(deltas[j], slice(probs, 0, j, 1)));
  }
  return {next, probs};
}

std::pair<Tensor, Tensor> recompose_masked(const Tensor& gated, const Tensor& prev_words,
                                           const Tensor& agg, const DseParams& p,
                                           const DseOptions& opts) {
  check_recompose_shapes(gated, prev_words, agg, p);
  const GranularitySchedule& s = p.schedule;
  Tensor q = matmul(gated, p.w_q);   // [l_t x d_sum]
  Tensor k = matmul(agg, p.w_k);     // [k_agg x d_sum]
  Tensor v = matmul(agg, p.w_v);     // [k_agg x h_sum]
  Tensor rv = matmul(agg, p.w_r);    // [k_agg x n]
  Tensor kt = transpose(k);
  std::vector<Tensor> deltas;
  std::vector<Tensor> scores;
  for (int j = 0; j < s.count(); ++j) {
    const int h = s.grains[j];
    const int d = s.dims[j];
    // Zeroed query columns annihilate every other block of K, so this softmax
    // equals the per-granularity attention despite the fused projection.
    Tensor weights = softmax(matmul(hadamard(q, p.masks.m_q[j]), kt), 1);  // [l_t x k_agg]
    Tensor o_padded = tanh(matmul(weights, hadamard(v, p.masks.m_v[j])));
    Tensor o = slice(o_padded, 1, s.v_offsets[j], h);  // [l_t x h]
    Tensor modulated = hadamard(gated, matmul(o, block_expander(h, d)));
    deltas.push_back(permute_cols(modulated, reverse_block_perm(h, d)));
    scores.push_back(mean_all(matmul(weights, slice(rv, 1, j, 1))));
  }
  Tensor probs = routing_probs(reshape(concat_rows(scores), {s.count()}), opts);
  Tensor next = prev_words;
  for (int j = 0; j < s.count(); ++j) {
    next = add(next, hadamard(deltas[j], slice(probs, 0, j, 1)));
  }
  return {next, probs};
}

std::pair<TextFeatures, RoutingTrace> dse_forward(const TextFeatures& t,
                                                  const ImageFeatureMap& img,
                                                  const DseParams& p, const DseOptions& opts) {
  require(t.words.rank() == 2, "dse_forward: word features must be rank-2");
  require(t.sentence.rank() == 1 && t.sentence.dim(0) == t.d_t(),
          "dse_forward: sentence width must match words");
  Tensor agg = aggregate_features(img.tokens, p);
  Tensor gated, gate;
  if (opts.element_routing) {
    auto routed = route_elements(t, agg, p);
    gated = routed.first;
    gate = routed.second;
  } else {
    Tensor gate_col = hadamard(Tensor::ones({t.l_t(), 1}), p.alpha);
    gated = hadamard(t.words, gate_col);
    gate = reshape(gate_col, {t.l_t()});
  }
  auto [next, probs] = recompose_masked(gated, t.words, agg, p, opts);
  RoutingTrace trace;
  trace.element_gate = gate;
  trace.subspace_probs = probs;
  return {TextFeatures{next, t.sentence}, trace};
}

}  // namespace dsegan

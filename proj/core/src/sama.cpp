#include "dsegan/sama.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dsegan {

namespace {
void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

Tensor linear_init(RandomSource& rng, int rows, int cols) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(rows));
  Tensor t = rng.uniform_tensor({rows, cols}, -bound, bound);
  t.set_requires_grad(true);
  return t;
}

Tensor zeros_param(std::vector<int> shape) { return Tensor::zeros(std::move(shape), true); }

Tensor ones_param(std::vector<int> shape) {
  Tensor t = Tensor::full(std::move(shape), 1.0f);
  t.set_requires_grad(true);
  return t;
}

Tensor pos_init(RandomSource& rng, int tokens, int dim) {
  Tensor t = rng.uniform_tensor({tokens, dim}, -0.02f, 0.02f);
  t.set_requires_grad(true);
  return t;
}

AttnBlockParams attn_init(RandomSource& rng, int d, int d_kv) {
  AttnBlockParams p;
  p.ln_g = ones_param({1, d});
  p.ln_b = zeros_param({1, d});
  p.w_q = linear_init(rng, d, d);
  p.w_k = linear_init(rng, d_kv, d);
  p.w_v = linear_init(rng, d_kv, d);
  p.w_o = linear_init(rng, d, d);
  return p;
}

FfnParams ffn_init(RandomSource& rng, int d) {
  FfnParams p;
  const int hidden = 2 * d;
  p.ln_g = ones_param({1, d});
  p.ln_b = zeros_param({1, d});
  p.w1 = linear_init(rng, d, hidden);
  p.b1 = zeros_param({1, hidden});
  p.w2 = linear_init(rng, hidden, d);
  p.b2 = zeros_param({1, d});
  return p;
}

BlockParams block_init(RandomSource& rng, int d) {
  return BlockParams{attn_init(rng, d, d), ffn_init(rng, d)};
}

Tensor with_bias(const Tensor& x, const Tensor& bias) {
  return add(x, broadcast_rows(bias, x.dim(0)));
}

Tensor rgb_head(const Tensor& tokens, const Tensor& w, const Tensor& b) {
  return tanh(with_bias(matmul(tokens, w), b));
}

Tensor ffn_forward(const Tensor& x, const FfnParams& p) {
  Tensor t = layer_norm(x, p.ln_g, p.ln_b);
  t = gelu(with_bias(matmul(t, p.w1), p.b1));
  t = with_bias(matmul(t, p.w2), p.b2);
  return add(x, t);
}

Tensor cross_attention_block(const Tensor& x, const Tensor& words, const AttnBlockParams& p) {
  Tensor nx = layer_norm(x, p.ln_g, p.ln_b);
  Tensor a = attention(matmul(nx, p.w_q), matmul(words, p.w_k), matmul(words, p.w_v));
  return add(x, matmul(a, p.w_o));
}

void register_attn(ParamSet& ps, const std::string& pre, const AttnBlockParams& p) {
  ps.add(pre + ".ln_g", p.ln_g);
  ps.add(pre + ".ln_b", p.ln_b);
  ps.add(pre + ".w_q", p.w_q);
  ps.add(pre + ".w_k", p.w_k);
  ps.add(pre + ".w_v", p.w_v);
  ps.add(pre + ".w_o", p.w_o);
}

void register_ffn(ParamSet& ps, const std::string& pre, const FfnParams& p) {
  ps.add(pre + ".ln_g", p.ln_g);
  ps.add(pre + ".ln_b", p.ln_b);
  ps.add(pre + ".w1", p.w1);
  ps.add(pre + ".b1", p.b1);
  ps.add(pre + ".w2", p.w2);
  ps.add(pre + ".b2", p.b2);
}

void register_block(ParamSet& ps, const std::string& pre, const BlockParams& p) {
  register_attn(ps, pre + ".attn", p.attn);
  register_ffn(ps, pre + ".ffn", p.ffn);
}
}  // namespace

CaParams CaParams::init(RandomSource& rng, int d_t, int d_ca) {
  CaParams p;
  p.w_mu = linear_init(rng, d_t, d_ca);
  p.w_logvar = linear_init(rng, d_t, d_ca);
  return p;
}

void CaParams::register_params(ParamSet& ps) const {
  ps.add("w_mu", w_mu);
  ps.add("w_logvar", w_logvar);
}

CaResult ca_augment(const Tensor& sentence, const CaParams& p, const Tensor& noise) {
  require(sentence.rank() == 1, "ca_augment: sentence must be rank-1");
  require(sentence.dim(0) == p.w_mu.dim(0), "ca_augment: sentence width mismatch");
  const int d_ca = p.w_mu.dim(1);
  require(noise.numel() == d_ca, "ca_augment: noise must have d_ca elements");
  Tensor s = reshape(sentence, {1, sentence.dim(0)});
  Tensor mu = matmul(s, p.w_mu);
  Tensor logvar = clamp(matmul(s, p.w_logvar), -10.0f, 10.0f);
  Tensor stddev = exp(scale(logvar, 0.5f));
  Tensor s_aug = add(mu, hadamard(stddev, reshape(noise, {1, d_ca})));
  return {reshape(s_aug, {d_ca}), reshape(mu, {d_ca}), reshape(logvar, {d_ca})};
}

int StageConfig::grid(int i) const { return base_grid << i; }

int StageConfig::width(int i) const {
  int w = d0;
  for (int s = 0; s < i; ++s) w = std::max(16, w / 2);
  return w;
}

IntegrationWeights IntegrationWeights::init(int num_stages) {
  IntegrationWeights w;
  w.alphas = Tensor::full({num_stages}, 1.0f / static_cast<float>(num_stages));
  w.alphas.set_requires_grad(true);
  return w;
}

GeneratorParams GeneratorParams::init(RandomSource& rng, const StageConfig& cfg, int d_t,
                                      int k_agg, const std::vector<int>& grains, int l_t) {
  require(cfg.num_stages >= 1, "generator: at least one stage required");
  GeneratorParams p;
  p.cfg = cfg;
  p.ca = CaParams::init(rng, d_t, cfg.d_ca);
  const int l0 = cfg.tokens(0);
  p.fc0 = linear_init(rng, cfg.d_z + cfg.d_ca, l0 * cfg.d0);
  p.pos0 = pos_init(rng, l0, cfg.d0);
  for (int b = 0; b < cfg.blocks_per_stage; ++b) p.blocks0.push_back(block_init(rng, cfg.d0));
  p.rgb0_w = linear_init(rng, cfg.d0, 3);
  p.rgb0_b = zeros_param({1, 3});
  for (int i = 1; i < cfg.num_stages; ++i) {
    const int d_prev = cfg.width(i - 1);
    const int d_i = cfg.width(i);
    StageParams sp;
    sp.cross = attn_init(rng, d_prev, d_t);
    for (int b = 0; b < cfg.blocks_per_stage; ++b) sp.blocks.push_back(block_init(rng, d_prev));
    sp.proj = linear_init(rng, d_prev, d_i);
    sp.pos = pos_init(rng, cfg.tokens(i), d_i);
    sp.rgb_w = linear_init(rng, d_i, 3);
    sp.rgb_b = zeros_param({1, 3});
    p.stages.push_back(std::move(sp));
    p.dse.push_back(DseParams::init(rng, d_prev, d_t, k_agg, grains, l_t));
  }
  p.integration = IntegrationWeights::init(cfg.num_stages);
  return p;
}

void GeneratorParams::register_params(ParamSet& ps) const {
  ParamSet ca_set;
  ca.register_params(ca_set);
  ps.adopt("ca", ca_set);
  ps.add("fc0", fc0);
  ps.add("pos0", pos0);
  for (std::size_t b = 0; b < blocks0.size(); ++b) {
    register_block(ps, "g0.b" + std::to_string(b), blocks0[b]);
  }
  ps.add("g0.rgb_w", rgb0_w);
  ps.add("g0.rgb_b", rgb0_b);
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string pre = "s" + std::to_string(i + 1);
    register_attn(ps, pre + ".cross", stages[i].cross);
    for (std::size_t b = 0; b < stages[i].blocks.size(); ++b) {
      register_block(ps, pre + ".b" + std::to_string(b), stages[i].blocks[b]);
    }
    ps.add(pre + ".proj", stages[i].proj);
    ps.add(pre + ".pos", stages[i].pos);
    ps.add(pre + ".rgb_w", stages[i].rgb_w);
    ps.add(pre + ".rgb_b", stages[i].rgb_b);
    ParamSet dse_set;
    dse[i].register_params(dse_set);
    ps.adopt(pre + ".dse", dse_set);
  }
  ps.add("alphas", integration.alphas);
}

Tensor window_self_attention(const Tensor& x, int h, int w, int window,
                             const AttnBlockParams& p) {
  require(x.dim(0) == h * w, "window attention: token count must equal h*w");
  Tensor nx = layer_norm(x, p.ln_g, p.ln_b);
  Tensor q = matmul(nx, p.w_q);
  Tensor k = matmul(nx, p.w_k);
  Tensor v = matmul(nx, p.w_v);
  Tensor attended;
  if (h <= window && w <= window) {
    attended = attention(q, k, v);
  } else {
    require(h % window == 0 && w % window == 0, "window attention: grid must tile by window");
    std::vector<Tensor> pieces;
    std::vector<int> inverse(static_cast<std::size_t>(h) * w);
    int written = 0;
    for (int wy = 0; wy < h / window; ++wy) {
      for (int wx = 0; wx < w / window; ++wx) {
        std::vector<int> idx;
        idx.reserve(static_cast<std::size_t>(window) * window);
        for (int iy = 0; iy < window; ++iy) {
          for (int ix = 0; ix < window; ++ix) {
            const int row = (wy * window + iy) * w + wx * window + ix;
            idx.push_back(row);
            inverse[static_cast<std::size_t>(row)] = written++;
          }
        }
        pieces.push_back(attention(gather_rows(q, idx), gather_rows(k, idx),
                                   gather_rows(v, idx)));
      }
    }
    attended = gather_rows(concat_rows(pieces), inverse);
  }
  return add(x, matmul(attended, p.w_o));
}

StageOutput initial_stage(const Tensor& z, const Tensor& s_aug, const GeneratorParams& p) {
  require(z.rank() == 1 && z.dim(0) == p.cfg.d_z, "initial_stage: z must be [d_z]");
  require(s_aug.rank() == 1 && s_aug.dim(0) == p.cfg.d_ca, "initial_stage: s_aug must be [d_ca]");
  const int g0 = p.cfg.base_grid;
  const int l0 = p.cfg.tokens(0);
  Tensor seed = reshape(concat(z, s_aug, 0), {1, p.cfg.d_z + p.cfg.d_ca});
  Tensor tokens = add(reshape(matmul(seed, p.fc0), {l0, p.cfg.d0}), p.pos0);
  for (const BlockParams& b : p.blocks0) {
    tokens = window_self_attention(tokens, g0, g0, p.cfg.attn_window, b.attn);
    tokens = ffn_forward(tokens, b.ffn);
  }
  return {ImageFeatureMap{tokens, g0, g0}, rgb_head(tokens, p.rgb0_w, p.rgb0_b)};
}

StageOutput sub_generator(const ImageFeatureMap& prev, const TextFeatures& words,
                          const StageParams& sp, const StageConfig& cfg, int stage_index) {
  require(stage_index >= 1 && stage_index < cfg.num_stages, "sub_generator: bad stage index");
  require(prev.tokens.dim(1) == sp.cross.w_q.dim(0),
          "sub_generator: feature width does not match stage params");
  Tensor x = cross_attention_block(prev.tokens, words.words, sp.cross);
  for (const BlockParams& b : sp.blocks) {
    x = window_self_attention(x, prev.h, prev.w, cfg.attn_window, b.attn);
    x = ffn_forward(x, b.ffn);
  }
  Tensor up = upsample_nearest(x, prev.h, prev.w, 2);
  Tensor tokens = add(matmul(up, sp.proj), sp.pos);
  return {ImageFeatureMap{tokens, prev.h * 2, prev.w * 2},
          rgb_head(tokens, sp.rgb_w, sp.rgb_b)};
}

Tensor integrate_rgb(const std::vector<Tensor>& stage_rgbs, const IntegrationWeights& w,
                     const StageConfig& cfg) {
  require(static_cast<int>(stage_rgbs.size()) == cfg.num_stages,
          "integrate_rgb: one RGB map per stage required");
  const int final_grid = cfg.final_resolution();
  Tensor total;
  for (int i = 0; i < cfg.num_stages; ++i) {
    const int g = cfg.grid(i);
    require(stage_rgbs[static_cast<std::size_t>(i)].dim(0) == g * g,
            "integrate_rgb: stage " + std::to_string(i) + " has wrong token count");
    Tensor up = g == final_grid
                    ? stage_rgbs[static_cast<std::size_t>(i)]
                    : upsample_nearest(stage_rgbs[static_cast<std::size_t>(i)], g, g,
                                       final_grid / g);
    Tensor scaled = hadamard(up, slice(w.alphas, 0, i, 1));
    total = i == 0 ? scaled : add(total, scaled);
  }
  return total;
}

GeneratorOutput generator_forward(const Tensor& z, const Tensor& ca_noise,
                                  const TextFeatures& text, const GeneratorParams& p,
                                  const DseOptions& dse_opts) {
  GeneratorOutput out;
  CaResult ca = ca_augment(text.sentence, p.ca, ca_noise);
  out.mu = ca.mu;
  out.logvar = ca.logvar;
  out.texts.push_back(text);
  out.stages.push_back(initial_stage(z, ca.s_aug, p));
  TextFeatures current = text;
  for (int i = 1; i < p.cfg.num_stages; ++i) {
    auto [next_text, trace] = dse_forward(current, out.stages.back().features,
                                          p.dse[static_cast<std::size_t>(i - 1)], dse_opts);
    trace.stage_index = i;
    out.traces.push_back(trace);
    out.texts.push_back(next_text);
    out.stages.push_back(sub_generator(out.stages.back().features, next_text,
                                       p.stages[static_cast<std::size_t>(i - 1)], p.cfg, i));
    current = next_text;
  }
  std::vector<Tensor> rgbs;
  for (const StageOutput& s : out.stages) rgbs.push_back(s.rgb);
  out.image = integrate_rgb(rgbs, p.integration, p.cfg);
  return out;
}

}  // namespace dsegan

#include "dsegan/adversarial.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "dsegan/ops.hpp"

namespace dsegan {

namespace {

constexpr float kLeakySlope = 0.2f;
constexpr int kTrunkKernel = 4;
constexpr int kFuseKernel = 3;
constexpr int kFinalGrid = 4;

Tensor conv_init(RandomSource& rng, int k, int c_in, int c_out) {
  float bound = 1.0f / std::sqrt(static_cast<float>(k * k * c_in));
  Tensor w = rng.uniform_tensor({k * k * c_in, c_out}, -bound, bound);
  w.set_requires_grad(true);
  return w;
}

Tensor apply_conv(const Tensor& x, const ConvLayer& layer, int h, int w, int k, int stride,
                  int pad) {
  Tensor patches = unfold(x, h, w, k, stride, pad);
  int oh = conv_output_extent(h, k, stride, pad);
  int ow = conv_output_extent(w, k, stride, pad);
  return leaky_relu(add(matmul(patches, layer.w), broadcast_rows(layer.b, oh * ow)),
                    kLeakySlope);
}

struct TrunkWeights {
  std::vector<ConvLayer> layers;
  int resolution = 0;
};

Tensor run_trunk(const Tensor& image, const TrunkWeights& trunk) {
  if (image.rank() != 2 || image.dim(0) != trunk.resolution * trunk.resolution ||
      image.dim(1) != 3) {
    throw std::invalid_argument("discriminate: image must be [" +
                                std::to_string(trunk.resolution * trunk.resolution) +
                                " x 3], got " + shape_str(image.shape()));
  }
  Tensor x = image;
  int h = trunk.resolution;
  for (const ConvLayer& layer : trunk.layers) {
    x = apply_conv(x, layer, h, h, kTrunkKernel, 2, 1);
    h /= 2;
  }
  return x;
}

}  // namespace

DiscriminatorParams DiscriminatorParams::init(RandomSource& rng, int resolution, int d_t,
                                              int base_width, int max_width) {
  if (resolution < kFinalGrid || (resolution & (resolution - 1)) != 0) {
    throw std::invalid_argument("discriminator: resolution must be a power of two >= 4");
  }
  DiscriminatorParams p;
  p.resolution = resolution;
  p.d_t = d_t;
  int h = resolution;
  int c_in = 3;
  int c = base_width;
  while (h > kFinalGrid) {
    ConvLayer layer;
    layer.w = conv_init(rng, kTrunkKernel, c_in, c);
    layer.b = Tensor::zeros({1, c}, true);
    p.trunk.push_back(layer);
    c_in = c;
    c = std::min(2 * c, max_width);
    h /= 2;
  }
  int c_fuse = c_in;
  p.fuse.w = conv_init(rng, kFuseKernel, c_in + d_t, c_fuse);
  p.fuse.b = Tensor::zeros({1, c_fuse}, true);
  p.head_w = conv_init(rng, kFinalGrid, c_fuse, 1);
  p.head_b = Tensor::zeros({1, 1}, true);
  float bound = 1.0f / std::sqrt(static_cast<float>(kFinalGrid * kFinalGrid * c_in));
  p.enc_proj = rng.uniform_tensor({kFinalGrid * kFinalGrid * c_in, d_t}, -bound, bound);
  return p;
}

int DiscriminatorParams::trunk_width() const {
  return trunk.empty() ? 3 : trunk.back().w.dim(1);
}

void DiscriminatorParams::register_params(ParamSet& ps) const {
  for (std::size_t i = 0; i < trunk.size(); ++i) {
    ps.add("trunk." + std::to_string(i) + ".w", trunk[i].w);
    ps.add("trunk." + std::to_string(i) + ".b", trunk[i].b);
  }
  ps.add("fuse.w", fuse.w);
  ps.add("fuse.b", fuse.b);
  ps.add("head.w", head_w);
  ps.add("head.b", head_b);
  ps.add("enc_proj", enc_proj);
}

Tensor discriminate(const Tensor& image, const Tensor& sentence,
                    const DiscriminatorParams& p) {
  if (sentence.numel() != p.d_t) {
    throw std::invalid_argument("discriminate: sentence must have " + std::to_string(p.d_t) +
                                " elements, got " + shape_str(sentence.shape()));
  }
  TrunkWeights tw{p.trunk, p.resolution};
  Tensor x = run_trunk(image, tw);
  Tensor srow = reshape(sentence, {1, p.d_t});
  Tensor fused = concat(x, broadcast_rows(srow, kFinalGrid * kFinalGrid), 1);
  Tensor f = apply_conv(fused, p.fuse, kFinalGrid, kFinalGrid, kFuseKernel, 1, 1);
  Tensor flat = reshape(f, {1, kFinalGrid * kFinalGrid * f.dim(1)});
  Tensor out = add(matmul(flat, p.head_w), p.head_b);
  return reshape(out, {1});
}

ScoreFn make_score_fn(const DiscriminatorParams& p) {
  return [&p](const Tensor& image, const Tensor& sentence) {
    return discriminate(image, sentence, p);
  };
}

EncodeFn frozen_trunk_encoder(const DiscriminatorParams& p) {
  TrunkWeights tw;
  tw.resolution = p.resolution;
  for (const ConvLayer& layer : p.trunk) {
    tw.layers.push_back({detach(layer.w), detach(layer.b)});
  }
  Tensor proj = detach(p.enc_proj);
  int d_t = p.d_t;
  return [tw, proj, d_t](const Tensor& image) {
    Tensor x = run_trunk(image, tw);
    Tensor flat = reshape(x, {1, kFinalGrid * kFinalGrid * x.dim(1)});
    return reshape(matmul(flat, proj), {d_t});
  };
}

DLossResult d_loss(const ScoreFn& d, const std::vector<Tensor>& real_images,
                   const std::vector<Tensor>& fake_images,
                   const std::vector<Tensor>& sentences,
                   const std::vector<Tensor>& mismatched_sentences, const LossConfig& cfg) {
  std::size_t n = real_images.size();
  if (n == 0 || fake_images.size() != n || sentences.size() != n ||
      mismatched_sentences.size() != n) {
    throw std::invalid_argument("d_loss: batch lists must be equal-sized and non-empty");
  }
  Tensor real_sum = Tensor::zeros({1});
  Tensor fake_sum = Tensor::zeros({1});
  Tensor mis_sum = Tensor::zeros({1});
  Tensor gp_sum = Tensor::zeros({1});
  Tensor gn_sum = Tensor::zeros({1});
  for (std::size_t i = 0; i < n; ++i) {
    // Probe leaves so the penalty can ask for input gradients without
    // involving the dataset tensors themselves.
    Tensor img_probe = detach(real_images[i]);
    img_probe.set_requires_grad(true);
    Tensor sent_probe = detach(sentences[i]);
    sent_probe.set_requires_grad(true);

    Tensor d_real = d(img_probe, sent_probe);
    real_sum = add(real_sum, relu(add_scalar(scale(d_real, -1.0f), 1.0f)));
    fake_sum = add(fake_sum, relu(add_scalar(d(fake_images[i], sentences[i]), 1.0f)));
    mis_sum = add(mis_sum, relu(add_scalar(d(real_images[i], mismatched_sentences[i]), 1.0f)));

    auto grads = grads_of(d_real, {img_probe, sent_probe}, /*create_graph=*/true);
    Tensor gn = add(l2_norm(grads[0]), l2_norm(grads[1]));
    gp_sum = add(gp_sum, pow_scalar(gn, cfg.p));
    gn_sum = add(gn_sum, gn);
  }
  float inv_n = 1.0f / static_cast<float>(n);
  DLossResult r;
  r.real_term = scale(real_sum, inv_n);
  r.fake_term = scale(fake_sum, inv_n);
  r.mismatch_term = scale(mis_sum, inv_n);
  r.gp = scale(gp_sum, cfg.lambda_ma * inv_n);
  r.grad_norm = scale(gn_sum, inv_n);
  r.total = add(add(r.real_term, scale(add(r.fake_term, r.mismatch_term), 0.5f)), r.gp);
  return r;
}

GLossResult g_loss(const ScoreFn& d, const std::vector<Tensor>& fake_images,
                   const std::vector<Tensor>& sentences, const std::vector<Tensor>& mus,
                   const std::vector<Tensor>& logvars, const Tensor& match_term,
                   const LossConfig& cfg) {
  std::size_t n = fake_images.size();
  if (n == 0 || sentences.size() != n || mus.size() != n || logvars.size() != n) {
    throw std::invalid_argument("g_loss: batch lists must be equal-sized and non-empty");
  }
  Tensor adv_sum = Tensor::zeros({1});
  Tensor ca_sum = Tensor::zeros({1});
  for (std::size_t i = 0; i < n; ++i) {
    adv_sum = add(adv_sum, d(fake_images[i], sentences[i]));
    ca_sum = add(ca_sum, ca_loss(mus[i], logvars[i]));
  }
  float inv_n = 1.0f / static_cast<float>(n);
  GLossResult r;
  r.adv = scale(adv_sum, -inv_n);
  r.ca = scale(ca_sum, inv_n);
  r.match = match_term;
  r.total = add(add(r.adv, scale(r.ca, cfg.lambda1)), scale(r.match, cfg.lambda2));
  return r;
}

Tensor ca_loss(const Tensor& mu, const Tensor& logvar) {
  if (mu.numel() != logvar.numel()) {
    throw std::invalid_argument("ca_loss: mu/logvar size mismatch");
  }
  Tensor term = sub(add(hadamard(mu, mu), exp(logvar)), add_scalar(logvar, 1.0f));
  return scale(sum_all(term), 0.5f);
}

Tensor match_loss(const std::vector<Tensor>& images, const std::vector<Tensor>& sentences,
                  const EncodeFn& encode, float temperature) {
  std::size_t n = images.size();
  if (sentences.size() != n) {
    throw std::invalid_argument("match_loss: batch lists must be equal-sized");
  }
  if (n < 2) {
    std::fprintf(stderr, "match_loss: batch size %zu < 2, returning 0\n", n);
    return Tensor::zeros({1});
  }
  std::vector<Tensor> img_rows;
  std::vector<Tensor> sent_rows;
  img_rows.reserve(n);
  sent_rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor f = encode(images[i]);
    img_rows.push_back(reshape(f, {1, static_cast<int>(f.numel())}));
    sent_rows.push_back(
        reshape(sentences[i], {1, static_cast<int>(sentences[i].numel())}));
  }
  auto normalize_rows = [](const Tensor& m) {
    Tensor ssq = sum(hadamard(m, m), 1);
    return hadamard(m, pow_scalar(add_scalar(ssq, 1e-12f), -0.5f));
  };
  Tensor f = normalize_rows(concat_rows(img_rows));
  Tensor s = normalize_rows(concat_rows(sent_rows));
  Tensor sim = scale(matmul(f, transpose(s)), 1.0f / temperature);

  // Diagonal log-softmax both directions: cosine/temperature stays within
  // exp range, so the plain log-sum-exp is safe.
  int bn = static_cast<int>(n);
  std::vector<float> eye_data(n * n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    eye_data[i * n + i] = 1.0f;
  }
  Tensor eye = Tensor::from_data({bn, bn}, std::move(eye_data));
  auto direction = [&](const Tensor& logits) {
    Tensor lse = log(sum(exp(logits), 1));
    Tensor diag = sum(hadamard(logits, eye), 1);
    return mean_all(sub(lse, diag));
  };
  return scale(add(direction(sim), direction(transpose(sim))), 0.5f);
}

}  // namespace dsegan

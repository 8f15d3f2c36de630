#include "dsegan/trainer.hpp"

#include <stdexcept>

#include <json.hpp>

#include "dsegan/ops.hpp"

namespace dsegan {

using nlohmann::json;

namespace {

template <typename T>
void pull(const json& j, const char* key, T* out) {
  if (j.contains(key)) {
    *out = j.at(key).get<T>();
  }
}

// Tracks handled keys so typos in a config file fail loudly.
void check_known(const json& j, std::initializer_list<const char*> known,
                 const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
    }
  }
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j = json::parse(text);
  RunConfig c;
  check_known(j,
              {"seed", "stages", "base_grid", "d0", "d_z", "d_ca", "blocks_per_stage",
               "attn_window", "d_t", "k_agg", "grains", "optimizer", "loss", "batch",
               "steps", "checkpoint_every", "checkpoint_dir", "out_dir", "element_routing",
               "subspace_routing", "hard_router", "d_base_width", "d_max_width"},
              "top level");
  pull(j, "seed", &c.seed);
  pull(j, "stages", &c.stage.num_stages);
  pull(j, "base_grid", &c.stage.base_grid);
  pull(j, "d0", &c.stage.d0);
  pull(j, "d_z", &c.stage.d_z);
  pull(j, "d_ca", &c.stage.d_ca);
  pull(j, "blocks_per_stage", &c.stage.blocks_per_stage);
  pull(j, "attn_window", &c.stage.attn_window);
  pull(j, "d_t", &c.d_t);
  pull(j, "k_agg", &c.k_agg);
  pull(j, "grains", &c.grains);
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    check_known(o, {"type", "beta1", "beta2", "lr_g", "lr_d"}, "optimizer");
    std::string type = "adam";
    pull(o, "type", &type);
    if (type != "adam") {
      throw std::invalid_argument("config: unsupported optimizer '" + type + "'");
    }
    pull(o, "beta1", &c.beta1);
    pull(o, "beta2", &c.beta2);
    pull(o, "lr_g", &c.lr_g);
    pull(o, "lr_d", &c.lr_d);
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    check_known(l, {"lambda_ma", "p", "lambda1", "lambda2"}, "loss");
    pull(l, "lambda_ma", &c.loss.lambda_ma);
    pull(l, "p", &c.loss.p);
    pull(l, "lambda1", &c.loss.lambda1);
    pull(l, "lambda2", &c.loss.lambda2);
  }
  pull(j, "batch", &c.batch);
  pull(j, "steps", &c.steps);
  pull(j, "checkpoint_every", &c.checkpoint_every);
  pull(j, "checkpoint_dir", &c.checkpoint_dir);
  pull(j, "out_dir", &c.out_dir);
  pull(j, "element_routing", &c.element_routing);
  pull(j, "subspace_routing", &c.subspace_routing);
  pull(j, "hard_router", &c.hard_router);
  pull(j, "d_base_width", &c.d_base_width);
  pull(j, "d_max_width", &c.d_max_width);
  if (c.batch < 1 || c.steps < 0 || c.checkpoint_every < 1) {
    throw std::invalid_argument("config: batch/steps/checkpoint_every out of range");
  }
  return c;
}

std::string RunConfig::to_json_text() const {
  json j;
  j["seed"] = seed;
  j["stages"] = stage.num_stages;
  j["base_grid"] = stage.base_grid;
  j["d0"] = stage.d0;
  j["d_z"] = stage.d_z;
  j["d_ca"] = stage.d_ca;
  j["blocks_per_stage"] = stage.blocks_per_stage;
  j["attn_window"] = stage.attn_window;
  j["d_t"] = d_t;
  j["k_agg"] = k_agg;
  j["grains"] = grains;
  j["optimizer"] = {{"type", "adam"}, {"beta1", beta1}, {"beta2", beta2},
                    {"lr_g", lr_g},  {"lr_d", lr_d}};
  j["loss"] = {{"lambda_ma", loss.lambda_ma}, {"p", loss.p}, {"lambda1", loss.lambda1},
               {"lambda2", loss.lambda2}};
  j["batch"] = batch;
  j["steps"] = steps;
  j["checkpoint_every"] = checkpoint_every;
  j["checkpoint_dir"] = checkpoint_dir;
  j["out_dir"] = out_dir;
  j["element_routing"] = element_routing;
  j["subspace_routing"] = subspace_routing;
  j["hard_router"] = hard_router;
  j["d_base_width"] = d_base_width;
  j["d_max_width"] = d_max_width;
  return j.dump();
}

DseOptions TrainState::dse_options() const {
  DseOptions o;
  o.element_routing = cfg.element_routing;
  o.subspace_routing = cfg.subspace_routing;
  o.hard_router = cfg.hard_router;
  return o;
}

TrainState TrainState::init(const RunConfig& cfg) {
  TrainState st;
  st.cfg = cfg;
  st.rng = RandomSource(cfg.seed);
  // Fixed draw order: text encoder, generator, discriminator.
  st.encoder = ToyTextEncoder::init(st.rng, cfg.d_t);
  st.gen = GeneratorParams::init(st.rng, cfg.stage, cfg.d_t, cfg.k_agg, cfg.grains,
                                 kCaptionLen);
  st.disc = DiscriminatorParams::init(st.rng, cfg.stage.final_resolution(), cfg.d_t,
                                      cfg.d_base_width, cfg.d_max_width);
  ParamSet enc_ps, gen_ps;
  st.encoder.register_params(enc_ps);
  st.gen.register_params(gen_ps);
  st.g_params.adopt("enc", enc_ps);
  st.g_params.adopt("gen", gen_ps);
  st.disc.register_params(st.d_params);
  st.g_opt = Adam({cfg.lr_g, cfg.beta1, cfg.beta2, 1e-8f});
  st.d_opt = Adam({cfg.lr_d, cfg.beta1, cfg.beta2, 1e-8f});
  std::vector<ToyCaption> caps = all_captions();
  st.dataset.reserve(caps.size());
  int res = cfg.stage.final_resolution();
  for (const ToyCaption& c : caps) {
    st.dataset.emplace_back(c, render(c, res));
  }
  return st;
}

StepMetrics TrainState::train_step() {
  int b = cfg.batch;
  Tape tape;
  TapeScope scope(tape);

  std::vector<TextFeatures> texts;
  std::vector<Tensor> reals, fakes, fakes_detached, sents, mis_sents, mus, logvars;
  texts.reserve(b);
  for (int i = 0; i < b; ++i) {
    std::int64_t idx = rng.uniform_int(static_cast<std::int64_t>(dataset.size()));
    const auto& [caption, image] = dataset[static_cast<std::size_t>(idx)];
    texts.push_back(encoder.encode(caption));
    reals.push_back(image_to_tensor(image));
    sents.push_back(texts.back().sentence);
    Tensor z = rng.gaussian_tensor({cfg.stage.d_z});
    Tensor ca_noise = rng.gaussian_tensor({cfg.stage.d_ca});
    GeneratorOutput out = generator_forward(z, ca_noise, texts.back(), gen, dse_options());
    fakes.push_back(out.image);
    fakes_detached.push_back(detach(out.image));
    mus.push_back(out.mu);
    logvars.push_back(out.logvar);
  }
  std::vector<int> perm = rng.derangement(b);
  mis_sents.reserve(b);
  for (int i = 0; i < b; ++i) {
    mis_sents.push_back(sents[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
  }

  ScoreFn score = make_score_fn(disc);
  DLossResult d = d_loss(score, reals, fakes_detached, sents, mis_sents, cfg.loss);
  std::vector<Tensor> d_tensors = d_params.tensors();
  d_opt.step(d_tensors, grads_of(d.total, d_tensors, /*create_graph=*/false));

  Tensor match = match_loss(fakes, sents, frozen_trunk_encoder(disc));
  GLossResult g = g_loss(score, fakes, sents, mus, logvars, match, cfg.loss);
  std::vector<Tensor> g_tensors = g_params.tensors();
  g_opt.step(g_tensors, grads_of(g.total, g_tensors, /*create_graph=*/false));

  step += 1;
  StepMetrics m;
  m.step = step;
  m.d_loss = d.total.item();
  m.g_loss = g.total.item();
  m.ca_loss = g.ca.item();
  m.gp = d.gp.item();
  m.grad_norm = d.grad_norm.item();
  m.adv = g.adv.item();
  m.match = g.match.item();
  return m;
}

Checkpoint TrainState::to_checkpoint() const {
  Checkpoint cp;
  cp.config_json = cfg.to_json_text();
  cp.step = step;
  cp.rng_state = rng.serialize_state();
  for (const auto& [name, t] : g_params.items) {
    cp.tensors.emplace_back("g." + name, t);
  }
  for (const auto& [name, t] : d_params.items) {
    cp.tensors.emplace_back("d." + name, t);
  }
  auto save_opt = [&cp](const std::string& prefix, const Adam& opt, const ParamSet& ps) {
    cp.tensors.emplace_back(prefix + ".t",
                            Tensor::scalar(static_cast<float>(opt.steps_taken())));
    const auto& m = opt.first_moments();
    const auto& v = opt.second_moments();
    for (std::size_t i = 0; i < m.size(); ++i) {
      cp.tensors.emplace_back(prefix + ".m." + ps.items[i].first, m[i]);
      cp.tensors.emplace_back(prefix + ".v." + ps.items[i].first, v[i]);
    }
  };
  save_opt("opt_g", g_opt, g_params);
  save_opt("opt_d", d_opt, d_params);
  return cp;
}

TrainState TrainState::from_checkpoint(const Checkpoint& cp) {
  TrainState st = init(RunConfig::from_json_text(cp.config_json));
  auto load_params = [&cp](const std::string& prefix, ParamSet& ps) {
    for (auto& [name, t] : ps.items) {
      const Tensor* src = cp.find(prefix + "." + name);
      if (!src) {
        throw std::runtime_error("checkpoint: missing tensor " + prefix + "." + name);
      }
      if (src->shape() != t.shape()) {
        throw std::runtime_error("checkpoint: shape mismatch for " + prefix + "." + name);
      }
      t.leaf_values() = src->values();
    }
  };
  load_params("g", st.g_params);
  load_params("d", st.d_params);
  auto load_opt = [&cp](const std::string& prefix, Adam& opt, const ParamSet& ps) {
    const Tensor* t = cp.find(prefix + ".t");
    if (!t) return;  // fresh optimizer
    std::vector<Tensor> m, v;
    for (const auto& [name, param] : ps.items) {
      const Tensor* mi = cp.find(prefix + ".m." + name);
      const Tensor* vi = cp.find(prefix + ".v." + name);
      if (!mi || !vi) {
        throw std::runtime_error("checkpoint: missing moments for " + name);
      }
      m.push_back(Tensor::from_data(param.shape(), mi->values()));
      v.push_back(Tensor::from_data(param.shape(), vi->values()));
    }
    opt.restore(static_cast<std::int64_t>(t->item()), std::move(m), std::move(v));
  };
  load_opt("opt_g", st.g_opt, st.g_params);
  load_opt("opt_d", st.d_opt, st.d_params);
  st.step = cp.step;
  st.rng.restore_state(cp.rng_state);
  return st;
}

GenerationResult generate_one(const TrainState& state, const ToyCaption& caption,
                              RandomSource& gen_rng) {
  NoGradScope ng;
  Tensor z = gen_rng.gaussian_tensor({state.cfg.stage.d_z});
  Tensor ca_noise = gen_rng.gaussian_tensor({state.cfg.stage.d_ca});
  TextFeatures text = state.encoder.encode(caption);
  GeneratorOutput out =
      generator_forward(z, ca_noise, text, state.gen, state.dse_options());
  GenerationResult r;
  r.image = tensor_to_image(out.image);
  const StageConfig& sc = state.cfg.stage;
  for (int i = 0; i < sc.stage_count(); ++i) {
    int g = sc.grid(i);
    int factor = sc.final_resolution() / g;
    Tensor up = out.stages[static_cast<std::size_t>(i)].rgb;
    if (factor > 1) {
      up = upsample_nearest(up, g, g, factor);
    }
    r.stage_images.push_back(
        tensor_to_image(scale(up, state.gen.integration.alphas.at(i))));
  }
  r.traces = out.traces;
  return r;
}

}  // namespace dsegan

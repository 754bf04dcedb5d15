#include <cmath>

#include "avdit/error.hpp"
#include "avdit/numerics.hpp"
#include "avdit/superres.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace avdit;

namespace {

ModelConfig sr_model_config() {
  ModelConfig c;
  c.n_layers = 4;
  c.n_boundary = 1;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.vocab_size = 10;
  c.video_channels = 2;
  c.audio_channels = 2;
  c.patch = {1, 2, 2};
  c.axis_split = ModelConfig::default_axis_split(c.d_head());
  c.validate();
  return c;
}

ModelParams sr_model(std::uint64_t seed) {
  InitOptions o;
  o.seed = seed;
  o.weight_std = 0.2f;
  o.gate_init = 0.5f;
  o.zero_output_projections = false;
  return init_params(sr_model_config(), o);
}

struct ConstantVideo : Denoiser {
  Tensor c;
  mutable int calls = 0;
  mutable std::vector<Tensor> audio_seen;
  JointLatent velocity(const JointLatent& x, const Conditioning&) const override {
    ++calls;
    audio_seen.push_back(x.audio.frames);
    JointLatent v{LatentGrid(c), AudioLatent(Tensor(x.audio.frames.shape(), 5.0f))};
    return v;
  }
};

TokenSequence grid_sequence(GridShape g, std::size_t n_text, std::size_t n_audio) {
  TokenBlock text{Tensor::matrix(n_text, 4), {}}, audio{Tensor::matrix(n_audio, 4), {}};
  for (std::size_t i = 0; i < n_text; ++i) text.coords.push_back({static_cast<int>(i), 0, 0});
  for (std::size_t i = 0; i < n_audio; ++i) audio.coords.push_back({static_cast<int>(i), 0, 0});
  TokenBlock video = extract_patches(LatentGrid(g, 4), {1, 1, 1});
  return pack_sequence(text, {Tensor::matrix(0, 4), {}}, video, audio);
}

}  // namespace

TEST_CASE("SR configuration") {
  const SRConfig d;
  CHECK(d.n_steps == 5);
  CHECK(d.renoise_t == 0.5);
  CHECK(d.target_grid({4, 8, 8}) == GridShape{4, 16, 16});

  SRConfig bad = d;
  bad.renoise_t = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.renoise_t = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = d;
  bad.scale = {1.0, 1.5, 1.5};
  CHECK(bad.target_grid({4, 8, 8}) == GridShape{4, 12, 12});
  CHECK_THROWS_AS(bad.target_grid({4, 7, 8}), ConfigError);
  CHECK_THROWS_AS(sr_prepare(LatentGrid({4, 7, 8}, 2), AudioLatent(4, 2), {}, bad, 0), ConfigError);
}

TEST_CASE("SR prepare follows the blend formula") {
  const LatentGrid base(gaussian_noise({2, 2, 4, 2}, 1));
  const AudioLatent audio(gaussian_noise({6, 2}, 2));
  SRConfig cfg;
  cfg.scale = {1.0, 1.0, 1.0};
  cfg.renoise_t = 0.5;
  const SRState s = sr_prepare(base, audio, {}, cfg, 42);
  const Tensor vn = gaussian_noise({2, 2, 4, 2}, 42, 0), an = gaussian_noise({6, 2}, 42, 1);
  for (std::size_t i = 0; i < vn.size(); ++i) CHECK(s.video.tensor()[i] == 0.5f * base.tensor()[i] + 0.5f * vn[i]);
  for (std::size_t i = 0; i < an.size(); ++i) CHECK(s.audio_aux().frames[i] == 0.5f * audio.frames[i] + 0.5f * an[i]);
  CHECK(s.t_cur == 0.5);

  // Near the data endpoint the upsampled latent comes back.
  cfg.scale = {1.0, 2.0, 2.0};
  cfg.renoise_t = 1.0 - 1e-9;
  const SRState near = sr_prepare(base, audio, {}, cfg, 42);
  const LatentGrid up = trilinear_resample(base, {2, 4, 8});
  CHECK(max_abs_diff(near.video.tensor(), up.tensor()) < 1e-6f * std::max(1.0f, max_abs(vn)));
  CHECK(max_abs_diff(near.video.tensor(), oracle::trilinear(base, {2, 4, 8}).tensor()) < 1e-5f);
}

TEST_CASE("SR refine with a constant video field") {
  const LatentGrid base(gaussian_noise({1, 2, 2, 2}, 3));
  const AudioLatent audio(gaussian_noise({4, 2}, 4));
  SRConfig cfg;
  cfg.renoise_t = 0.25;
  const SRState s = sr_prepare(base, audio, {}, cfg, 5);
  ConstantVideo stub;
  stub.c = gaussian_noise({1, 4, 4, 2}, 6);
  const Tensor audio_before = s.audio_aux().frames;
  const LatentGrid out = sr_refine(s, stub, cfg);
  CHECK(stub.calls == 5);
  CHECK(max_abs_diff(out.tensor(), s.video.tensor() + 0.75f * stub.c) < 1e-5f);
  CHECK(s.audio_aux().frames.identical(audio_before));
  for (const Tensor& a : stub.audio_seen) CHECK(a.identical(audio_before));
}

TEST_CASE("local attention bias") {
  SUBCASE("3x3x1 grid, window (1,1,0), brute force") {
    const TokenSequence seq = grid_sequence({3, 3, 1}, 2, 3);
    const Tensor bias = local_attention_bias(seq, {1, 1, 0});
    for (std::size_t i = 0; i < seq.size(); ++i)
      for (std::size_t j = 0; j < seq.size(); ++j) {
        const bool both_video = seq.tags[i] == Modality::Video && seq.tags[j] == Modality::Video;
        const bool allowed = !both_video || oracle::window_allows(seq.pos[i], seq.pos[j], {1, 1, 0});
        CHECK(bias(i, j) == (allowed ? 0.0f : -INFINITY));
        CHECK(bias(i, j) == bias(j, i));
      }
  }
  SUBCASE("window (0,0,0) keeps only self among video") {
    const TokenSequence seq = grid_sequence({2, 2, 3}, 1, 2);
    const Tensor bias = local_attention_bias(seq, {0, 0, 0});
    const auto [vb, ve] = seq.range(Modality::Video);
    for (std::size_t i = 0; i < seq.size(); ++i)
      for (std::size_t j = 0; j < seq.size(); ++j) {
        const bool vv = i >= vb && i < ve && j >= vb && j < ve;
        CHECK(bias(i, j) == (vv && i != j ? -INFINITY : 0.0f));
      }
  }
  SUBCASE("window covering the grid is all zero") {
    const TokenSequence seq = grid_sequence({2, 3, 4}, 2, 2);
    CHECK(max_abs(local_attention_bias(seq, {2, 3, 4})) == 0.0f);
  }
}

TEST_CASE("SR attention plans") {
  const ModelConfig mc = sr_model_config();
  const TokenSequence seq = grid_sequence({2, 2, 2}, 1, 1);
  SRConfig cfg;
  cfg.window = Window3{0, 0, 0};

  const AttentionPlan def = sr_attention_plan(cfg, mc, seq);
  REQUIRE(def.size() == 4);
  CHECK(def.layer_bias[0] == nullptr);
  CHECK(def.layer_bias[1] != nullptr);
  CHECK(def.layer_bias[2] != nullptr);
  CHECK(def.layer_bias[3] == nullptr);

  cfg.local_layers = LocalLayerSet::none();
  for (const auto& b : sr_attention_plan(cfg, mc, seq).layer_bias) CHECK(b == nullptr);

  cfg.local_layers = LocalLayerSet::explicit_layers({0, 3});
  const AttentionPlan ex = sr_attention_plan(cfg, mc, seq);
  CHECK(ex.layer_bias[0] != nullptr);
  CHECK(ex.layer_bias[1] == nullptr);

  cfg.local_layers = LocalLayerSet::explicit_layers({4});
  CHECK_THROWS_AS(sr_attention_plan(cfg, mc, seq), ConfigError);

  cfg.local_layers = LocalLayerSet::all();
  cfg.window.reset();
  for (const auto& b : sr_attention_plan(cfg, mc, seq).layer_bias) CHECK(b == nullptr);
}

TEST_CASE("covering window on every layer equals the global run") {
  const ModelParams p = sr_model(7);
  const LatentGrid base(gaussian_noise({2, 2, 4, 2}, 8));
  const AudioLatent audio(gaussian_noise({5, 2}, 9));
  Conditioning cond;
  cond.text_ids = {1, 2, 3};

  SRConfig global;
  global.window.reset();
  SRConfig local = global;
  local.window = Window3{2, 4, 4};  // patch grid is 2x2x4
  local.local_layers = LocalLayerSet::all();

  const SRState s = sr_prepare(base, audio, cond, global, 10);
  const LatentGrid a = sr_refine(s, p, global), b = sr_refine(s, p, local);
  CHECK(max_abs_diff(a.tensor(), b.tensor()) < 1e-6f);

  // A genuinely local window changes the result.
  local.window = Window3{0, 0, 0};
  CHECK(max_abs_diff(sr_refine(s, p, local).tensor(), a.tensor()) > 1e-6f);
}

TEST_CASE("SR refine with a transformer counts steps and freezes audio") {
  const ModelParams p = sr_model(11);
  const LatentGrid base(gaussian_noise({2, 2, 2, 2}, 12));
  const AudioLatent audio(gaussian_noise({4, 2}, 13));
  SRConfig cfg;
  const SRState s = sr_prepare(base, audio, {{4}, {}}, cfg, 14);
  TransformerDenoiser model = make_sr_denoiser(p, cfg);
  const TokenBlock expected = embed_audio(s.audio_aux(), p.audio_in);
  int seen = 0;
  model.set_observer([&](const TokenSequence& seq) {
    ++seen;
    CHECK(unpack_modality(seq, Modality::Audio).feats.identical(expected.feats));
  });
  const LatentGrid out = sr_refine(s, model, cfg);
  CHECK(model.evaluations() == 5);
  CHECK(seen == 5);
  CHECK(out.grid() == GridShape{2, 4, 4});
  CHECK(out.tensor().all_finite());
}

#include "avdit/superres.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>

#include "avdit/error.hpp"
#include "avdit/numerics.hpp"
#include "avdit/rng.hpp"

namespace avdit {

std::vector<bool> LocalLayerSet::resolve(const ModelConfig& model) const {
  std::vector<bool> local(static_cast<std::size_t>(model.n_layers), false);
  switch (kind) {
    case Kind::None: break;
    case Kind::All: local.assign(local.size(), true); break;
    case Kind::Middle:
      for (int l = 0; l < model.n_layers; ++l) local[static_cast<std::size_t>(l)] = !model.is_boundary(l);
      break;
    case Kind::Explicit:
      for (int l : layers) {
        if (l < 0 || l >= model.n_layers) {
          throw ConfigError("sr local layer index " + std::to_string(l) + " outside [0, " +
                            std::to_string(model.n_layers) + ")");
        }
        local[static_cast<std::size_t>(l)] = true;
      }
      break;
  }
  return local;
}

void SRConfig::validate() const {
  for (double s : scale) {
    if (!(s > 0.0)) throw ConfigError("sr: scale factors must be positive");
  }
  if (!(renoise_t > 0.0 && renoise_t < 1.0)) throw ConfigError("sr: renoise_t must lie strictly inside (0, 1)");
  if (n_steps < 1) throw ConfigError("sr: n_steps must be >= 1");
  if (window) {
    for (int w : *window) {
      if (w < 0) throw ConfigError("sr: window extents must be >= 0");
    }
  }
}

GridShape SRConfig::target_grid(GridShape base) const {
  auto scaled = [](std::size_t n, double s, const char* axis) {
    const double v = static_cast<double>(n) * s;
    const double r = std::round(v);
    if (std::fabs(v - r) > 1e-9 || r < 1.0) {
      throw ConfigError(std::string("sr: scaled extent on axis ") + axis + " is not a positive integer (" +
                        std::to_string(v) + ")");
    }
    return static_cast<std::size_t>(r);
  };
  return {scaled(base.t, scale[0], "t"), scaled(base.h, scale[1], "h"), scaled(base.w, scale[2], "w")};
}

SRState::SRState(LatentGrid v, AudioLatent audio_aux, double t, Conditioning c)
    : video(std::move(v)), t_cur(t), cond(std::move(c)), audio_aux_(std::move(audio_aux)) {}

SRState sr_prepare(const LatentGrid& video_base, const AudioLatent& audio_base, const Conditioning& cond,
                   const SRConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const GridShape target = cfg.target_grid(video_base.grid());
  const LatentGrid up = trilinear_resample(video_base, target);
  const double r = cfg.renoise_t;
  auto blend = [r](float noise, float data) { return static_cast<float>((1.0 - r) * noise + r * data); };
  LatentGrid video(target, video_base.channels());
  const Tensor vn = gaussian_noise(up.tensor().shape(), seed, 0);
  for (std::size_t i = 0; i < vn.size(); ++i) video.tensor()[i] = blend(vn[i], up.tensor()[i]);
  const Tensor an = gaussian_noise(audio_base.frames.shape(), seed, 1);
  Tensor audio(audio_base.frames.shape());
  for (std::size_t i = 0; i < an.size(); ++i) audio[i] = blend(an[i], audio_base.frames[i]);
  return SRState(std::move(video), AudioLatent(std::move(audio)), r, cond);
}

LatentGrid sr_refine(const SRState& state, const Denoiser& model, const SRConfig& cfg) {
  cfg.validate();
  const auto dt = static_cast<float>((1.0 - state.t_cur) / cfg.n_steps);
  JointLatent x{state.video, state.audio_aux()};
  for (int step = 0; step < cfg.n_steps; ++step) {
    const JointLatent v = model.velocity(x, state.cond);
    axpy(dt, v.video.tensor(), x.video.tensor());
    if (!x.video.tensor().all_finite()) throw DivergenceError("sr_refine", step);
  }
  return std::move(x.video);
}

LatentGrid sr_refine(const SRState& state, const ModelParams& sr_params, const SRConfig& cfg) {
  const TransformerDenoiser model = make_sr_denoiser(sr_params, cfg);
  return sr_refine(state, model, cfg);
}

Tensor local_attention_bias(const TokenSequence& seq, const Window3& window) {
  for (int w : window) {
    if (w < 0) throw ConfigError("local_attention_bias: window extents must be >= 0");
  }
  const std::size_t n = seq.size();
  Tensor bias = Tensor::matrix(n, n);
  const auto [vb, ve] = seq.range(Modality::Video);
  constexpr float neg_inf = -std::numeric_limits<float>::infinity();
  for (std::size_t i = vb; i < ve; ++i) {
    const Coord& a = seq.pos[i];
    for (std::size_t j = vb; j < ve; ++j) {
      const Coord& b = seq.pos[j];
      const bool near = std::abs(a.t - b.t) <= window[0] && std::abs(a.y - b.y) <= window[1] &&
                        std::abs(a.x - b.x) <= window[2];
      if (!near) bias(i, j) = neg_inf;
    }
  }
  return bias;
}

AttentionPlan sr_attention_plan(const SRConfig& cfg, const ModelConfig& model, const TokenSequence& seq) {
  const std::vector<bool> local = cfg.local_layers.resolve(model);
  AttentionPlan plan = AttentionPlan::global(local.size());
  if (!cfg.window) return plan;
  auto bias = std::make_shared<const Tensor>(local_attention_bias(seq, *cfg.window));
  for (std::size_t l = 0; l < local.size(); ++l) {
    if (local[l]) plan.layer_bias[l] = bias;
  }
  return plan;
}

TransformerDenoiser make_sr_denoiser(const ModelParams& sr_params, const SRConfig& cfg) {
  cfg.local_layers.resolve(sr_params.config);
  const ModelConfig model = sr_params.config;
  return TransformerDenoiser(sr_params,
                             [cfg, model](const TokenSequence& seq) { return sr_attention_plan(cfg, model, seq); });
}

}  // namespace avdit

#include "avdit/denoiser.hpp"

#include "avdit/error.hpp"

namespace avdit {

TokenSequence embed_inputs(const ModelParams& params, const Conditioning& cond, const JointLatent& x) {
  const ModelConfig& cfg = params.config;
  if (x.video.channels() != static_cast<std::size_t>(cfg.video_channels)) {
    throw DimensionError("video latent has " + std::to_string(x.video.channels()) + " channels, model expects " +
                         std::to_string(cfg.video_channels));
  }
  if (x.audio.channels() != static_cast<std::size_t>(cfg.audio_channels)) {
    throw DimensionError("audio latent has " + std::to_string(x.audio.channels()) + " channels, model expects " +
                         std::to_string(cfg.audio_channels));
  }
  const TokenBlock text = embed_text(cond.text_ids, params.text_embedding);
  TokenBlock ref{Tensor::matrix(0, static_cast<std::size_t>(cfg.d_model)), {}};
  if (cond.ref_image) ref = embed_ref_image(*cond.ref_image, cfg.patch, params.video_in);
  const TokenBlock video = patchify_video(x.video, cfg.patch, params.video_in);
  const TokenBlock audio = embed_audio(x.audio, params.audio_in);
  return pack_sequence(text, ref, video, audio);
}

JointLatent tokens_to_latents(const VelocityTokens& v, const TokenSequence& seq, const ModelParams& params,
                              GridShape video_grid) {
  const auto [vb, ve] = seq.range(Modality::Video);
  const std::span<const Coord> coords(seq.pos.data() + vb, ve - vb);
  const auto channels = static_cast<std::size_t>(params.config.video_channels);
  return {assemble_patches(v.video, coords, params.config.patch, video_grid, channels), AudioLatent(v.audio)};
}

JointLatent predict_velocity(const ModelParams& params, const Conditioning& cond, const JointLatent& x,
                             const AttentionPlan& plan) {
  const TokenSequence seq = embed_inputs(params, cond, x);
  return tokens_to_latents(model_forward(seq, params, plan), seq, params, x.video.grid());
}

TransformerDenoiser::TransformerDenoiser(const ModelParams& params, PlanBuilder plan)
    : params_(&params), plan_(std::move(plan)) {}

JointLatent TransformerDenoiser::velocity(const JointLatent& x, const Conditioning& cond) const {
  const TokenSequence seq = embed_inputs(*params_, cond, x);
  if (observer_) observer_(seq);
  const AttentionPlan plan =
      plan_ ? plan_(seq) : AttentionPlan::global(static_cast<std::size_t>(params_->config.n_layers));
  ++evaluations_;
  return tokens_to_latents(model_forward(seq, *params_, plan), seq, *params_, x.video.grid());
}

}  // namespace avdit

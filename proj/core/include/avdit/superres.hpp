#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "avdit/backbone.hpp"
#include "avdit/denoiser.hpp"
#include "avdit/model_config.hpp"

namespace avdit {

// Which layers of the SR model use the local video-video window.
struct LocalLayerSet {
  enum class Kind { Middle, None, All, Explicit };
  Kind kind = Kind::Middle;
  std::vector<int> layers;  // Explicit only

  static LocalLayerSet middle() { return {Kind::Middle, {}}; }
  static LocalLayerSet none() { return {Kind::None, {}}; }
  static LocalLayerSet all() { return {Kind::All, {}}; }
  static LocalLayerSet explicit_layers(std::vector<int> l) { return {Kind::Explicit, std::move(l)}; }

  // One flag per layer; throws ConfigError on an out-of-range index.
  std::vector<bool> resolve(const ModelConfig& model) const;
};

using Window3 = std::array<int, 3>;

struct SRConfig {
  std::array<double, 3> scale{1.0, 2.0, 2.0};  // (t, h, w) upsample factors
  double renoise_t = 0.5;
  int n_steps = 5;
  std::optional<Window3> window = Window3{2, 4, 4};  // nullopt: global attention
  LocalLayerSet local_layers = LocalLayerSet::middle();

  void validate() const;
  // Base extents times scale; each product must be integral.
  GridShape target_grid(GridShape base) const;
};

inline constexpr int kSrSteps = 5;

// Refinement state. The auxiliary audio is fixed at construction.
class SRState {
 public:
  SRState(LatentGrid video, AudioLatent audio_aux, double t_cur, Conditioning cond);

  LatentGrid video;
  double t_cur;
  Conditioning cond;

  const AudioLatent& audio_aux() const { return audio_aux_; }

 private:
  AudioLatent audio_aux_;
};

// Upsamples the base video trilinearly and renoises it to t = renoise_t
// (the upsampled latent is the data endpoint); the base audio is noised to
// the same level.
SRState sr_prepare(const LatentGrid& video_base, const AudioLatent& audio_base, const Conditioning& cond,
                   const SRConfig& cfg, std::uint64_t seed);

// n_steps uniform Euler steps from t_cur to 1. Each evaluation sees the
// current video and the untouched auxiliary audio; only the video is updated.
LatentGrid sr_refine(const SRState& state, const Denoiser& model, const SRConfig& cfg);
LatentGrid sr_refine(const SRState& state, const ModelParams& sr_params, const SRConfig& cfg);

// Additive mask over seq: video-video pairs farther apart than window on any
// axis get -inf; every pair involving a non-video token stays 0.
Tensor local_attention_bias(const TokenSequence& seq, const Window3& window);

// Per-layer plan: local bias on the selected layers, global elsewhere. A
// global window (nullopt) yields an all-global plan.
AttentionPlan sr_attention_plan(const SRConfig& cfg, const ModelConfig& model, const TokenSequence& seq);

// Denoiser running the SR model under sr_attention_plan.
TransformerDenoiser make_sr_denoiser(const ModelParams& sr_params, const SRConfig& cfg);

}  // namespace avdit

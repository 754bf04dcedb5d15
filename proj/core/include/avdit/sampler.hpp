#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "avdit/denoiser.hpp"
#include "avdit/rng.hpp"

namespace avdit {

// Flow convention: t = 0 is pure noise, t = 1 is data.
struct SamplerConfig {
  int n_steps = 50;
  bool guidance = true;
  float guidance_scale = 5.0f;
  float cond_drop_prob = 0.1f;  // training only

  void validate() const;

  // 50 steps with guidance scale 5.
  static SamplerConfig base();
  // 8 steps, guidance off.
  static SamplerConfig distilled();
};

inline constexpr int kDistilledSteps = 8;

struct FlowPair {
  Tensor x_t;
  Tensor velocity;
};

// x_t = (1 - t) x_noise + t x_data, velocity = x_data - x_noise.
FlowPair flow_interpolate(const Tensor& x_data, const Tensor& x_noise, float t);

// v_uncond + s (v_cond - v_uncond)
Tensor cfg_combine(const Tensor& v_cond, const Tensor& v_uncond, float s);
JointLatent cfg_combine(const JointLatent& v_cond, const JointLatent& v_uncond, float s);

// Standard-normal joint latent; video and audio draw from separate streams.
JointLatent joint_noise(GridShape video_grid, std::size_t video_channels, std::size_t audio_frames,
                        std::size_t audio_channels, std::uint64_t seed);

using StepObserver = std::function<void(int step, const JointLatent& state)>;

// Uniform Euler integration from t = 0 to 1 over n_steps; video and audio
// advance together. With guidance each step evaluates the model twice (the
// unconditional branch drops the text block). observer sees the state after
// every step.
JointLatent euler_sample(const Denoiser& model, const Conditioning& cond, JointLatent init, const SamplerConfig& cfg,
                         const StepObserver& observer = {});

// euler_sample under SamplerConfig::distilled().
JointLatent distilled_sample(const Denoiser& model, const Conditioning& cond, JointLatent init);

// One clean training example.
struct DataSample {
  JointLatent data;
  Conditioning cond;
};

struct FlowSample {
  Conditioning cond;
  JointLatent x_t;
  JointLatent velocity;
  float t = 0.0f;  // shared by video and audio
};

struct FlowBatch {
  std::vector<FlowSample> samples;
};

// Draws one t ~ U(0,1) for both modalities, independent noise per
// modality, and drops the text block with probability cfg.cond_drop_prob.
FlowSample make_training_sample(const DataSample& sample, const SamplerConfig& cfg, CounterRng& rng);
FlowBatch make_training_batch(std::span<const DataSample> samples, const SamplerConfig& cfg, CounterRng& rng);

}  // namespace avdit

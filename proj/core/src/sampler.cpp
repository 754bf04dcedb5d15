#include "avdit/sampler.hpp"

#include <string>

#include "avdit/error.hpp"

namespace avdit {

void SamplerConfig::validate() const {
  if (n_steps < 1) throw ConfigError("sampler: n_steps must be >= 1, got " + std::to_string(n_steps));
  if (!(guidance_scale >= 0.0f)) throw ConfigError("sampler: guidance_scale must be >= 0");
  if (!(cond_drop_prob >= 0.0f && cond_drop_prob <= 1.0f)) {
    throw ConfigError("sampler: cond_drop_prob must lie in [0, 1]");
  }
}

SamplerConfig SamplerConfig::base() { return SamplerConfig{}; }

SamplerConfig SamplerConfig::distilled() {
  SamplerConfig c;
  c.n_steps = kDistilledSteps;
  c.guidance = false;
  return c;
}

FlowPair flow_interpolate(const Tensor& x_data, const Tensor& x_noise, float t) {
  require_same_shape(x_data, x_noise, "flow_interpolate");
  if (!(t >= 0.0f && t <= 1.0f)) throw ConfigError("flow_interpolate: t must lie in [0, 1]");
  FlowPair out{Tensor(x_data.shape()), Tensor(x_data.shape())};
  for (std::size_t i = 0; i < x_data.size(); ++i) {
    out.x_t[i] = (1.0f - t) * x_noise[i] + t * x_data[i];
    out.velocity[i] = x_data[i] - x_noise[i];
  }
  return out;
}

Tensor cfg_combine(const Tensor& v_cond, const Tensor& v_uncond, float s) {
  require_same_shape(v_cond, v_uncond, "cfg_combine");
  Tensor out(v_cond.shape());
  if (s == 0.0f) return v_uncond;
  // Anchored at v_cond so that s = 1 and v_cond == v_uncond are exact.
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v_cond[i] + (s - 1.0f) * (v_cond[i] - v_uncond[i]);
  return out;
}

JointLatent cfg_combine(const JointLatent& v_cond, const JointLatent& v_uncond, float s) {
  return {LatentGrid(cfg_combine(v_cond.video.tensor(), v_uncond.video.tensor(), s)),
          AudioLatent(cfg_combine(v_cond.audio.frames, v_uncond.audio.frames, s))};
}

JointLatent joint_noise(GridShape video_grid, std::size_t video_channels, std::size_t audio_frames,
                        std::size_t audio_channels, std::uint64_t seed) {
  return {LatentGrid(gaussian_noise({video_grid.t, video_grid.h, video_grid.w, video_channels}, seed, 0)),
          AudioLatent(gaussian_noise({audio_frames, audio_channels}, seed, 1))};
}

JointLatent euler_sample(const Denoiser& model, const Conditioning& cond, JointLatent init, const SamplerConfig& cfg,
                         const StepObserver& observer) {
  cfg.validate();
  JointLatent x = std::move(init);
  const float dt = 1.0f / static_cast<float>(cfg.n_steps);
  const Conditioning uncond = cond.without_text();
  for (int step = 0; step < cfg.n_steps; ++step) {
    JointLatent v = model.velocity(x, cond);
    if (cfg.guidance) v = cfg_combine(v, model.velocity(x, uncond), cfg.guidance_scale);
    axpy(dt, v.video.tensor(), x.video.tensor());
    axpy(dt, v.audio.frames, x.audio.frames);
    if (!x.video.tensor().all_finite() || !x.audio.frames.all_finite()) throw DivergenceError("euler_sample", step);
    if (observer) observer(step, x);
  }
  return x;
}

JointLatent distilled_sample(const Denoiser& model, const Conditioning& cond, JointLatent init) {
  return euler_sample(model, cond, std::move(init), SamplerConfig::distilled());
}

FlowSample make_training_sample(const DataSample& sample, const SamplerConfig& cfg, CounterRng& rng) {
  const float t = static_cast<float>(rng.uniform());
  const std::uint64_t noise_seed = rng.next_u64();
  const Tensor video_noise = gaussian_noise(sample.data.video.tensor().shape(), noise_seed, 0);
  const Tensor audio_noise = gaussian_noise(sample.data.audio.frames.shape(), noise_seed, 1);
  const FlowPair v = flow_interpolate(sample.data.video.tensor(), video_noise, t);
  const FlowPair a = flow_interpolate(sample.data.audio.frames, audio_noise, t);
  FlowSample out;
  out.t = t;
  out.cond = rng.bernoulli(cfg.cond_drop_prob) ? sample.cond.without_text() : sample.cond;
  out.x_t = {LatentGrid(v.x_t), AudioLatent(a.x_t)};
  out.velocity = {LatentGrid(v.velocity), AudioLatent(a.velocity)};
  return out;
}

FlowBatch make_training_batch(std::span<const DataSample> samples, const SamplerConfig& cfg, CounterRng& rng) {
  FlowBatch batch;
  batch.samples.reserve(samples.size());
  for (const auto& s : samples) batch.samples.push_back(make_training_sample(s, cfg, rng));
  return batch;
}

}  // namespace avdit

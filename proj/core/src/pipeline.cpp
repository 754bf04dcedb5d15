#include "avdit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <vector>

#include "avdit/error.hpp"

namespace avdit {

namespace {

using Clock = std::chrono::steady_clock;

double seconds(Clock::time_point a, Clock::time_point b) { return std::chrono::duration<double>(b - a).count(); }

template <class E>
auto with_stage(const char* stage, E&& body) {
  try {
    return body();
  } catch (const DivergenceError& e) {
    throw DivergenceError(std::string(stage) + "/" + e.stage(), e.step());
  }
}

}  // namespace

std::string resolution_label(GridShape latent, PatchSize factors) {
  return std::to_string(latent.h * factors.h) + "p";
}

void validate_models(const PipelineModels& models, const PipelineConfig& cfg) {
  auto mismatch = [](const std::string& what) { throw CheckpointError(CheckpointErrorKind::ShapeMismatch, what); };
  if (!models.base || !models.decoder) throw ConfigError("pipeline: base model and decoder are required");
  const ModelConfig& base = models.base->config;
  if (models.decoder->channels() != static_cast<std::size_t>(base.video_channels)) {
    mismatch("decoder expects " + std::to_string(models.decoder->channels()) + " latent channels, base model has " +
             std::to_string(base.video_channels));
  }
  if (cfg.sr_enabled) {
    if (!models.sr) throw ConfigError("pipeline: SR enabled but no SR model loaded");
    const ModelConfig& sr = models.sr->config;
    if (sr.video_channels != base.video_channels || sr.audio_channels != base.audio_channels) {
      mismatch("SR model latent channels do not match the base model");
    }
    if (sr.vocab_size < base.vocab_size) mismatch("SR model vocabulary is smaller than the base model's");
  }
}

PipelineResult run_pipeline(const PipelineModels& models, const PipelineConfig& cfg, const Conditioning& cond) {
  validate_models(models, cfg);
  cfg.base_sampler.validate();
  const ModelParams& base = *models.base;
  const JointLatent init = joint_noise(cfg.base_grid, static_cast<std::size_t>(base.config.video_channels),
                                       cfg.audio_frames, static_cast<std::size_t>(base.config.audio_channels), cfg.seed);
  const TransformerDenoiser base_model(base);
  std::optional<TransformerDenoiser> sr_model;
  if (cfg.sr_enabled) {
    sr_model.emplace(*models.sr, [sr = cfg.sr, mc = models.sr->config](const TokenSequence& seq) {
      return sr_attention_plan(sr, mc, seq);
    });
  }

  PipelineResult out;
  StageReport& r = out.report;
  const auto t0 = Clock::now();
  JointLatent sample = with_stage("base", [&] { return euler_sample(base_model, cond, init, cfg.base_sampler); });
  const auto t1 = Clock::now();
  LatentGrid video = sample.video;
  auto t2 = t1;
  if (cfg.sr_enabled) {
    video = with_stage("sr", [&] {
      const SRState state = sr_prepare(sample.video, sample.audio, cond, cfg.sr, mix64(cfg.seed) + 1);
      return sr_refine(state, *sr_model, cfg.sr);
    });
    t2 = Clock::now();
  }
  out.pixels = decode_latent(video, *models.decoder);
  const auto t3 = Clock::now();

  r.base_s = seconds(t0, t1);
  if (cfg.sr_enabled) r.sr_s = seconds(t1, t2);
  r.decode_s = seconds(t2, t3);
  r.total_s = seconds(t0, t3);
  r.base_steps = cfg.base_sampler.n_steps;
  r.base_evaluations = base_model.evaluations();
  if (cfg.sr_enabled) {
    r.sr_steps = cfg.sr.n_steps;
    r.sr_evaluations = sr_model->evaluations();
  }
  r.base_latent = sample.video.grid();
  r.output_latent = video.grid();
  r.resolution = resolution_label(video.grid(), models.decoder->factors);

  out.base_video = std::move(sample.video);
  out.video = std::move(video);
  out.audio = std::move(sample.audio);
  return out;
}

StageReport median_report(std::span<const StageReport> runs) {
  if (runs.empty()) throw ConfigError("median_report: no runs");
  auto median = [&](auto get) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(get(r));
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  StageReport agg = runs.front();
  agg.base_s = median([](const StageReport& r) { return r.base_s; });
  if (agg.sr_s) agg.sr_s = median([](const StageReport& r) { return r.sr_s.value_or(0.0); });
  agg.decode_s = median([](const StageReport& r) { return r.decode_s; });
  agg.total_s = agg.base_s + agg.sr_s.value_or(0.0) + agg.decode_s;
  return agg;
}

StageReport bench(const PipelineModels& models, const PipelineConfig& cfg, const Conditioning& cond, int n_runs,
                  bool warmup, std::vector<StageReport>* runs_out) {
  if (n_runs < 1) throw ConfigError("bench: n_runs must be >= 1");
  if (warmup) run_pipeline(models, cfg, cond);
  std::vector<StageReport> runs;
  for (int i = 0; i < n_runs; ++i) runs.push_back(run_pipeline(models, cfg, cond).report);
  StageReport agg = median_report(runs);
  if (runs_out) *runs_out = std::move(runs);
  return agg;
}

}  // namespace avdit

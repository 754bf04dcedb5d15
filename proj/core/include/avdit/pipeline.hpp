#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avdit/decoder.hpp"
#include "avdit/params.hpp"
#include "avdit/sampler.hpp"
#include "avdit/superres.hpp"

namespace avdit {

// Wall-clock breakdown of one run, in seconds.
struct StageReport {
  std::string resolution;
  double base_s = 0.0;
  std::optional<double> sr_s;  // absent when SR is skipped
  double decode_s = 0.0;
  double total_s = 0.0;
  int base_steps = 0;
  std::size_t base_evaluations = 0;
  std::optional<int> sr_steps;
  std::optional<std::size_t> sr_evaluations;
  GridShape base_latent;
  GridShape output_latent;
};

struct PipelineConfig {
  SamplerConfig base_sampler = SamplerConfig::distilled();
  GridShape base_grid{4, 8, 8};
  std::size_t audio_frames = 16;
  bool sr_enabled = false;
  SRConfig sr;
  std::uint64_t seed = 0;
};

// Loaded weights; all must outlive the run. sr may be null when SR is off.
struct PipelineModels {
  const ModelParams* base = nullptr;
  const ModelParams* sr = nullptr;
  const DecoderParams* decoder = nullptr;
};

struct PipelineResult {
  Tensor pixels;          // [T, H, W, 3]
  LatentGrid base_video;  // base-stage video latent
  LatentGrid video;       // final video latent (refined when SR ran)
  AudioLatent audio;      // base-stage audio latent
  StageReport report;
};

// Throws CheckpointError(ShapeMismatch) when the models do not fit together.
void validate_models(const PipelineModels& models, const PipelineConfig& cfg);

// base sampling -> optional latent SR -> decode, timed per stage.
PipelineResult run_pipeline(const PipelineModels& models, const PipelineConfig& cfg, const Conditioning& cond);

// Per-stage medians; counts, labels and shapes come from the first run.
StageReport median_report(std::span<const StageReport> runs);

// Per-stage medians over n_runs (after an optional discarded warm-up run).
// runs_out, when given, receives the individual reports.
StageReport bench(const PipelineModels& models, const PipelineConfig& cfg, const Conditioning& cond, int n_runs,
                  bool warmup = false, std::vector<StageReport>* runs_out = nullptr);

// "<pixel height>p" label of an output latent grid under decoder factors.
std::string resolution_label(GridShape latent, PatchSize factors);

// Table with columns Resolution | Base | SR | Decode | Total; "--" marks a
// skipped SR stage. Stage values are rounded to `decimals` places and Total
// is the sum of the rounded stage columns.
std::string format_report(std::span<const StageReport> rows, int decimals = 1);
std::string format_report(const StageReport& row, int decimals = 1);

// Machine-readable "key = value" lines.
std::string report_to_kv(const StageReport& r);

}  // namespace avdit

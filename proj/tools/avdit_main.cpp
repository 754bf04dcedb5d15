// avdit: train toy checkpoints, sample, run the base -> SR -> decode
// pipeline, benchmark stages and run the built-in verification battery.

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "avdit/checkpoint.hpp"
#include "avdit/config_file.hpp"
#include "avdit/dataset.hpp"
#include "avdit/decoder.hpp"
#include "avdit/error.hpp"
#include "avdit/pipeline.hpp"
#include "avdit/selfcheck.hpp"
#include "avdit/tensor_io.hpp"
#include "avdit/training.hpp"

namespace fs = std::filesystem;
using namespace avdit;

namespace {

enum Exit : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kCheckpoint = 3, kDiverged = 4, kRuntime = 5 };

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool distilled = false;
  bool sr = false;
  std::optional<int> sr_steps;
  std::string out_dir = "out";
  std::optional<std::string> checkpoint_dir;
  std::vector<std::string> overrides;
  int decimals = 1;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "flat key = value config file");
  cmd->add_option("--seed", o.seed, "RNG seed (overrides pipeline.seed and train.seed)");
  cmd->add_flag("--distilled", o.distilled, "8-step base sampler without guidance");
  cmd->add_flag("--sr", o.sr, "enable latent super-resolution");
  cmd->add_option("--sr.steps", o.sr_steps, "SR refinement steps");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--checkpoints", o.checkpoint_dir, "checkpoint directory (overrides pipeline.checkpoint_dir)");
  cmd->add_option("--set", o.overrides, "extra key=value config override");
  cmd->add_option("--decimals", o.decimals, "decimal places in the timing table")->check(CLI::Range(0, 6));
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) {
    cfg.pipeline.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  if (o.distilled) cfg.pipeline.distilled = true;
  if (o.sr) cfg.pipeline.sr = true;
  if (o.sr_steps) cfg.sr.n_steps = *o.sr_steps;
  if (o.checkpoint_dir) cfg.pipeline.checkpoint_dir = *o.checkpoint_dir;
  cfg.validate();
  return cfg;
}

fs::path ckpt_path(const RunConfig& cfg, const char* name) { return fs::path(cfg.pipeline.checkpoint_dir) / name; }

ToyDatasetConfig toy_data(const RunConfig& cfg, GridShape grid) {
  if (cfg.pipeline.audio_frames % cfg.pipeline.base_grid.t != 0) {
    throw ConfigError("pipeline.audio_frames must be a multiple of the base grid's frame count for toy training");
  }
  ToyDatasetConfig d;
  d.grid = grid;
  d.video_channels = static_cast<std::size_t>(cfg.model.video_channels);
  d.audio_channels = static_cast<std::size_t>(cfg.model.audio_channels);
  d.audio_frames_per_video_frame = cfg.pipeline.audio_frames / cfg.pipeline.base_grid.t;
  return d;
}

PipelineConfig pipeline_config(const RunConfig& cfg) {
  PipelineConfig p;
  p.base_sampler = cfg.pipeline.distilled ? SamplerConfig::distilled() : cfg.sampler;
  p.base_grid = cfg.pipeline.base_grid;
  p.audio_frames = cfg.pipeline.audio_frames;
  p.sr_enabled = cfg.pipeline.sr;
  p.sr = cfg.sr;
  p.seed = cfg.pipeline.seed;
  return p;
}

struct LoadedModels {
  ModelParams base;
  std::optional<ModelParams> sr;
  DecoderParams decoder;

  PipelineModels view() const { return {&base, sr ? &*sr : nullptr, &decoder}; }
};

LoadedModels load_models(const RunConfig& cfg, bool need_sr) {
  for (const char* name : {"base.ckpt", "decoder.ckpt"}) {
    if (!fs::exists(ckpt_path(cfg, name))) {
      throw CheckpointError(CheckpointErrorKind::Io,
                            "missing checkpoint " + ckpt_path(cfg, name).string() + " (run train-toy first)");
    }
  }
  LoadedModels m{load_checkpoint(ckpt_path(cfg, "base.ckpt"), &cfg.model), std::nullopt,
                 load_decoder(ckpt_path(cfg, "decoder.ckpt"))};
  if (need_sr) {
    if (!fs::exists(ckpt_path(cfg, "sr.ckpt"))) {
      throw CheckpointError(CheckpointErrorKind::Io, "missing checkpoint " + ckpt_path(cfg, "sr.ckpt").string());
    }
    m.sr = load_checkpoint(ckpt_path(cfg, "sr.ckpt"), &cfg.model);
  }
  return m;
}

Conditioning prompt(const RunConfig& cfg) { return {cfg.pipeline.prompt, std::nullopt}; }

void write_outputs(const fs::path& dir, const PipelineResult& r, bool frames) {
  fs::create_directories(dir);
  write_tensor(dir / "video.tensor", r.pixels, "thwc");
  write_tensor(dir / "video_latent.tensor", r.video.tensor(), "thwc");
  write_tensor(dir / "base_latent.tensor", r.base_video.tensor(), "thwc");
  write_tensor(dir / "audio_latent.tensor", r.audio.frames, "fc");
  write_text(dir / "report.txt", report_to_kv(r.report));
  if (frames) write_ppm_frames(dir / "frames", r.pixels);
}

int cmd_train_toy(const CommonOptions& o, std::optional<int> steps) {
  RunConfig cfg = resolve_config(o);
  if (steps) cfg.train.steps = *steps;
  cfg.validate();
  fs::create_directories(cfg.pipeline.checkpoint_dir);

  ToyTrainOptions opt;
  opt.steps = cfg.train.steps;
  opt.batch = cfg.train.batch;
  opt.adam.lr = cfg.train.lr;
  opt.seed = cfg.train.seed;
  opt.cond_drop_prob = cfg.sampler.cond_drop_prob;

  auto train = [&](const char* label, GridShape grid, std::uint64_t init_seed) {
    InitOptions init;
    init.seed = init_seed;
    ModelParams p = init_params(cfg.model, init);
    std::cout << label << ": " << p.parameter_count() << " parameters, grid " << to_string(grid) << "\n";
    const ToyTrainResult r = train_toy(p, toy_data(cfg, grid), opt, [&](int step, double loss) {
      if (step == 1 || step % cfg.train.log_every == 0 || step == opt.steps) {
        std::cout << "  step " << std::setw(5) << step << "  loss " << std::fixed << std::setprecision(5) << loss
                  << "\n";
      }
    });
    std::cout << "  eval loss " << std::fixed << std::setprecision(5) << r.eval_initial << " -> " << r.eval_final
              << " (" << std::setprecision(1) << 100.0 * r.eval_final / r.eval_initial << "%)\n";
    return p;
  };

  const ModelParams base = train("base", cfg.pipeline.base_grid, cfg.train.seed);
  save_checkpoint(base, ckpt_path(cfg, "base.ckpt"), "base");
  if (cfg.train.sr) {
    const ModelParams sr = train("sr", cfg.sr.target_grid(cfg.pipeline.base_grid), cfg.train.seed + 1);
    save_checkpoint(sr, ckpt_path(cfg, "sr.ckpt"), "sr");
  } else {
    save_checkpoint(base, ckpt_path(cfg, "sr.ckpt"), "sr");
    std::cout << "sr: initialized from base weights (set train.sr = true to train separately)\n";
  }

  const ToyDatasetConfig data = toy_data(cfg, cfg.pipeline.base_grid);
  CounterRng rng(cfg.train.seed, 0xdec);
  std::vector<LatentGrid> latents;
  std::vector<Tensor> pixels;
  for (int i = 0; i < cfg.train.decoder_samples; ++i) {
    const ToyClip clip = draw_toy_clip(data, rng);
    pixels.push_back(render_toy_pixels(data, clip, cfg.pipeline.decoder_factors));
    latents.push_back(toy_video_latent(data, clip));
  }
  const DecoderParams dec = fit_decoder(latents, pixels, cfg.pipeline.decoder_factors);
  double mse = 0.0;
  for (std::size_t i = 0; i < latents.size(); ++i) mse += mean_squared_error(decode_latent(latents[i], dec), pixels[i]);
  std::cout << "decoder: fit on " << latents.size() << " clips, pixel mse " << std::scientific << std::setprecision(2)
            << mse / static_cast<double>(latents.size()) << "\n";
  save_decoder(dec, ckpt_path(cfg, "decoder.ckpt"));
  std::cout << "wrote " << cfg.pipeline.checkpoint_dir << "/{base,sr,decoder}.ckpt\n";
  return kOk;
}

int cmd_run(const CommonOptions& o, bool allow_sr) {
  RunConfig cfg = resolve_config(o);
  if (!allow_sr) cfg.pipeline.sr = false;
  const LoadedModels models = load_models(cfg, cfg.pipeline.sr);
  const PipelineResult r = run_pipeline(models.view(), pipeline_config(cfg), prompt(cfg));
  write_outputs(o.out_dir, r, cfg.pipeline.frames);
  std::cout << format_report(r.report, o.decimals) << "\n";
  std::cout << "base evaluations: " << r.report.base_evaluations;
  if (r.report.sr_evaluations) std::cout << ", sr evaluations: " << *r.report.sr_evaluations;
  std::cout << "\nwrote " << o.out_dir << "\n";
  return kOk;
}

int cmd_bench(const CommonOptions& o, int runs, bool warmup, bool sweep) {
  RunConfig cfg = resolve_config(o);
  std::vector<StageReport> rows;
  if (sweep) {
    const LoadedModels models = load_models(cfg, true);
    for (double s : {0.0, 2.0, 4.0}) {
      PipelineConfig p = pipeline_config(cfg);
      p.sr_enabled = s > 0.0;
      if (p.sr_enabled) p.sr.scale = {1.0, s, s};
      rows.push_back(bench(models.view(), p, prompt(cfg), runs, warmup));
    }
  } else {
    const LoadedModels models = load_models(cfg, cfg.pipeline.sr);
    rows.push_back(bench(models.view(), pipeline_config(cfg), prompt(cfg), runs, warmup));
  }
  std::cout << format_report(rows, o.decimals) << "\n";
  for (const auto& r : rows) {
    std::cout << r.resolution << ": base " << r.base_evaluations << " evals on " << to_string(r.base_latent);
    if (r.sr_evaluations) std::cout << ", sr " << *r.sr_evaluations << " evals on " << to_string(r.output_latent);
    std::cout << "\n";
  }
  fs::create_directories(o.out_dir);
  std::string kv;
  for (const auto& r : rows) kv += report_to_kv(r) + "\n";
  write_text(fs::path(o.out_dir) / "bench.txt", kv);
  return kOk;
}

int cmd_check(const CommonOptions& o) {
  RunConfig cfg = resolve_config(o);
  std::optional<ModelParams> sr;
  for (const char* name : {"base.ckpt", "sr.ckpt"}) {
    if (fs::exists(ckpt_path(cfg, name))) {
      ModelParams p = load_checkpoint(ckpt_path(cfg, name), &cfg.model);
      std::cout << "loaded " << ckpt_path(cfg, name).string() << "\n";
      if (std::string(name) == "sr.ckpt") sr = std::move(p);
    }
  }
  if (fs::exists(ckpt_path(cfg, "decoder.ckpt"))) {
    load_decoder(ckpt_path(cfg, "decoder.ckpt"));
    std::cout << "loaded " << ckpt_path(cfg, "decoder.ckpt").string() << "\n";
  }
  const auto results = run_self_checks(cfg.model, cfg.sr, sr ? &*sr : nullptr, cfg.pipeline.seed);
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    all = all && r.passed;
  }
  std::cout << (all ? "all checks passed" : "some checks FAILED") << "\n";
  return all ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"avdit: single-stream audio-video diffusion transformer toolkit"};
  app.require_subcommand(1);

  CommonOptions o;
  std::optional<int> steps;
  int runs = 3;
  bool warmup = false;
  bool sweep = false;

  auto* train = app.add_subcommand("train-toy", "train toy base/SR checkpoints and fit the decoder");
  add_common(train, o);
  train->add_option("--steps", steps, "training steps (overrides train.steps)");
  auto* sample = app.add_subcommand("sample", "base sampling and decode, no SR");
  add_common(sample, o);
  auto* pipe = app.add_subcommand("pipeline", "base sampling, optional SR, decode");
  add_common(pipe, o);
  auto* bench_cmd = app.add_subcommand("bench", "per-stage timing table");
  add_common(bench_cmd, o);
  bench_cmd->add_option("--runs", runs, "timed runs per row (median)")->check(CLI::PositiveNumber);
  bench_cmd->add_flag("--warmup", warmup, "discard one warm-up run");
  bench_cmd->add_flag("--sweep", sweep, "rows for SR off, 2x and 4x");
  auto* check = app.add_subcommand("check", "run the verification battery");
  add_common(check, o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train_toy(o, steps);
    if (*sample) return cmd_run(o, false);
    if (*pipe) return cmd_run(o, true);
    if (*bench_cmd) return cmd_bench(o, runs, warmup, sweep);
    if (*check) return cmd_check(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const CheckpointError& e) {
    std::cerr << e.what() << "\n";
    return kCheckpoint;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

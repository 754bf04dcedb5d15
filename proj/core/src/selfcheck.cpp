#include "avdit/selfcheck.hpp"

#include <cmath>
#include <sstream>

#include "avdit/dataset.hpp"
#include "avdit/numerics.hpp"
#include "avdit/rng.hpp"
#include "avdit/training.hpp"

namespace avdit {

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

// Eight-corner blend written out directly, independent of the library kernel.
double corner_sample(const LatentGrid& g, double ct, double cy, double cx, std::size_t c) {
  const auto gs = g.grid();
  const auto lo = [](double p, std::size_t n) { return std::min(static_cast<std::size_t>(std::floor(p)), n - 1); };
  const std::size_t t0 = lo(ct, gs.t), y0 = lo(cy, gs.h), x0 = lo(cx, gs.w);
  const std::size_t t1 = std::min(t0 + 1, gs.t - 1), y1 = std::min(y0 + 1, gs.h - 1), x1 = std::min(x0 + 1, gs.w - 1);
  const double ft = ct - t0, fy = cy - y0, fx = cx - x0;
  double acc = 0.0;
  for (int dt = 0; dt < 2; ++dt) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dt ? ft : 1 - ft) * (dy ? fy : 1 - fy) * (dx ? fx : 1 - fx);
        acc += w * g.at(dt ? t1 : t0, dy ? y1 : y0, dx ? x1 : x0, c);
      }
    }
  }
  return acc;
}

double src_coord(std::size_t i, std::size_t n_out, std::size_t n_in) {
  if (n_out == 1) return (static_cast<double>(n_in) - 1.0) / 2.0;
  return static_cast<double>(i) * (static_cast<double>(n_in) - 1.0) / (static_cast<double>(n_out) - 1.0);
}

CheckResult check_trilinear(std::uint64_t seed) {
  CounterRng rng(seed, 11);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const GridShape src{1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4)};
    const GridShape dst{1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(6)};
    const std::size_t ch = 1 + rng.below(3);
    LatentGrid g(gaussian_noise({src.t, src.h, src.w, ch}, seed, 100 + trial));
    const LatentGrid out = trilinear_resample(g, dst);
    for (std::size_t t = 0; t < dst.t; ++t) {
      for (std::size_t y = 0; y < dst.h; ++y) {
        for (std::size_t x = 0; x < dst.w; ++x) {
          for (std::size_t c = 0; c < ch; ++c) {
            const double ref = corner_sample(g, src_coord(t, dst.t, src.t), src_coord(y, dst.h, src.h),
                                             src_coord(x, dst.w, src.w), c);
            worst = std::max(worst, std::abs(ref - out.at(t, y, x, c)));
          }
        }
      }
    }
  }
  return {"trilinear oracle", worst <= 1e-6, "max error " + fmt(worst) + " over 50 random grids"};
}

CheckResult check_census(const ModelConfig& cfg) {
  const ModelParams p = init_params(cfg);
  const ParamCensus c = param_census(p, cfg);
  const bool ok = c.shared_middle_layers == cfg.n_layers - 2 * cfg.n_boundary &&
                  c.boundary_layers == 2 * cfg.n_boundary &&
                  c.total() == p.parameter_count();
  return {"param census", ok,
          "L=" + std::to_string(cfg.n_layers) + " B=" + std::to_string(cfg.n_boundary) + ": " +
              std::to_string(c.shared_middle_layers) + " shared middle layers, " + std::to_string(c.boundary_layers) +
              " boundary layers, " + std::to_string(c.total()) + " parameters"};
}

FlowBatch check_batch(const ModelConfig& cfg, std::uint64_t seed, int n) {
  ToyDatasetConfig data;
  data.grid = {2 * cfg.patch.t, 2 * cfg.patch.h, 2 * cfg.patch.w};
  data.video_channels = static_cast<std::size_t>(cfg.video_channels);
  data.audio_channels = static_cast<std::size_t>(cfg.audio_channels);
  data.audio_frames_per_video_frame = 2;
  CounterRng rng(seed, 3);
  std::vector<DataSample> samples;
  for (int i = 0; i < n; ++i) samples.push_back(draw_toy_sample(data, rng));
  // A reference image on the first sample keeps the ref-image banks live.
  samples[0].cond.ref_image = samples.back().data.video;
  SamplerConfig sc;
  sc.cond_drop_prob = 0.0f;
  return make_training_batch(samples, sc, rng);
}

CheckResult check_gradients(const ModelConfig& cfg, std::uint64_t seed) {
  const ModelParams p = gradcheck_model(cfg, seed);
  const FlowBatch batch = check_batch(p.config, seed, 2);
  GradCheckOptions opt;
  opt.seed = seed;
  const GradCheckReport r = gradient_check(p, batch, opt);
  return {"gradient check", r.failed == 0,
          std::to_string(r.checked - r.failed) + "/" + std::to_string(r.checked) +
              " arrays within " + fmt(opt.tolerance) + ", max relative error " + fmt(r.max_rel_error) + " (" +
              r.worst_array + ")"};
}

JointLatent probe_latent(const ModelConfig& cfg, GridShape grid, std::size_t frames, std::uint64_t seed) {
  return joint_noise(grid, static_cast<std::size_t>(cfg.video_channels), frames,
                     static_cast<std::size_t>(cfg.audio_channels), seed);
}

CheckResult check_timestep_free(const ModelParams& p, std::uint64_t seed) {
  const GridShape grid{2 * p.config.patch.t, 2 * p.config.patch.h, 2 * p.config.patch.w};
  const JointLatent x = probe_latent(p.config, grid, 4, seed);
  const Conditioning cond{{1, 5}, std::nullopt};
  TransformerDenoiser d(p);
  const JointLatent a = d.velocity(x, cond);
  const JointLatent b = d.velocity(x, cond);
  const bool ok = a.video.tensor().identical(b.video.tensor()) && a.audio.frames.identical(b.audio.frames);
  return {"timestep-free determinism", ok, ok ? "repeat forwards bitwise equal" : "repeat forwards differ"};
}

SRState probe_sr_state(const ModelConfig& cfg, const SRConfig& sr, std::uint64_t seed) {
  const GridShape base{1 * cfg.patch.t, 2 * cfg.patch.h, 2 * cfg.patch.w};
  const JointLatent x = probe_latent(cfg, base, 4, seed);
  return sr_prepare(x.video, x.audio, Conditioning{{1, 5}, std::nullopt}, sr, seed + 1);
}

CheckResult check_local_global(const ModelParams& p, const SRConfig& sr, std::uint64_t seed) {
  SRConfig global = sr;
  global.window.reset();
  const SRState state = probe_sr_state(p.config, global, seed);
  const GridShape g = state.video.grid();
  SRConfig wide = sr;
  wide.local_layers = LocalLayerSet::all();
  wide.window = Window3{static_cast<int>(g.t), static_cast<int>(g.h), static_cast<int>(g.w)};
  const LatentGrid a = sr_refine(state, p, global);
  const LatentGrid b = sr_refine(state, p, wide);
  const double diff = max_abs_diff(a.tensor(), b.tensor());
  return {"local = global", diff <= 1e-5, "max difference " + fmt(diff) + " with window >= grid"};
}

CheckResult check_frozen_audio(const ModelParams& p, const SRConfig& sr, std::uint64_t seed) {
  const SRState state = probe_sr_state(p.config, sr, seed);
  TransformerDenoiser d = make_sr_denoiser(p, sr);
  const Tensor expected = embed_audio(state.audio_aux(), p.audio_in).feats;
  int steps = 0;
  bool ok = true;
  d.set_observer([&](const TokenSequence& seq) {
    ++steps;
    ok = ok && unpack_modality(seq, Modality::Audio).feats.identical(expected);
  });
  sr_refine(state, d, sr);
  ok = ok && steps == sr.n_steps;
  return {"frozen audio", ok, std::to_string(steps) + " SR evaluations, audio tokens " + (ok ? "unchanged" : "CHANGED")};
}

}  // namespace

ModelParams gradcheck_model(const ModelConfig& cfg, std::uint64_t seed) {
  ModelConfig small = cfg;
  small.n_layers = 4;
  small.n_boundary = 1;
  small.n_heads = 2;
  small.d_model = 32;
  small.d_ff = 64;
  small.axis_split = ModelConfig::default_axis_split(small.d_head());
  InitOptions init;
  init.seed = seed;
  init.weight_std = 0.1f;
  init.gate_init = 0.5f;
  init.zero_output_projections = false;
  return init_params(small, init);
}

GradCheckReport gradient_check(const ModelParams& params, const FlowBatch& batch, const GradCheckOptions& opt) {
  ModelParams grad = zeros_like(params);
  flow_loss_and_grad(params, batch, grad);

  ModelParams probe = params;
  std::vector<std::pair<std::string, Tensor*>> arrays;
  std::vector<const Tensor*> grads;
  probe.for_each_array([&](const std::string& name, Tensor& t, ParamCategory) { arrays.emplace_back(name, &t); });
  grad.for_each_array([&](const std::string&, const Tensor& t, ParamCategory) { grads.push_back(&t); });

  GradCheckReport report;
  for (std::size_t a = 0; a < arrays.size(); ++a) {
    Tensor& w = *arrays[a].second;
    const Tensor& g = *grads[a];
    const Tensor orig = w;
    auto unit = [](Tensor t) {
      double n = 0.0;
      for (float v : t.values()) n += static_cast<double>(v) * v;
      const auto inv = static_cast<float>(1.0 / std::sqrt(n));
      for (auto& v : t.values()) v *= inv;
      return t;
    };
    // Fourth-order central difference of the loss along direction u.
    auto slope = [&](const Tensor& u) {
      auto at = [&](double step) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(orig[i] + step * u[i]);
        return flow_loss(probe, batch);
      };
      const double h = opt.h;
      const double d = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
      w = orig;
      return d;
    };
    auto dot = [&](const Tensor& u) {
      double s = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) s += static_cast<double>(g[i]) * u[i];
      return s;
    };
    const Tensor random_dir = unit(gaussian_noise(w.shape(), opt.seed, 1000 + a));
    double gnorm = 0.0;
    for (float v : g.values()) gnorm += static_cast<double>(v) * v;
    gnorm = std::sqrt(gnorm);
    double rel;
    if (gnorm == 0.0) {
      rel = std::abs(slope(random_dir)) < 1e-6 ? 0.0 : 1.0;
    } else {
      const Tensor along = unit(g);
      const double e1 = std::abs(slope(along) - dot(along));
      const double e2 = std::abs(slope(random_dir) - dot(random_dir));
      rel = std::max(e1, e2) / gnorm;
    }
    ++report.checked;
    if (!(rel < opt.tolerance)) ++report.failed;
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_array = arrays[a].first;
    }
  }
  return report;
}

std::vector<CheckResult> run_self_checks(const ModelConfig& model, const SRConfig& sr, const ModelParams* sr_params,
                                         std::uint64_t seed) {
  std::vector<CheckResult> out;
  out.push_back(check_census(model));
  out.push_back(check_trilinear(seed));
  out.push_back(check_gradients(model, seed));
  std::optional<ModelParams> fresh;
  if (sr_params == nullptr) {
    InitOptions init;
    init.seed = seed;
    init.zero_output_projections = false;
    fresh = init_params(model, init);
    sr_params = &*fresh;
  }
  out.push_back(check_timestep_free(*sr_params, seed));
  out.push_back(check_local_global(*sr_params, sr, seed));
  out.push_back(check_frozen_audio(*sr_params, sr, seed));
  return out;
}

}  // namespace avdit

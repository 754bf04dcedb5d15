#include "avdit/params.hpp"

#include <cstring>

#include "avdit/error.hpp"
#include "avdit/rng.hpp"

namespace avdit {

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each_array([&](const std::string&, const Tensor& t, ParamCategory) { n += t.size(); });
  return n;
}

namespace {

BlockWeights make_block(const ModelConfig& c) {
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto ff = static_cast<std::size_t>(c.d_ff);
  return {Tensor::vector(d, 1.0f), Tensor::matrix(d, 3 * d), Tensor::matrix(d, d),
          Tensor::vector(d, 1.0f), Tensor::matrix(d, 2 * ff), Tensor::matrix(ff, d)};
}

}  // namespace

ModelParams init_params(const ModelConfig& config, const InitOptions& options) {
  config.validate();
  const auto d = static_cast<std::size_t>(config.d_model);
  const std::size_t pd = config.video_patch_dim();
  const auto ca = static_cast<std::size_t>(config.audio_channels);

  ModelParams p;
  p.config = config;
  p.text_embedding = Tensor::matrix(static_cast<std::size_t>(config.vocab_size), d);
  p.video_in = {Tensor::matrix(pd, d), Tensor::vector(d)};
  p.audio_in = {Tensor::matrix(ca, d), Tensor::vector(d)};
  p.video_out_norm = Tensor::vector(d, 1.0f);
  p.audio_out_norm = Tensor::vector(d, 1.0f);
  p.video_out = {Tensor::matrix(d, pd), Tensor::vector(pd)};
  p.audio_out = {Tensor::matrix(d, ca), Tensor::vector(ca)};
  p.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (int l = 0; l < config.n_layers; ++l) {
    auto& layer = p.layers[static_cast<std::size_t>(l)];
    layer.banks.assign(config.is_boundary(l) ? kNumModalities : 1, make_block(config));
    layer.head_gates = Tensor::vector(static_cast<std::size_t>(config.n_heads), options.gate_init);
  }

  // Each array draws from its own stream so adding arrays never shifts others.
  std::uint64_t stream = 0;
  p.for_each_array([&](const std::string& name, Tensor& t, ParamCategory cat) {
    ++stream;
    if (cat == ParamCategory::Gate) return;
    const bool is_gain = name.ends_with("norm");
    const bool is_bias = name.ends_with(".bias");
    if (is_gain || is_bias) return;
    const bool output_proj = name.ends_with("attn_out") || name.ends_with("mlp_out") || name == "io.video.out.weight" ||
                             name == "io.audio.out.weight";
    if (output_proj && options.zero_output_projections) return;
    const Tensor noise = gaussian_noise(t.shape(), options.seed, stream);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = options.weight_std * noise[i];
  });
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  z.for_each_array([](const std::string&, Tensor& t, ParamCategory) { t.fill(0.0f); });
  return z;
}

bool identical(const ModelParams& a, const ModelParams& b) {
  if (!(a.config == b.config)) return false;
  std::vector<const Tensor*> ta;
  a.for_each_array([&](const std::string&, const Tensor& t, ParamCategory) { ta.push_back(&t); });
  std::size_t i = 0;
  bool same = true;
  b.for_each_array([&](const std::string&, const Tensor& t, ParamCategory) {
    if (i >= ta.size() || !ta[i]->identical(t)) same = false;
    ++i;
  });
  return same && i == ta.size();
}

ParamCensus param_census(const ModelParams& params, const ModelConfig& config) {
  if (params.layers.size() != static_cast<std::size_t>(config.n_layers)) {
    throw ConfigError("param_census: params have " + std::to_string(params.layers.size()) + " layers, config " +
                      std::to_string(config.n_layers));
  }
  ParamCensus c;
  params.for_each_array([&](const std::string&, const Tensor& t, ParamCategory cat) {
    switch (cat) {
      case ParamCategory::BoundaryModalitySpecific: c.boundary_modality_specific += t.size(); break;
      case ParamCategory::SharedMiddle: c.shared_middle += t.size(); break;
      case ParamCategory::Gate: c.gates += t.size(); break;
      case ParamCategory::IoProjection: c.io_projections += t.size(); break;
    }
  });
  for (const auto& layer : params.layers) {
    if (layer.routed()) {
      ++c.boundary_layers;
    } else {
      ++c.shared_middle_layers;
    }
  }
  return c;
}

}  // namespace avdit

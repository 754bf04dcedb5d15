#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avdit/model_config.hpp"
#include "avdit/sequence.hpp"
#include "avdit/tensor.hpp"

namespace avdit {

// Weights of one pre-norm block that can be routed per modality.
struct BlockWeights {
  Tensor attn_norm;  // [d]
  Tensor qkv;        // [d, 3d]
  Tensor attn_out;   // [d, d]
  Tensor mlp_norm;   // [d]
  Tensor mlp_in;     // [d, 2*d_ff]: gate half then value half
  Tensor mlp_out;    // [d_ff, d]

  bool present() const { return !qkv.empty(); }
};

// One layer. Shared layers hold a single bank; boundary layers hold one bank
// per Modality (indexed by index_of). Head gates are per layer and shared
// across modalities.
struct LayerParams {
  std::vector<BlockWeights> banks;
  Tensor head_gates;  // [n_heads]

  bool routed() const { return banks.size() > 1; }
  std::size_t n_heads() const { return head_gates.size(); }
};

enum class ParamCategory { BoundaryModalitySpecific, SharedMiddle, Gate, IoProjection };

struct ModelParams {
  ModelConfig config;
  Tensor text_embedding;  // [vocab, d]
  Projection video_in;    // [patch_dim, d] + bias; also embeds the reference image
  Projection audio_in;    // [audio_channels, d] + bias
  Tensor video_out_norm;  // [d]
  Tensor audio_out_norm;  // [d]
  Projection video_out;   // [d, patch_dim] + bias
  Projection audio_out;   // [d, audio_channels] + bias
  std::vector<LayerParams> layers;

  // Visits every stored array exactly once as (name, tensor, category).
  template <class F>
  void for_each_array(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each_array(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const;

 private:
  template <class Self, class F>
  static void visit(Self& p, F& f) {
    const auto io = ParamCategory::IoProjection;
    f(std::string("io.text.embedding"), p.text_embedding, io);
    f(std::string("io.video.in.weight"), p.video_in.weight, io);
    f(std::string("io.video.in.bias"), p.video_in.bias, io);
    f(std::string("io.audio.in.weight"), p.audio_in.weight, io);
    f(std::string("io.audio.in.bias"), p.audio_in.bias, io);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      auto& layer = p.layers[l];
      const std::string prefix = "layers." + std::to_string(l) + ".";
      f(prefix + "head_gates", layer.head_gates, ParamCategory::Gate);
      const bool routed = layer.routed();
      const auto cat = routed ? ParamCategory::BoundaryModalitySpecific : ParamCategory::SharedMiddle;
      for (std::size_t b = 0; b < layer.banks.size(); ++b) {
        auto& w = layer.banks[b];
        const std::string bank =
            prefix + (routed ? std::string(to_string(kAllModalities.at(b))) : std::string("shared")) + ".";
        f(bank + "attn_norm", w.attn_norm, cat);
        f(bank + "qkv", w.qkv, cat);
        f(bank + "attn_out", w.attn_out, cat);
        f(bank + "mlp_norm", w.mlp_norm, cat);
        f(bank + "mlp_in", w.mlp_in, cat);
        f(bank + "mlp_out", w.mlp_out, cat);
      }
    }
    f(std::string("io.video.out_norm"), p.video_out_norm, io);
    f(std::string("io.audio.out_norm"), p.audio_out_norm, io);
    f(std::string("io.video.out.weight"), p.video_out.weight, io);
    f(std::string("io.video.out.bias"), p.video_out.bias, io);
    f(std::string("io.audio.out.weight"), p.audio_out.weight, io);
    f(std::string("io.audio.out.bias"), p.audio_out.bias, io);
  }
};

struct InitOptions {
  std::uint64_t seed = 0;
  float weight_std = 0.02f;
  float gate_init = 2.0f;
  // Residual-branch and final output projections start at zero.
  bool zero_output_projections = true;
};

// Allocates the sandwich layout for config and fills it per options.
ModelParams init_params(const ModelConfig& config, const InitOptions& options = {});
// Same structure as p with every value zero.
ModelParams zeros_like(const ModelParams& p);
bool identical(const ModelParams& a, const ModelParams& b);

struct ParamCensus {
  std::size_t boundary_modality_specific = 0;
  std::size_t shared_middle = 0;
  std::size_t io_projections = 0;
  std::size_t gates = 0;
  int boundary_layers = 0;
  int shared_middle_layers = 0;

  std::size_t total() const { return boundary_modality_specific + shared_middle + io_projections + gates; }
};

ParamCensus param_census(const ModelParams& params, const ModelConfig& config);

}  // namespace avdit

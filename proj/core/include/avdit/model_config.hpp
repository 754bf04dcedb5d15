#pragma once

#include <array>
#include <cstddef>

#include "avdit/sequence.hpp"

namespace avdit {

// Shape of the single-stream backbone. The first and last n_boundary layers
// carry one parameter bank per modality; the layers in between are shared.
struct ModelConfig {
  int n_layers = 8;
  int n_boundary = 2;
  int n_heads = 4;
  int d_model = 128;
  int d_ff = 384;
  int vocab_size = 32;
  int video_channels = 4;
  int audio_channels = 4;
  PatchSize patch{1, 2, 2};
  std::array<int, 3> axis_split{8, 4, 4};  // rotary pairs for (t, y, x)
  float rope_base = kRopeBase;
  float norm_eps = 1e-6f;

  int d_head() const { return d_model / n_heads; }
  int n_shared() const { return n_layers - 2 * n_boundary; }
  std::size_t video_patch_dim() const { return patch_dim(patch, static_cast<std::size_t>(video_channels)); }
  bool is_boundary(int layer) const { return layer < n_boundary || layer >= n_layers - n_boundary; }

  // Throws ConfigError naming the first violated invariant.
  void validate() const;

  // Desk-scale default: L=8, B=2, H=4, d_model=128, d_ff=384.
  static ModelConfig toy();
  // 40 layers with 4 modality-specific layers at each end (32 shared), at
  // the given width.
  static ModelConfig reference_depth(int d_model = 32, int n_heads = 2);
  // (1/2, 1/4, 1/4) of the head_dim/2 rotation pairs for (t, y, x).
  static std::array<int, 3> default_axis_split(int d_head);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace avdit

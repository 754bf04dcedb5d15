#include "avdit/model_config.hpp"

#include <string>

#include "avdit/error.hpp"

namespace avdit {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (n_boundary < 0) fail("n_boundary must be >= 0");
  if (2 * n_boundary >= n_layers) {
    fail("2*n_boundary (" + std::to_string(2 * n_boundary) + ") must be < n_layers (" + std::to_string(n_layers) + ")");
  }
  if (n_heads < 1) fail("n_heads must be >= 1");
  if (d_model < 1 || d_model % n_heads != 0) fail("d_model must be a positive multiple of n_heads");
  if (d_head() % 2 != 0) fail("d_head must be even for rotary embedding");
  if (d_ff < 1) fail("d_ff must be >= 1");
  if (vocab_size < 1) fail("vocab_size must be >= 1");
  if (video_channels < 1 || audio_channels < 1) fail("channel counts must be >= 1");
  if (patch.t < 1 || patch.h < 1 || patch.w < 1) fail("patch sizes must be >= 1");
  if (axis_split[0] < 0 || axis_split[1] < 0 || axis_split[2] < 0 ||
      axis_split[0] + axis_split[1] + axis_split[2] != d_head() / 2) {
    fail("axis_split must partition d_head/2 = " + std::to_string(d_head() / 2) + " rotation pairs");
  }
  if (!(rope_base > 1.0f)) fail("rope_base must be > 1");
  if (!(norm_eps > 0.0f)) fail("norm_eps must be > 0");
}

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::reference_depth(int d_model, int n_heads) {
  ModelConfig c;
  c.n_layers = 40;
  c.n_boundary = 4;
  c.d_model = d_model;
  c.n_heads = n_heads;
  c.d_ff = 2 * d_model;
  c.axis_split = default_axis_split(c.d_head());
  return c;
}

std::array<int, 3> ModelConfig::default_axis_split(int d_head) {
  const int pairs = d_head / 2;
  const int t = pairs / 2;
  const int y = (pairs - t) / 2;
  return {t, y, pairs - t - y};
}

}  // namespace avdit

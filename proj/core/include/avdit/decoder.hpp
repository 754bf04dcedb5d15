#pragma once

#include <span>

#include "avdit/sequence.hpp"
#include "avdit/tensor.hpp"

namespace avdit {

// Stand-in video decoder: a learned linear map from each latent cell to a
// factors.t x factors.h x factors.w x 3 pixel block.
struct DecoderParams {
  PatchSize factors{4, 8, 8};
  Tensor weight;  // [channels, block * 3]
  Tensor bias;    // [block * 3]

  std::size_t channels() const { return weight.rows(); }
  std::size_t block_values() const { return factors.cells() * 3; }

  static DecoderParams zeros(std::size_t channels, PatchSize factors = {4, 8, 8});
};

// Pixels [t*ft, h*fh, w*fw, 3], clamped to [0, 1].
Tensor decode_latent(const LatentGrid& video, const DecoderParams& dec);

// Least-squares fit of the decoder on paired (latent, pixels) examples.
DecoderParams fit_decoder(std::span<const LatentGrid> latents, std::span<const Tensor> pixels, PatchSize factors);

double mean_squared_error(const Tensor& a, const Tensor& b);

}  // namespace avdit

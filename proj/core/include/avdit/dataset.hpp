#pragma once

#include <cstdint>
#include <vector>

#include "avdit/rng.hpp"
#include "avdit/sampler.hpp"

namespace avdit {

// Procedural audio-video clips: a colored square moving across a flat
// background, with an audio envelope that follows the square's position.
// The prompt names the color and the direction of motion.
struct ToyDatasetConfig {
  GridShape grid{4, 8, 8};
  std::size_t video_channels = 4;
  std::size_t audio_channels = 4;
  std::size_t audio_frames_per_video_frame = 4;

  std::size_t audio_frames() const { return grid.t * audio_frames_per_video_frame; }
};

inline constexpr int kToyColors = 4;
inline constexpr int kToyDirections = 4;
// Vocabulary: ids 1..4 colors, 5..8 directions.
inline constexpr int kToyVocabUsed = 9;

struct ToyClip {
  int color = 0;
  int direction = 0;  // 0 right, 1 left, 2 down, 3 up
  int start_y = 0;
  int start_x = 0;
};

ToyClip draw_toy_clip(const ToyDatasetConfig& cfg, CounterRng& rng);
std::vector<int> toy_prompt(int color, int direction);

// Latent of the clip; matches encode_pixels(render_toy_pixels(...)) up to
// rounding.
LatentGrid toy_video_latent(const ToyDatasetConfig& cfg, const ToyClip& clip);
AudioLatent toy_audio_latent(const ToyDatasetConfig& cfg, const ToyClip& clip);
DataSample toy_sample(const ToyDatasetConfig& cfg, const ToyClip& clip);
DataSample draw_toy_sample(const ToyDatasetConfig& cfg, CounterRng& rng);

// Pixel rendering [t*ft, h*fh, w*fw, 3] in [0,1] and the paired linear
// encoder (block average then fixed color map).
Tensor render_toy_pixels(const ToyDatasetConfig& cfg, const ToyClip& clip, PatchSize factors);
LatentGrid encode_pixels(const Tensor& pixels, PatchSize factors, std::size_t channels);

}  // namespace avdit

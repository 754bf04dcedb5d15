#include "avdit/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "avdit/error.hpp"

namespace avdit {

namespace {

using Rgb = std::array<float, 3>;

constexpr std::array<Rgb, kToyColors> kPalette = {{
    {0.9f, 0.2f, 0.2f},
    {0.2f, 0.85f, 0.3f},
    {0.25f, 0.3f, 0.95f},
    {0.95f, 0.85f, 0.2f},
}};
constexpr Rgb kBackground = {0.15f, 0.15f, 0.2f};

std::size_t block_extent(std::size_t n) { return std::max<std::size_t>(1, n / 4); }
int speed(std::size_t n) { return std::max(1, static_cast<int>(n / 8)); }

int wrap(int v, std::size_t n) {
  const int m = static_cast<int>(n);
  return ((v % m) + m) % m;
}

// Top-left corner of the square at frame f.
std::pair<int, int> square_at(const ToyDatasetConfig& cfg, const ToyClip& clip, std::size_t f) {
  const int fi = static_cast<int>(f);
  int y = clip.start_y, x = clip.start_x;
  switch (clip.direction) {
    case 0: x += fi * speed(cfg.grid.w); break;
    case 1: x -= fi * speed(cfg.grid.w); break;
    case 2: y += fi * speed(cfg.grid.h); break;
    default: y -= fi * speed(cfg.grid.h); break;
  }
  return {wrap(y, cfg.grid.h), wrap(x, cfg.grid.w)};
}

bool covered(const ToyDatasetConfig& cfg, const ToyClip& clip, std::size_t f, std::size_t y, std::size_t x) {
  const auto [sy, sx] = square_at(cfg, clip, f);
  const std::size_t dy = static_cast<std::size_t>(wrap(static_cast<int>(y) - sy, cfg.grid.h));
  const std::size_t dx = static_cast<std::size_t>(wrap(static_cast<int>(x) - sx, cfg.grid.w));
  return dy < block_extent(cfg.grid.h) && dx < block_extent(cfg.grid.w);
}

void encode_rgb(const Rgb& rgb, float* z, std::size_t channels) {
  for (std::size_t c = 0; c < channels; ++c) {
    const float v = c < 3 ? rgb[c] : (rgb[0] + rgb[1] + rgb[2]) / 3.0f;
    z[c] = 2.0f * v - 1.0f;
  }
}

}  // namespace

ToyClip draw_toy_clip(const ToyDatasetConfig& cfg, CounterRng& rng) {
  ToyClip clip;
  clip.color = static_cast<int>(rng.below(kToyColors));
  clip.direction = static_cast<int>(rng.below(kToyDirections));
  clip.start_y = static_cast<int>(rng.below(cfg.grid.h));
  clip.start_x = static_cast<int>(rng.below(cfg.grid.w));
  return clip;
}

std::vector<int> toy_prompt(int color, int direction) { return {1 + color, 1 + kToyColors + direction}; }

LatentGrid toy_video_latent(const ToyDatasetConfig& cfg, const ToyClip& clip) {
  LatentGrid latent(cfg.grid, cfg.video_channels);
  for (std::size_t f = 0; f < cfg.grid.t; ++f)
    for (std::size_t y = 0; y < cfg.grid.h; ++y)
      for (std::size_t x = 0; x < cfg.grid.w; ++x) {
        const Rgb& rgb = covered(cfg, clip, f, y, x) ? kPalette[static_cast<std::size_t>(clip.color)] : kBackground;
        encode_rgb(rgb, &latent.at(f, y, x, 0), cfg.video_channels);
      }
  return latent;
}

AudioLatent toy_audio_latent(const ToyDatasetConfig& cfg, const ToyClip& clip) {
  AudioLatent audio(cfg.audio_frames(), cfg.audio_channels);
  const bool horizontal = clip.direction < 2;
  const double extent = static_cast<double>(horizontal ? cfg.grid.w : cfg.grid.h);
  const double phase = clip.color * std::numbers::pi / 4.0;
  for (std::size_t f = 0; f < cfg.audio_frames(); ++f) {
    const std::size_t video_frame = f / cfg.audio_frames_per_video_frame;
    const auto [sy, sx] = square_at(cfg, clip, video_frame);
    const double envelope = 0.25 + 0.75 * static_cast<double>(horizontal ? sx : sy) / std::max(1.0, extent - 1.0);
    for (std::size_t c = 0; c < cfg.audio_channels; ++c) {
      const double osc = std::sin(2.0 * std::numbers::pi * static_cast<double>((c + 1) * f) / 8.0 + phase);
      audio.frames(f, c) = static_cast<float>(envelope * osc);
    }
  }
  return audio;
}

DataSample toy_sample(const ToyDatasetConfig& cfg, const ToyClip& clip) {
  DataSample s;
  s.data = {toy_video_latent(cfg, clip), toy_audio_latent(cfg, clip)};
  s.cond.text_ids = toy_prompt(clip.color, clip.direction);
  return s;
}

DataSample draw_toy_sample(const ToyDatasetConfig& cfg, CounterRng& rng) { return toy_sample(cfg, draw_toy_clip(cfg, rng)); }

Tensor render_toy_pixels(const ToyDatasetConfig& cfg, const ToyClip& clip, PatchSize factors) {
  const GridShape g = cfg.grid;
  Tensor pixels({g.t * factors.t, g.h * factors.h, g.w * factors.w, 3});
  const std::size_t H = g.h * factors.h, W = g.w * factors.w;
  for (std::size_t pt = 0; pt < g.t * factors.t; ++pt)
    for (std::size_t py = 0; py < H; ++py)
      for (std::size_t px = 0; px < W; ++px) {
        const bool on = covered(cfg, clip, pt / factors.t, py / factors.h, px / factors.w);
        const Rgb& rgb = on ? kPalette[static_cast<std::size_t>(clip.color)] : kBackground;
        float* dst = pixels.data() + ((pt * H + py) * W + px) * 3;
        std::copy(rgb.begin(), rgb.end(), dst);
      }
  return pixels;
}

LatentGrid encode_pixels(const Tensor& pixels, PatchSize factors, std::size_t channels) {
  if (pixels.rank() != 4 || pixels.dim(3) != 3) {
    throw DimensionError("encode_pixels: expected [T,H,W,3], got " + shape_to_string(pixels.shape()));
  }
  const GridShape g = patch_grid({pixels.dim(0), pixels.dim(1), pixels.dim(2)}, factors);
  const std::size_t H = pixels.dim(1), W = pixels.dim(2);
  LatentGrid latent(g, channels);
  const float inv = 1.0f / static_cast<float>(factors.cells());
  for (std::size_t t = 0; t < g.t; ++t)
    for (std::size_t y = 0; y < g.h; ++y)
      for (std::size_t x = 0; x < g.w; ++x) {
        Rgb mean{0, 0, 0};
        for (std::size_t a = 0; a < factors.t; ++a)
          for (std::size_t b = 0; b < factors.h; ++b)
            for (std::size_t c = 0; c < factors.w; ++c) {
              const float* p = pixels.data() + (((t * factors.t + a) * H + y * factors.h + b) * W + x * factors.w + c) * 3;
              for (int k = 0; k < 3; ++k) mean[static_cast<std::size_t>(k)] += p[k];
            }
        for (auto& m : mean) m *= inv;
        encode_rgb(mean, &latent.at(t, y, x, 0), channels);
      }
  return latent;
}

}  // namespace avdit

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "avdit/tensor.hpp"

namespace avdit {

// Block order inside a packed sequence follows the enumerator order.
enum class Modality : std::uint8_t { Text = 0, RefImage = 1, Video = 2, Audio = 3 };

inline constexpr std::size_t kNumModalities = 4;
inline constexpr std::array<Modality, kNumModalities> kAllModalities = {Modality::Text, Modality::RefImage,
                                                                         Modality::Video, Modality::Audio};

std::string_view to_string(Modality m);
inline std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }

// Token position in latent units: (time, row, column).
struct Coord {
  int t = 0;
  int y = 0;
  int x = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

using PatchSize = GridShape;

// x * weight + bias; an empty bias means none.
struct Projection {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out] or empty

  static Projection identity(std::size_t n);
  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }
  Tensor apply(const Tensor& x) const;
};

// Tokens of one modality together with their coordinates.
struct TokenBlock {
  Tensor feats;  // [n, d]
  std::vector<Coord> coords;

  std::size_t size() const { return coords.size(); }
};

// The single packed sequence consumed by the backbone.
struct TokenSequence {
  Tensor feats;  // [n, d_model]
  std::vector<Modality> tags;
  std::vector<Coord> pos;

  std::size_t size() const { return tags.size(); }
  std::size_t d_model() const { return feats.cols(); }
  // Half-open token range occupied by one modality (empty when absent).
  std::pair<std::size_t, std::size_t> range(Modality m) const;
  std::size_t count(Modality m) const;
};

std::size_t patch_dim(PatchSize patch, std::size_t channels);
GridShape patch_grid(GridShape latent, PatchSize patch);

// Raw flattened patches [n_patches, p_t*p_h*p_w*c] in row-major (t, y, x)
// patch order plus their patch-grid coordinates.
TokenBlock extract_patches(const LatentGrid& latent, PatchSize patch);
// Inverse of extract_patches; every patch coordinate must appear once.
LatentGrid assemble_patches(const Tensor& patches, std::span<const Coord> coords, PatchSize patch, GridShape grid,
                            std::size_t channels);

TokenBlock patchify_video(const LatentGrid& latent, PatchSize patch, const Projection& proj);
LatentGrid unpatchify_video(const Tensor& tokens, std::span<const Coord> coords, PatchSize patch, GridShape grid,
                            std::size_t channels, const Projection& proj_out);

// Reference image latent: video-style patches placed at time -1 with no
// spatial coordinate.
TokenBlock embed_ref_image(const LatentGrid& latent, PatchSize patch, const Projection& proj);

TokenBlock embed_text(std::span<const int> ids, const Tensor& table);
TokenBlock embed_audio(const AudioLatent& audio, const Projection& proj);

// Concatenates blocks as Text | RefImage | Video | Audio. Any block may be
// empty; non-empty blocks must agree on feature width.
TokenSequence pack_sequence(const TokenBlock& text, const TokenBlock& ref_image, const TokenBlock& video,
                            const TokenBlock& audio);

TokenBlock unpack_modality(const TokenSequence& seq, Modality tag);

// Per-token rotation angles for 3-axis rotary embedding.
struct RopeTable {
  std::size_t n_tokens = 0;
  std::size_t n_pairs = 0;  // head_dim / 2
  std::vector<float> cos;   // [n_tokens * n_pairs]
  std::vector<float> sin;
};

inline constexpr float kRopeBase = 10000.0f;

// axis_split gives the number of rotation pairs assigned to (t, y, x).
RopeTable rope_table(std::span<const Coord> pos, std::size_t head_dim, const std::array<int, 3>& axis_split,
                     float base = kRopeBase);
RopeTable rope_table(const TokenSequence& seq, std::size_t head_dim, const std::array<int, 3>& axis_split,
                     float base = kRopeBase);

// Rotates every head of x [n, n_heads * head_dim] in place. inverse applies
// the transpose rotation (used by the backward pass).
void apply_rope(Tensor& x, const RopeTable& rope, std::size_t n_heads, bool inverse = false);

}  // namespace avdit

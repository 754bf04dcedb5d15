#include "avdit/sequence.hpp"

#include <cmath>
#include <string>

#include "avdit/error.hpp"
#include "avdit/numerics.hpp"

namespace avdit {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Text: return "text";
    case Modality::RefImage: return "ref_image";
    case Modality::Video: return "video";
    case Modality::Audio: return "audio";
  }
  return "unknown";
}

Projection Projection::identity(std::size_t n) { return {Tensor::identity(n), Tensor()}; }

Tensor Projection::apply(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  if (!bias.empty()) {
    if (bias.size() != y.cols()) throw DimensionError("Projection: bias length does not match output width");
    for (std::size_t i = 0; i < y.rows(); ++i) {
      float* yi = y.data() + i * y.cols();
      for (std::size_t j = 0; j < y.cols(); ++j) yi[j] += bias[j];
    }
  }
  return y;
}

std::pair<std::size_t, std::size_t> TokenSequence::range(Modality m) const {
  std::size_t begin = 0;
  while (begin < tags.size() && tags[begin] != m) ++begin;
  std::size_t end = begin;
  while (end < tags.size() && tags[end] == m) ++end;
  if (begin == tags.size()) return {0, 0};
  return {begin, end};
}

std::size_t TokenSequence::count(Modality m) const {
  auto [b, e] = range(m);
  return e - b;
}

std::size_t patch_dim(PatchSize patch, std::size_t channels) { return patch.cells() * channels; }

GridShape patch_grid(GridShape latent, PatchSize patch) {
  if (patch.t == 0 || patch.h == 0 || patch.w == 0) throw PatchError("patch sizes must be >= 1");
  auto check = [](std::size_t extent, std::size_t p, const char* axis) {
    if (extent % p != 0) {
      throw PatchError(std::string("patch size ") + std::to_string(p) + " does not divide latent extent " +
                       std::to_string(extent) + " on axis " + axis);
    }
  };
  check(latent.t, patch.t, "t");
  check(latent.h, patch.h, "h");
  check(latent.w, patch.w, "w");
  return {latent.t / patch.t, latent.h / patch.h, latent.w / patch.w};
}

TokenBlock extract_patches(const LatentGrid& latent, PatchSize patch) {
  const GridShape g = patch_grid(latent.grid(), patch);
  const std::size_t c = latent.channels();
  const std::size_t pd = patch_dim(patch, c);
  TokenBlock out{Tensor::matrix(g.cells(), pd), {}};
  out.coords.reserve(g.cells());
  std::size_t tok = 0;
  for (std::size_t gt = 0; gt < g.t; ++gt)
    for (std::size_t gy = 0; gy < g.h; ++gy)
      for (std::size_t gx = 0; gx < g.w; ++gx, ++tok) {
        out.coords.push_back({static_cast<int>(gt), static_cast<int>(gy), static_cast<int>(gx)});
        float* dst = out.feats.data() + tok * pd;
        for (std::size_t pt = 0; pt < patch.t; ++pt)
          for (std::size_t py = 0; py < patch.h; ++py)
            for (std::size_t px = 0; px < patch.w; ++px)
              for (std::size_t ci = 0; ci < c; ++ci)
                *dst++ = latent.at(gt * patch.t + pt, gy * patch.h + py, gx * patch.w + px, ci);
      }
  return out;
}

LatentGrid assemble_patches(const Tensor& patches, std::span<const Coord> coords, PatchSize patch, GridShape grid,
                            std::size_t channels) {
  const GridShape g = patch_grid(grid, patch);
  const std::size_t pd = patch_dim(patch, channels);
  if (patches.rank() != 2 || patches.cols() != pd || patches.rows() != coords.size()) {
    throw DimensionError("assemble_patches: expected [" + std::to_string(coords.size()) + "," + std::to_string(pd) +
                         "] patches, got " + shape_to_string(patches.shape()));
  }
  if (coords.size() != g.cells()) {
    throw CoverageError("unpatchify: " + std::to_string(coords.size()) + " tokens for " + std::to_string(g.cells()) +
                        " patch coordinates");
  }
  std::vector<char> seen(g.cells(), 0);
  LatentGrid out(grid, channels);
  for (std::size_t tok = 0; tok < coords.size(); ++tok) {
    const Coord& cd = coords[tok];
    if (cd.t < 0 || cd.y < 0 || cd.x < 0 || static_cast<std::size_t>(cd.t) >= g.t ||
        static_cast<std::size_t>(cd.y) >= g.h || static_cast<std::size_t>(cd.x) >= g.w) {
      throw CoverageError("unpatchify: coordinate out of patch grid");
    }
    const std::size_t cell = (static_cast<std::size_t>(cd.t) * g.h + cd.y) * g.w + cd.x;
    if (seen[cell]) {
      throw CoverageError("unpatchify: duplicate coordinate (" + std::to_string(cd.t) + "," + std::to_string(cd.y) +
                          "," + std::to_string(cd.x) + ")");
    }
    seen[cell] = 1;
    const float* src = patches.data() + tok * pd;
    for (std::size_t pt = 0; pt < patch.t; ++pt)
      for (std::size_t py = 0; py < patch.h; ++py)
        for (std::size_t px = 0; px < patch.w; ++px)
          for (std::size_t ci = 0; ci < channels; ++ci)
            out.at(cd.t * patch.t + pt, cd.y * patch.h + py, cd.x * patch.w + px, ci) = *src++;
  }
  return out;
}

TokenBlock patchify_video(const LatentGrid& latent, PatchSize patch, const Projection& proj) {
  TokenBlock raw = extract_patches(latent, patch);
  if (proj.in_dim() != raw.feats.cols()) {
    throw DimensionError("patchify_video: projection expects width " + std::to_string(proj.in_dim()) +
                         ", patches have " + std::to_string(raw.feats.cols()));
  }
  raw.feats = proj.apply(raw.feats);
  return raw;
}

LatentGrid unpatchify_video(const Tensor& tokens, std::span<const Coord> coords, PatchSize patch, GridShape grid,
                            std::size_t channels, const Projection& proj_out) {
  return assemble_patches(proj_out.apply(tokens), coords, patch, grid, channels);
}

TokenBlock embed_ref_image(const LatentGrid& latent, PatchSize patch, const Projection& proj) {
  TokenBlock block = patchify_video(latent, patch, proj);
  for (auto& c : block.coords) c = {-1, 0, 0};
  return block;
}

TokenBlock embed_text(std::span<const int> ids, const Tensor& table) {
  const std::size_t d = table.cols();
  TokenBlock out{Tensor::matrix(ids.size(), d), {}};
  out.coords.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.rows()) {
      throw VocabularyError("embed_text: token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                            std::to_string(table.rows()));
    }
    auto src = table.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.feats.row(i).begin());
    out.coords.push_back({static_cast<int>(i), 0, 0});
  }
  return out;
}

TokenBlock embed_audio(const AudioLatent& audio, const Projection& proj) {
  TokenBlock out{proj.apply(audio.frames), {}};
  out.coords.reserve(audio.n_frames());
  for (std::size_t i = 0; i < audio.n_frames(); ++i) out.coords.push_back({static_cast<int>(i), 0, 0});
  return out;
}

TokenSequence pack_sequence(const TokenBlock& text, const TokenBlock& ref_image, const TokenBlock& video,
                            const TokenBlock& audio) {
  const std::array<const TokenBlock*, kNumModalities> blocks = {&text, &ref_image, &video, &audio};
  std::size_t d = 0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const TokenBlock& blk = *blocks[b];
    if (blk.feats.rows() != blk.coords.size()) {
      throw PackingError("pack_sequence: " + std::string(to_string(kAllModalities[b])) +
                         " block has mismatched feature rows and coordinates");
    }
    if (blk.size() == 0) continue;
    if (d == 0) {
      d = blk.feats.cols();
    } else if (blk.feats.cols() != d) {
      throw PackingError("pack_sequence: " + std::string(to_string(kAllModalities[b])) + " block has width " +
                         std::to_string(blk.feats.cols()) + ", expected " + std::to_string(d));
    }
    n += blk.size();
  }
  TokenSequence seq;
  seq.feats = Tensor::matrix(n, d);
  seq.tags.reserve(n);
  seq.pos.reserve(n);
  std::size_t row = 0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const TokenBlock& blk = *blocks[b];
    if (blk.size() == 0) continue;
    std::copy(blk.feats.values().begin(), blk.feats.values().end(), seq.feats.data() + row * d);
    seq.tags.insert(seq.tags.end(), blk.size(), kAllModalities[b]);
    seq.pos.insert(seq.pos.end(), blk.coords.begin(), blk.coords.end());
    row += blk.size();
  }
  return seq;
}

TokenBlock unpack_modality(const TokenSequence& seq, Modality tag) {
  auto [b, e] = seq.range(tag);
  const std::size_t d = seq.d_model();
  TokenBlock out{Tensor::matrix(e - b, d), {}};
  std::copy(seq.feats.data() + b * d, seq.feats.data() + e * d, out.feats.data());
  out.coords.assign(seq.pos.begin() + static_cast<std::ptrdiff_t>(b), seq.pos.begin() + static_cast<std::ptrdiff_t>(e));
  return out;
}

RopeTable rope_table(std::span<const Coord> pos, std::size_t head_dim, const std::array<int, 3>& axis_split,
                     float base) {
  if (head_dim % 2 != 0) throw ConfigError("rope_table: head_dim must be even, got " + std::to_string(head_dim));
  const std::size_t pairs = head_dim / 2;
  if (axis_split[0] < 0 || axis_split[1] < 0 || axis_split[2] < 0 ||
      static_cast<std::size_t>(axis_split[0] + axis_split[1] + axis_split[2]) != pairs) {
    throw ConfigError("rope_table: axis_split (" + std::to_string(axis_split[0]) + "," +
                      std::to_string(axis_split[1]) + "," + std::to_string(axis_split[2]) + ") must sum to " +
                      std::to_string(pairs));
  }
  // Per pair: owning axis and inverse frequency.
  std::vector<int> pair_axis(pairs);
  std::vector<double> inv_freq(pairs);
  std::size_t p = 0;
  for (int axis = 0; axis < 3; ++axis) {
    const int n_axis = axis_split[axis];
    for (int j = 0; j < n_axis; ++j, ++p) {
      pair_axis[p] = axis;
      inv_freq[p] = std::pow(static_cast<double>(base), -2.0 * j / (2.0 * n_axis));
    }
  }
  RopeTable table{pos.size(), pairs, std::vector<float>(pos.size() * pairs), std::vector<float>(pos.size() * pairs)};
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const std::array<int, 3> c = {pos[i].t, pos[i].y, pos[i].x};
    for (std::size_t q = 0; q < pairs; ++q) {
      const double angle = static_cast<double>(c[pair_axis[q]]) * inv_freq[q];
      table.cos[i * pairs + q] = static_cast<float>(std::cos(angle));
      table.sin[i * pairs + q] = static_cast<float>(std::sin(angle));
    }
  }
  return table;
}

RopeTable rope_table(const TokenSequence& seq, std::size_t head_dim, const std::array<int, 3>& axis_split,
                     float base) {
  return rope_table(seq.pos, head_dim, axis_split, base);
}

void apply_rope(Tensor& x, const RopeTable& rope, std::size_t n_heads, bool inverse) {
  const std::size_t head_dim = rope.n_pairs * 2;
  if (x.rank() != 2 || x.rows() != rope.n_tokens || x.cols() != n_heads * head_dim) {
    throw DimensionError("apply_rope: tensor " + shape_to_string(x.shape()) + " does not match rope table for " +
                         std::to_string(rope.n_tokens) + " tokens x " + std::to_string(n_heads) + " heads x " +
                         std::to_string(head_dim));
  }
  const float sign = inverse ? -1.0f : 1.0f;
  for (std::size_t i = 0; i < rope.n_tokens; ++i) {
    const float* cs = rope.cos.data() + i * rope.n_pairs;
    const float* sn = rope.sin.data() + i * rope.n_pairs;
    float* row = x.data() + i * x.cols();
    for (std::size_t h = 0; h < n_heads; ++h) {
      float* v = row + h * head_dim;
      for (std::size_t q = 0; q < rope.n_pairs; ++q) {
        const float a = v[2 * q], b = v[2 * q + 1];
        const float s = sign * sn[q];
        v[2 * q] = a * cs[q] - b * s;
        v[2 * q + 1] = a * s + b * cs[q];
      }
    }
  }
}

}  // namespace avdit

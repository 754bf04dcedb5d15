#pragma once

// Brute-force reference implementations used as test oracles. Everything
// here is written from the definitions with scalar loops in double and
// shares no numeric code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "avdit/params.hpp"
#include "avdit/sampler.hpp"

namespace oracle {

using avdit::Coord;
using avdit::GridShape;
using avdit::LatentGrid;
using avdit::Modality;
using avdit::Tensor;

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<double>(a(i, p)) * b(p, j);
      c(i, j) = static_cast<float>(s);
    }
  return c;
}

inline std::vector<double> softmax(const std::vector<double>& z) {
  double m = -INFINITY;
  for (double v : z) m = std::max(m, v);
  std::vector<double> e(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += e[i] = std::exp(z[i] - m);
  for (auto& v : e) v /= s;
  return e;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }

// Source coordinate of output index i under align-corners.
inline double align_corners(std::size_t i, std::size_t n_out, std::size_t n_in) {
  if (n_out == 1) return (static_cast<double>(n_in) - 1.0) / 2.0;
  return static_cast<double>(i) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
}

// Eight-corner trilinear blend at a fractional source position.
inline double trilinear_at(const LatentGrid& g, double t, double y, double x, std::size_t c) {
  double acc = 0.0;
  for (std::size_t it = 0; it < g.t(); ++it)
    for (std::size_t iy = 0; iy < g.h(); ++iy)
      for (std::size_t ix = 0; ix < g.w(); ++ix) {
        // Tent weights: non-zero only for the (up to) 8 surrounding cells.
        const double wt = std::max(0.0, 1.0 - std::abs(t - static_cast<double>(it)));
        const double wy = std::max(0.0, 1.0 - std::abs(y - static_cast<double>(iy)));
        const double wx = std::max(0.0, 1.0 - std::abs(x - static_cast<double>(ix)));
        acc += wt * wy * wx * g.at(it, iy, ix, c);
      }
  return acc;
}

inline LatentGrid trilinear(const LatentGrid& src, GridShape target) {
  LatentGrid out(target, src.channels());
  for (std::size_t t = 0; t < target.t; ++t)
    for (std::size_t y = 0; y < target.h; ++y)
      for (std::size_t x = 0; x < target.w; ++x)
        for (std::size_t c = 0; c < src.channels(); ++c)
          out.at(t, y, x, c) = static_cast<float>(trilinear_at(src, align_corners(t, target.t, src.t()),
                                                               align_corners(y, target.h, src.h()),
                                                               align_corners(x, target.w, src.w()), c));
  return out;
}

inline bool window_allows(const Coord& a, const Coord& b, const std::array<int, 3>& w) {
  return std::abs(a.t - b.t) <= w[0] && std::abs(a.y - b.y) <= w[1] && std::abs(a.x - b.x) <= w[2];
}

// Rotation angle of pair q (within a head) for a token at pos.
inline double rope_angle(const Coord& pos, std::size_t q, const std::array<int, 3>& split, double base) {
  int axis = 0;
  std::size_t j = q;
  while (j >= static_cast<std::size_t>(split[axis])) j -= static_cast<std::size_t>(split[axis++]);
  const int coord = axis == 0 ? pos.t : axis == 1 ? pos.y : pos.x;
  return coord * std::pow(base, -2.0 * static_cast<double>(j) / (2.0 * split[axis]));
}

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

// Double-precision mirror of ModelParams keyed by array name.
struct RefArray {
  avdit::Shape shape;
  Vec v;
  double operator()(std::size_t r, std::size_t c) const { return v[r * shape[1] + c]; }
};

struct RefModel {
  avdit::ModelConfig cfg;
  std::map<std::string, RefArray> a;

  explicit RefModel(const avdit::ModelParams& p) : cfg(p.config) {
    p.for_each_array([&](const std::string& name, const Tensor& t, avdit::ParamCategory) {
      a[name] = {t.shape(), Vec(t.values().begin(), t.values().end())};
    });
  }
  const RefArray& at(const std::string& n) const { return a.at(n); }
};

inline const char* bank_name(Modality m) {
  switch (m) {
    case Modality::Text: return "text";
    case Modality::RefImage: return "ref_image";
    case Modality::Video: return "video";
    case Modality::Audio: return "audio";
  }
  return "";
}

inline Vec affine(const Vec& x, const RefArray& w, const RefArray* b) {
  const std::size_t in = w.shape[0], out = w.shape[1];
  Vec y(out, 0.0);
  for (std::size_t j = 0; j < out; ++j) {
    double s = b ? b->v[j] : 0.0;
    for (std::size_t i = 0; i < in; ++i) s += x[i] * w(i, j);
    y[j] = s;
  }
  return y;
}

inline Vec rms(const Vec& x, const RefArray& g, double eps) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double r = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + eps);
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * r * g.v[i];
  return y;
}

// Patch contents flattened in (pt, py, px, c) order, patches in row-major
// (t, y, x) order.
inline Mat raw_patches(const LatentGrid& g, GridShape p) {
  Mat out;
  for (std::size_t gt = 0; gt < g.t() / p.t; ++gt)
    for (std::size_t gy = 0; gy < g.h() / p.h; ++gy)
      for (std::size_t gx = 0; gx < g.w() / p.w; ++gx) {
        Vec row;
        for (std::size_t a = 0; a < p.t; ++a)
          for (std::size_t b = 0; b < p.h; ++b)
            for (std::size_t c = 0; c < p.w; ++c)
              for (std::size_t ch = 0; ch < g.channels(); ++ch)
                row.push_back(g.at(gt * p.t + a, gy * p.h + b, gx * p.w + c, ch));
        out.push_back(row);
      }
  return out;
}

struct RefTokens {
  Mat x;
  std::vector<Modality> tag;
  std::vector<Coord> pos;
};

inline RefTokens ref_embed(const RefModel& m, const avdit::Conditioning& cond, const avdit::JointLatent& x) {
  RefTokens t;
  const auto& emb = m.at("io.text.embedding");
  for (std::size_t i = 0; i < cond.text_ids.size(); ++i) {
    const auto id = static_cast<std::size_t>(cond.text_ids[i]);
    t.x.emplace_back(emb.v.begin() + static_cast<long>(id * emb.shape[1]),
                     emb.v.begin() + static_cast<long>((id + 1) * emb.shape[1]));
    t.tag.push_back(Modality::Text);
    t.pos.push_back({static_cast<int>(i), 0, 0});
  }
  const auto& vw = m.at("io.video.in.weight");
  const auto& vb = m.at("io.video.in.bias");
  if (cond.ref_image) {
    for (const auto& row : raw_patches(*cond.ref_image, m.cfg.patch)) {
      t.x.push_back(affine(row, vw, &vb));
      t.tag.push_back(Modality::RefImage);
      t.pos.push_back({-1, 0, 0});
    }
  }
  const Mat vp = raw_patches(x.video, m.cfg.patch);
  const GridShape pg{x.video.t() / m.cfg.patch.t, x.video.h() / m.cfg.patch.h, x.video.w() / m.cfg.patch.w};
  for (std::size_t i = 0; i < vp.size(); ++i) {
    t.x.push_back(affine(vp[i], vw, &vb));
    t.tag.push_back(Modality::Video);
    t.pos.push_back({static_cast<int>(i / (pg.h * pg.w)), static_cast<int>((i / pg.w) % pg.h),
                     static_cast<int>(i % pg.w)});
  }
  for (std::size_t f = 0; f < x.audio.n_frames(); ++f) {
    Vec row(x.audio.channels());
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = x.audio.frames(f, c);
    t.x.push_back(affine(row, m.at("io.audio.in.weight"), &m.at("io.audio.in.bias")));
    t.tag.push_back(Modality::Audio);
    t.pos.push_back({static_cast<int>(f), 0, 0});
  }
  return t;
}

// One pre-norm block with per-token banks; bank(i) returns the name prefix
// of token i's weights.
template <class BankFn>
Mat ref_block(const RefModel& m, const Mat& x, const std::vector<Coord>& pos, const RefArray& gates, BankFn bank,
              const std::vector<std::vector<bool>>* allowed = nullptr) {
  const std::size_t n = x.size(), d = x[0].size(), H = gates.v.size(), dh = d / H;
  const double eps = m.cfg.norm_eps;
  Mat q(n), k(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string b = bank(i);
    const Vec qkv = affine(rms(x[i], m.at(b + "attn_norm"), eps), m.at(b + "qkv"), nullptr);
    q[i].assign(qkv.begin(), qkv.begin() + static_cast<long>(d));
    k[i].assign(qkv.begin() + static_cast<long>(d), qkv.begin() + static_cast<long>(2 * d));
    v[i].assign(qkv.begin() + static_cast<long>(2 * d), qkv.end());
    for (Vec* u : {&q[i], &k[i]}) {
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t p = 0; p < dh / 2; ++p) {
          const double ang = rope_angle(pos[i], p, m.cfg.axis_split, m.cfg.rope_base);
          double& a0 = (*u)[h * dh + 2 * p];
          double& a1 = (*u)[h * dh + 2 * p + 1];
          const double r0 = a0 * std::cos(ang) - a1 * std::sin(ang);
          const double r1 = a0 * std::sin(ang) + a1 * std::cos(ang);
          a0 = r0;
          a1 = r1;
        }
    }
  }
  Mat out(n, Vec(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    Vec gated(d, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      Vec logits;
      std::vector<std::size_t> keys;
      for (std::size_t j = 0; j < n; ++j) {
        if (allowed && !(*allowed)[i][j]) continue;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q[i][h * dh + c] * k[j][h * dh + c];
        logits.push_back(s / std::sqrt(static_cast<double>(dh)));
        keys.push_back(j);
      }
      const Vec p = softmax(logits);
      const double g = sigmoid(gates.v[h]);
      for (std::size_t jj = 0; jj < keys.size(); ++jj)
        for (std::size_t c = 0; c < dh; ++c) gated[h * dh + c] += g * p[jj] * v[keys[jj]][h * dh + c];
    }
    const std::string b = bank(i);
    const Vec att = affine(gated, m.at(b + "attn_out"), nullptr);
    Vec x1(d);
    for (std::size_t c = 0; c < d; ++c) x1[c] = x[i][c] + att[c];
    const Vec pre = affine(rms(x1, m.at(b + "mlp_norm"), eps), m.at(b + "mlp_in"), nullptr);
    const std::size_t ff = pre.size() / 2;
    Vec act(ff);
    for (std::size_t j = 0; j < ff; ++j) act[j] = silu(pre[j]) * pre[ff + j];
    const Vec mlp = affine(act, m.at(b + "mlp_out"), nullptr);
    for (std::size_t c = 0; c < d; ++c) out[i][c] = x1[c] + mlp[c];
  }
  return out;
}

struct RefVelocity {
  Mat video;  // per video token, flattened patch
  Mat audio;  // per audio frame
};

inline RefVelocity ref_forward(const RefModel& m, const avdit::Conditioning& cond, const avdit::JointLatent& x) {
  RefTokens t = ref_embed(m, cond, x);
  const int L = m.cfg.n_layers;
  for (int l = 0; l < L; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    const bool routed = m.cfg.is_boundary(l);
    t.x = ref_block(m, t.x, t.pos, m.at(pre + "head_gates"), [&](std::size_t i) {
      return pre + (routed ? bank_name(t.tag[i]) : "shared") + std::string(".");
    });
  }
  RefVelocity out;
  for (std::size_t i = 0; i < t.x.size(); ++i) {
    if (t.tag[i] == Modality::Video) {
      out.video.push_back(affine(rms(t.x[i], m.at("io.video.out_norm"), m.cfg.norm_eps),
                                 m.at("io.video.out.weight"), &m.at("io.video.out.bias")));
    } else if (t.tag[i] == Modality::Audio) {
      out.audio.push_back(affine(rms(t.x[i], m.at("io.audio.out_norm"), m.cfg.norm_eps),
                                 m.at("io.audio.out.weight"), &m.at("io.audio.out.bias")));
    }
  }
  return out;
}

// Mean squared velocity error over all video and audio elements, averaged
// over the batch.
inline double ref_flow_loss(const RefModel& m, const avdit::FlowBatch& batch) {
  double total = 0.0;
  for (const auto& s : batch.samples) {
    const RefVelocity v = ref_forward(m, s.cond, s.x_t);
    const Mat tv = raw_patches(s.velocity.video, m.cfg.patch);
    double se = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < tv.size(); ++i)
      for (std::size_t c = 0; c < tv[i].size(); ++c, ++count) se += std::pow(v.video[i][c] - tv[i][c], 2);
    for (std::size_t f = 0; f < v.audio.size(); ++f)
      for (std::size_t c = 0; c < v.audio[f].size(); ++c, ++count)
        se += std::pow(v.audio[f][c] - s.velocity.audio.frames(f, c), 2);
    total += se / static_cast<double>(count);
  }
  return total / static_cast<double>(batch.samples.size());
}

}  // namespace oracle

#include "avdit/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "avdit/error.hpp"

namespace avdit {

DecoderParams DecoderParams::zeros(std::size_t channels, PatchSize factors) {
  DecoderParams d;
  d.factors = factors;
  d.weight = Tensor::matrix(channels, factors.cells() * 3);
  d.bias = Tensor::vector(factors.cells() * 3);
  return d;
}

Tensor decode_latent(const LatentGrid& video, const DecoderParams& dec) {
  const std::size_t c = video.channels();
  if (dec.weight.rank() != 2 || dec.weight.rows() != c || dec.weight.cols() != dec.block_values() ||
      dec.bias.size() != dec.block_values()) {
    throw DimensionError("decode_latent: decoder " + shape_to_string(dec.weight.shape()) + " does not fit a " +
                         std::to_string(c) + "-channel latent with factors " + to_string(dec.factors));
  }
  const PatchSize f = dec.factors;
  const std::size_t T = video.t() * f.t, H = video.h() * f.h, W = video.w() * f.w;
  Tensor pixels({T, H, W, 3});
  std::vector<float> block(dec.block_values());
  for (std::size_t t = 0; t < video.t(); ++t)
    for (std::size_t y = 0; y < video.h(); ++y)
      for (std::size_t x = 0; x < video.w(); ++x) {
        std::copy(dec.bias.data(), dec.bias.data() + block.size(), block.begin());
        for (std::size_t ci = 0; ci < c; ++ci) {
          const float z = video.at(t, y, x, ci);
          const float* w = dec.weight.data() + ci * block.size();
          for (std::size_t j = 0; j < block.size(); ++j) block[j] += z * w[j];
        }
        std::size_t j = 0;
        for (std::size_t a = 0; a < f.t; ++a)
          for (std::size_t b = 0; b < f.h; ++b)
            for (std::size_t e = 0; e < f.w; ++e) {
              float* dst = pixels.data() + (((t * f.t + a) * H + y * f.h + b) * W + x * f.w + e) * 3;
              for (int k = 0; k < 3; ++k, ++j) dst[k] = std::clamp(block[j], 0.0f, 1.0f);
            }
      }
  return pixels;
}

namespace {

// Solves a x = b in place for a small dense system (partial pivoting).
std::vector<double> solve(std::vector<double> a, std::vector<double> b, std::size_t n) {
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
    }
    if (std::fabs(a[piv * n + col]) < 1e-300) throw Error("fit_decoder: singular normal equations");
    if (piv != col) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[col * n + k], a[piv * n + k]);
      std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      for (std::size_t k = col; k < n; ++k) a[r * n + k] -= f * a[col * n + k];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i * n + k] * x[k];
    x[i] = s / a[i * n + i];
  }
  return x;
}

}  // namespace

DecoderParams fit_decoder(std::span<const LatentGrid> latents, std::span<const Tensor> pixels, PatchSize factors) {
  if (latents.empty() || latents.size() != pixels.size()) {
    throw DimensionError("fit_decoder: need matching non-empty latent and pixel sets");
  }
  const std::size_t c = latents[0].channels();
  const std::size_t m = c + 1;  // features plus constant
  const std::size_t nb = factors.cells() * 3;
  std::vector<double> gram(m * m, 0.0);
  std::vector<double> rhs(m * nb, 0.0);  // [m, nb]
  std::vector<double> feat(m);
  for (std::size_t s = 0; s < latents.size(); ++s) {
    const LatentGrid& z = latents[s];
    const Tensor& p = pixels[s];
    if (z.channels() != c || p.rank() != 4 || p.dim(0) != z.t() * factors.t || p.dim(1) != z.h() * factors.h ||
        p.dim(2) != z.w() * factors.w || p.dim(3) != 3) {
      throw DimensionError("fit_decoder: sample " + std::to_string(s) + " has inconsistent shapes");
    }
    const std::size_t H = p.dim(1), W = p.dim(2);
    for (std::size_t t = 0; t < z.t(); ++t)
      for (std::size_t y = 0; y < z.h(); ++y)
        for (std::size_t x = 0; x < z.w(); ++x) {
          for (std::size_t ci = 0; ci < c; ++ci) feat[ci] = z.at(t, y, x, ci);
          feat[c] = 1.0;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = 0; k < m; ++k) gram[i * m + k] += feat[i] * feat[k];
          std::size_t j = 0;
          for (std::size_t a = 0; a < factors.t; ++a)
            for (std::size_t b = 0; b < factors.h; ++b)
              for (std::size_t e = 0; e < factors.w; ++e) {
                const float* px =
                    p.data() + (((t * factors.t + a) * H + y * factors.h + b) * W + x * factors.w + e) * 3;
                for (int k = 0; k < 3; ++k, ++j)
                  for (std::size_t i = 0; i < m; ++i) rhs[i * nb + j] += feat[i] * px[k];
              }
        }
  }
  for (std::size_t i = 0; i < m; ++i) gram[i * m + i] += 1e-6;  // ridge
  DecoderParams dec = DecoderParams::zeros(c, factors);
  std::vector<double> b(m);
  for (std::size_t j = 0; j < nb; ++j) {
    for (std::size_t i = 0; i < m; ++i) b[i] = rhs[i * nb + j];
    const std::vector<double> theta = solve(gram, b, m);
    for (std::size_t ci = 0; ci < c; ++ci) dec.weight(ci, j) = static_cast<float>(theta[ci]);
    dec.bias[j] = static_cast<float>(theta[c]);
  }
  return dec;
}

double mean_squared_error(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mean_squared_error");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = static_cast<double>(a[i]) - b[i];
    s += e * e;
  }
  return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

}  // namespace avdit

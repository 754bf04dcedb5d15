#include "avdit/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "avdit/error.hpp"

namespace avdit {

namespace {

void require_matrix(const Tensor& t, const char* op, const char* name) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": " + name + " must be rank 2, got " + shape_to_string(t.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul", "a");
  require_matrix(b, "matmul", "b");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ, a" + shape_to_string(a.shape()) + " b" +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    float* ci = c.data() + i * n;
    const float* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = ai[p];
      if (av == 0.0f) continue;
      const float* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn", "a");
  require_matrix(b, "matmul_tn", "b");
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("matmul_tn: leading dimensions differ, a" + shape_to_string(a.shape()) + " b" +
                         shape_to_string(b.shape()));
  }
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  Tensor c = Tensor::matrix(m, n);
  for (std::size_t p = 0; p < k; ++p) {
    const float* ap = a.data() + p * m;
    const float* bp = b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const float av = ap[i];
      if (av == 0.0f) continue;
      float* ci = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt", "a");
  require_matrix(b, "matmul_nt", "b");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: trailing dimensions differ, a" + shape_to_string(a.shape()) + " b" +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor c = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const float* ai = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const float* bj = b.data() + j * k;
      float s = 0.0f;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c(i, j) = s;
    }
  }
  return c;
}

namespace {

Tensor softmax_impl(const Tensor& logits, const Tensor* bias) {
  require_matrix(logits, "softmax_rows", "logits");
  if (bias) require_same_shape(logits, *bias, "softmax_rows bias");
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  constexpr float neg_inf = -std::numeric_limits<float>::infinity();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    float* o = out.data() + i * n;
    const float* l = logits.data() + i * n;
    const float* b = bias ? bias->data() + i * n : nullptr;
    float mx = neg_inf;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = b ? l[j] + b[j] : l[j];
      mx = std::max(mx, o[j]);
    }
    if (mx == neg_inf) throw DegenerateRowError(i);
    float sum = 0.0f;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = o[j] == neg_inf ? 0.0f : std::exp(o[j] - mx);
      sum += o[j];
    }
    const float inv = 1.0f / sum;
    for (std::size_t j = 0; j < n; ++j) o[j] *= inv;
  }
  return out;
}

}  // namespace

Tensor softmax_rows(const Tensor& logits) { return softmax_impl(logits, nullptr); }

Tensor softmax_rows(const Tensor& logits, const Tensor& bias) { return softmax_impl(logits, &bias); }

Tensor rms_norm(const Tensor& x, const Tensor& gain, float eps) {
  require_matrix(x, "rms_norm", "x");
  if (gain.size() != x.dim(1)) {
    throw DimensionError("rms_norm: gain length " + std::to_string(gain.size()) + " does not match x" +
                         shape_to_string(x.shape()));
  }
  const std::size_t n = x.dim(0), d = x.dim(1);
  Tensor y = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const float* xi = x.data() + i * d;
    float ss = 0.0f;
    for (std::size_t j = 0; j < d; ++j) ss += xi[j] * xi[j];
    const float r = 1.0f / std::sqrt(ss / static_cast<float>(d) + eps);
    float* yi = y.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) yi[j] = xi[j] * r * gain[j];
  }
  return y;
}

namespace {

struct AxisSample {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

AxisSample axis_sample(std::size_t i, std::size_t n_src, std::size_t n_dst) {
  double s = n_dst == 1 ? (static_cast<double>(n_src) - 1.0) / 2.0
                        : static_cast<double>(i) * static_cast<double>(n_src - 1) / static_cast<double>(n_dst - 1);
  const auto lo = std::min(static_cast<std::size_t>(std::floor(s)), n_src - 1);
  const std::size_t hi = std::min(lo + 1, n_src - 1);
  return {lo, hi, s - static_cast<double>(lo)};
}

}  // namespace

LatentGrid trilinear_resample(const LatentGrid& src, GridShape target) {
  if (target.t == 0 || target.h == 0 || target.w == 0) {
    throw DimensionError("trilinear_resample: target extents must be >= 1, got " + to_string(target));
  }
  const std::size_t c = src.channels();
  LatentGrid out(target, c);
  for (std::size_t ti = 0; ti < target.t; ++ti) {
    const AxisSample at = axis_sample(ti, src.t(), target.t);
    for (std::size_t yi = 0; yi < target.h; ++yi) {
      const AxisSample ay = axis_sample(yi, src.h(), target.h);
      for (std::size_t xi = 0; xi < target.w; ++xi) {
        const AxisSample ax = axis_sample(xi, src.w(), target.w);
        for (std::size_t ci = 0; ci < c; ++ci) {
          auto lerp = [](double a, double b, double f) { return a + (b - a) * f; };
          auto plane = [&](std::size_t tt) {
            const double v0 = lerp(src.at(tt, ay.lo, ax.lo, ci), src.at(tt, ay.lo, ax.hi, ci), ax.frac);
            const double v1 = lerp(src.at(tt, ay.hi, ax.lo, ci), src.at(tt, ay.hi, ax.hi, ci), ax.frac);
            return lerp(v0, v1, ay.frac);
          };
          out.at(ti, yi, xi, ci) = static_cast<float>(lerp(plane(at.lo), plane(at.hi), at.frac));
        }
      }
    }
  }
  return out;
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

float silu(float x) { return x * sigmoid(x); }

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, float h) {
  if (!(h > 0.0f)) throw ConfigError("finite_diff_grad: step must be positive");
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float x0 = x[i];
    const float xp = x0 + h;
    const float xm = x0 - h;
    probe[i] = xp;
    const double fp = f(probe);
    probe[i] = xm;
    const double fm = f(probe);
    probe[i] = x0;
    g[i] = static_cast<float>((fp - fm) / (static_cast<double>(xp) - static_cast<double>(xm)));
  }
  return g;
}

}  // namespace avdit

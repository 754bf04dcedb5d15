#pragma once

#include <functional>

#include "avdit/tensor.hpp"

namespace avdit {

// c = a[m,k] * b[k,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// c = a^T * b for a[k,m], b[k,n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// c = a * b^T for a[m,k], b[n,k]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Row softmax with max subtraction. A -inf bias entry gives exactly zero
// weight; a row with no finite entry raises DegenerateRowError.
Tensor softmax_rows(const Tensor& logits);
Tensor softmax_rows(const Tensor& logits, const Tensor& bias);

inline constexpr float kDefaultNormEps = 1e-6f;

// y[i] = x[i] / sqrt(mean(x[i]^2) + eps) * gain
Tensor rms_norm(const Tensor& x, const Tensor& gain, float eps = kDefaultNormEps);

// Align-corners trilinear resampling over (t, h, w), channels independent.
LatentGrid trilinear_resample(const LatentGrid& src, GridShape target);

float sigmoid(float x);
float silu(float x);

using ScalarFn = std::function<double(const Tensor&)>;

// Central differences: g[i] = (f(x + h e_i) - f(x - h e_i)) / (2h).
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, float h = 1e-3f);

}  // namespace avdit

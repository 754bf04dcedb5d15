#include "avdit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "avdit/error.hpp"

namespace avdit {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("Tensor: shape " + shape_to_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0f;
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<float> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Tensor::from_rows: ragged rows");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(v));
}

std::size_t Tensor::cols() const {
  std::size_t c = 1;
  for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
  return c;
}

std::span<float> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return {data_.data() + r * c, c};
}

std::span<const float> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return {data_.data() + r * c, c};
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("reshape: " + shape_to_string(shape_) + " -> " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool Tensor::identical(const Tensor& other) const {
  return shape_ == other.shape_ &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "operator+");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "operator-");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(float s, const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.values()) v *= s;
  return out;
}

void axpy(float s, const Tensor& b, Tensor& a) {
  require_same_shape(a, b, "axpy");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

float max_abs(const Tensor& a) {
  float m = 0.0f;
  for (float v : a.values()) m = std::max(m, std::fabs(v));
  return m;
}

std::string to_string(const GridShape& g) {
  return std::to_string(g.t) + "x" + std::to_string(g.h) + "x" + std::to_string(g.w);
}

LatentGrid::LatentGrid(GridShape grid, std::size_t channels, float fill)
    : grid_(grid), channels_(channels), data_({grid.t, grid.h, grid.w, channels}, fill) {
  if (grid.t == 0 || grid.h == 0 || grid.w == 0 || channels == 0) {
    throw DimensionError("LatentGrid: extents must be >= 1, got " + to_string(grid) + "x" + std::to_string(channels));
  }
}

LatentGrid::LatentGrid(Tensor data) : data_(std::move(data)) {
  if (data_.rank() != 4) throw DimensionError("LatentGrid: expected rank-4 tensor, got " + shape_to_string(data_.shape()));
  grid_ = {data_.dim(0), data_.dim(1), data_.dim(2)};
  channels_ = data_.dim(3);
  if (grid_.cells() == 0 || channels_ == 0) throw DimensionError("LatentGrid: extents must be >= 1");
}

AudioLatent::AudioLatent(Tensor f) : frames(std::move(f)) {
  if (frames.rank() != 2 || frames.rows() == 0) {
    throw DimensionError("AudioLatent: expected [frames, channels] with frames >= 1, got " +
                         shape_to_string(frames.shape()));
  }
}

AudioLatent::AudioLatent(std::size_t n_frames, std::size_t channels, float fill)
    : AudioLatent(Tensor::matrix(n_frames, channels, fill)) {}

}  // namespace avdit

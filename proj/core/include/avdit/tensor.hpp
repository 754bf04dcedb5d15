#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace avdit {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major f32 array. Every public operation keeps
// shape_size(shape()) == size().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, float fill = 0.0f) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor vector(std::size_t n, float fill = 0.0f) { return Tensor({n}, fill); }
  static Tensor identity(std::size_t n);
  static Tensor from_rows(std::initializer_list<std::initializer_list<float>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // 2-D conveniences.
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const;

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<float> row(std::size_t r);
  std::span<const float> row(std::size_t r) const;

  // Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  void fill(float v);

  bool all_finite() const;
  // Bitwise equality of shape and values.
  bool identical(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Elementwise helpers used across modules.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(float s, const Tensor& a);
// a += s * b
void axpy(float s, const Tensor& b, Tensor& a);
float max_abs_diff(const Tensor& a, const Tensor& b);
float max_abs(const Tensor& a);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

struct GridShape {
  std::size_t t = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t cells() const { return t * h * w; }
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

std::string to_string(const GridShape& g);

// Video latent: time x height x width x channels.
class LatentGrid {
 public:
  LatentGrid() = default;
  LatentGrid(GridShape grid, std::size_t channels, float fill = 0.0f);
  // Takes a rank-4 tensor [t,h,w,c].
  explicit LatentGrid(Tensor data);

  GridShape grid() const { return grid_; }
  std::size_t t() const { return grid_.t; }
  std::size_t h() const { return grid_.h; }
  std::size_t w() const { return grid_.w; }
  std::size_t channels() const { return channels_; }

  const Tensor& tensor() const { return data_; }
  Tensor& tensor() { return data_; }

  std::size_t index(std::size_t ti, std::size_t yi, std::size_t xi, std::size_t ci) const {
    return ((ti * grid_.h + yi) * grid_.w + xi) * channels_ + ci;
  }
  float& at(std::size_t ti, std::size_t yi, std::size_t xi, std::size_t ci) {
    return data_[index(ti, yi, xi, ci)];
  }
  float at(std::size_t ti, std::size_t yi, std::size_t xi, std::size_t ci) const {
    return data_[index(ti, yi, xi, ci)];
  }

 private:
  GridShape grid_;
  std::size_t channels_ = 0;
  Tensor data_;
};

// Audio latent: frames x channels.
struct AudioLatent {
  Tensor frames;

  AudioLatent() = default;
  explicit AudioLatent(Tensor f);
  AudioLatent(std::size_t n_frames, std::size_t channels, float fill = 0.0f);

  std::size_t n_frames() const { return frames.rows(); }
  std::size_t channels() const { return frames.cols(); }
};

}  // namespace avdit

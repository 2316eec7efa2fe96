#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "uietl/error.hpp"
#include "uietl/image.hpp"

namespace uietl {

// Eigen's vectorised kernels peel loops by address alignment, so buffers fed
// to them must sit on a fixed boundary for results to be reproducible.
template <class T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

/// Dense row-major array. Activations use rank 3 (channels, height, width);
/// parameters use whatever rank their layer needs.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, T fill = T(0)) : shape_(std::move(shape)) {
    data_.assign(count(shape_), fill);
  }
  Tensor(int c, int h, int w, T fill = T(0)) : Tensor(std::vector<int>{c, h, w}, fill) {}

  static std::size_t count(const std::vector<int>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
  }

  const std::vector<int>& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int i) const noexcept { return shape_[static_cast<std::size_t>(i)]; }
  int channels() const noexcept { return shape_[0]; }
  int height() const noexcept { return shape_[1]; }
  int width() const noexcept { return shape_[2]; }
  int plane() const noexcept { return shape_[1] * shape_[2]; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  T* channel(int c) noexcept { return data_.data() + static_cast<std::size_t>(c) * plane(); }
  const T* channel(int c) const noexcept {
    return data_.data() + static_cast<std::size_t>(c) * plane();
  }
  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  AlignedVector<T>& storage() noexcept { return data_; }
  const AlignedVector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  T operator[](std::size_t i) const noexcept { return data_[i]; }
  T& at(int c, int y, int x) noexcept {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  T at(int c, int y, int x) const noexcept {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<int> shape_;
  AlignedVector<T> data_;
};

template <class T>
using MatrixR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<MatrixR<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const MatrixR<T>>;

// Views a (C, H, W) tensor as a C x (H*W) matrix.
template <class T>
MatMap<T> as_matrix(Tensor<T>& t, int rows) {
  return MatMap<T>(t.ptr(), rows, static_cast<Eigen::Index>(t.size() / rows));
}
template <class T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, int rows) {
  return ConstMatMap<T>(t.ptr(), rows, static_cast<Eigen::Index>(t.size() / rows));
}

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + ")";
}

template <class T>
Tensor<T> image_to_tensor(const BasicImage<T>& img) {
  Tensor<T> t(3, img.height(), img.width());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) t.at(c, y, x) = img.at(y, x, c);
  return t;
}

template <class T>
BasicImage<T> tensor_to_image(const Tensor<T>& t) {
  if (t.rank() != 3 || t.channels() != 3) throw ShapeError("tensor_to_image needs 3 channels");
  BasicImage<T> img(t.height(), t.width());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < t.height(); ++y)
      for (int x = 0; x < t.width(); ++x) img.at(y, x, c) = t.at(c, y, x);
  return img;
}

}  // namespace uietl

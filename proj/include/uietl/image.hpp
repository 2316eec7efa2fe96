#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uietl/error.hpp"
#include "uietl/rng.hpp"

namespace uietl {

/// H x W x 3 RGB image with interleaved channels, intensities in [0, 1].
///
/// The scalar type is a template parameter so that numerical checks can run
/// in double precision; the pipeline itself uses `Image` (32-bit floats).
template <class T>
class BasicImage {
 public:
  static constexpr int kChannels = 3;

  BasicImage() = default;
  BasicImage(int height, int width, T fill = T(0))
      : h_(height), w_(width), px_(static_cast<std::size_t>(height) * width * kChannels, fill) {
    if (height <= 0 || width <= 0) throw ShapeError("image dimensions must be positive");
  }

  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  std::size_t size() const noexcept { return px_.size(); }
  bool empty() const noexcept { return px_.empty(); }

  T& at(int y, int x, int c) noexcept { return px_[index(y, x, c)]; }
  T at(int y, int x, int c) const noexcept { return px_[index(y, x, c)]; }
  T& operator[](std::size_t i) noexcept { return px_[i]; }
  T operator[](std::size_t i) const noexcept { return px_[i]; }

  std::span<T> data() noexcept { return px_; }
  std::span<const T> data() const noexcept { return px_; }

  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * w_ + x) * kChannels + c;
  }

  bool same_shape(const BasicImage& o) const noexcept { return h_ == o.h_ && w_ == o.w_; }

  template <class U>
  BasicImage<U> cast() const {
    BasicImage<U> out(h_, w_);
    for (std::size_t i = 0; i < px_.size(); ++i) out[i] = static_cast<U>(px_[i]);
    return out;
  }

  bool operator==(const BasicImage&) const = default;

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<T> px_;
};

using Image = BasicImage<float>;

template <class T>
struct BasicImagePair {
  BasicImage<T> input;
  BasicImage<T> target;
};

using ImagePair = BasicImagePair<float>;

template <class T>
void require_same_shape(const BasicImage<T>& a, const BasicImage<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()));
  }
}

template <class T>
bool all_finite(const BasicImage<T>& img) {
  return std::all_of(img.data().begin(), img.data().end(), [](T v) { return std::isfinite(v); });
}

template <class T>
bool in_unit_range(const BasicImage<T>& img) {
  return std::all_of(img.data().begin(), img.data().end(),
                     [](T v) { return v >= T(0) && v <= T(1); });
}

template <class T>
void clamp_unit(BasicImage<T>& img) {
  for (T& v : img.data()) v = std::clamp(v, T(0), T(1));
}

/// (1 - t) * clean + t * degraded, componentwise.
template <class T>
BasicImage<T> linear_mix(const BasicImage<T>& clean, const BasicImage<T>& degraded, double t) {
  require_same_shape(clean, degraded, "linear_mix");
  if (!(t >= 0.0 && t <= 1.0)) throw RangeError("linear_mix: t must lie in [0, 1]");
  if (t == 0.0) return clean;
  if (t == 1.0) return degraded;
  BasicImage<T> out(clean.height(), clean.width());
  const T a = static_cast<T>(1.0 - t);
  const T b = static_cast<T>(t);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(a * clean[i] + b * degraded[i], T(0), T(1));
  }
  return out;
}

template <class T>
BasicImage<T> flip(const BasicImage<T>& img, bool horizontal, bool vertical) {
  if (!horizontal && !vertical) return img;
  BasicImage<T> out(img.height(), img.width());
  const int h = img.height(), w = img.width();
  for (int y = 0; y < h; ++y) {
    const int sy = vertical ? h - 1 - y : y;
    for (int x = 0; x < w; ++x) {
      const int sx = horizontal ? w - 1 - x : x;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

template <class T>
BasicImagePair<T> augment_flip(const BasicImagePair<T>& pair, bool horizontal, bool vertical) {
  return {flip(pair.input, horizontal, vertical), flip(pair.target, horizontal, vertical)};
}

template <class T>
BasicImage<T> crop(const BasicImage<T>& img, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || top + height > img.height() || left + width > img.width()) {
    throw RangeError("crop window outside image");
  }
  BasicImage<T> out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(top + y, left + x, c);
  return out;
}

struct PatchWindow {
  int top = 0;
  int left = 0;
};

/// Top-left corner of a size x size window, drawn uniformly on the 1-pixel grid.
inline PatchWindow patch_window(int height, int width, int size, std::uint64_t seed) {
  Rng rng(seed);
  PatchWindow win;
  win.top = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(height - size + 1)));
  win.left = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(width - size + 1)));
  return win;
}

/// Cuts the same square window from both members of a pair. `alignment` is the
/// network's total downsampling factor; only the size has to honour it.
template <class T>
BasicImagePair<T> extract_patch(const BasicImagePair<T>& pair, int size, std::uint64_t seed,
                                int alignment = 8) {
  require_same_shape(pair.input, pair.target, "extract_patch");
  if (size <= 0 || size > std::min(pair.input.height(), pair.input.width())) {
    throw RangeError("extract_patch: size " + std::to_string(size) + " exceeds image bounds");
  }
  if (alignment > 0 && size % alignment != 0) {
    throw AlignmentError("extract_patch: size " + std::to_string(size) +
                         " is not divisible by " + std::to_string(alignment));
  }
  const PatchWindow win = patch_window(pair.input.height(), pair.input.width(), size, seed);
  return {crop(pair.input, win.top, win.left, size, size),
          crop(pair.target, win.top, win.left, size, size)};
}

/// Bilinear resampling with half-pixel centres (the usual "align corners off"
/// convention), used before no-reference metrics.
template <class T>
BasicImage<T> resize_bilinear(const BasicImage<T>& img, int out_h, int out_w) {
  if (out_h == img.height() && out_w == img.width()) return img;
  BasicImage<T> out(out_h, out_w);
  const double sy = static_cast<double>(img.height()) / out_h;
  const double sx = static_cast<double>(img.width()) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    int y0 = std::min(static_cast<int>(fy), img.height() - 1);
    int y1 = std::min(y0 + 1, img.height() - 1);
    double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      int x0 = std::min(static_cast<int>(fx), img.width() - 1);
      int x1 = std::min(x0 + 1, img.width() - 1);
      double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        double top = (1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        double bot = (1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        out.at(y, x, c) = static_cast<T>((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

/// Reflect-pads bottom/right so both dimensions become multiples of `multiple`.
template <class T>
BasicImage<T> pad_to_multiple(const BasicImage<T>& img, int multiple) {
  const int h = (img.height() + multiple - 1) / multiple * multiple;
  const int w = (img.width() + multiple - 1) / multiple * multiple;
  if (h == img.height() && w == img.width()) return img;
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
  };
  BasicImage<T> out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = img.at(reflect(y, img.height()), reflect(x, img.width()), c);
  return out;
}

}  // namespace uietl

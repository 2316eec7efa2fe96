#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "uietl/image.hpp"
#include "uietl/rng.hpp"

namespace testsupport {

using uietl::BasicImage;
using uietl::BasicImagePair;

template <class T = float>
BasicImage<T> random_image(int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  uietl::Rng rng(seed);
  BasicImage<T> img(h, w);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<T>(uietl::uniform(rng, lo, hi));
  return img;
}

template <class T = float>
BasicImage<T> constant_image(int h, int w, double r, double g, double b) {
  BasicImage<T> img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = static_cast<T>(r);
      img.at(y, x, 1) = static_cast<T>(g);
      img.at(y, x, 2) = static_cast<T>(b);
    }
  return img;
}

// Pixel (y, x, c) holds a unique value derived from its coordinates.
template <class T = float>
BasicImage<T> coordinate_ramp(int h, int w) {
  BasicImage<T> img(h, w);
  const double n = static_cast<double>(h) * w * 3;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<T>(((y * w + x) * 3 + c) / n);
  return img;
}

// Smooth colourful scene: a few random sinusoids per channel, kept in [0.1, 0.9].
template <class T = float>
BasicImage<T> smooth_scene(int h, int w, std::uint64_t seed) {
  uietl::Rng rng(seed);
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::array<std::vector<Wave>, 3> waves;
  std::array<double, 3> base{};
  for (int c = 0; c < 3; ++c) {
    base[static_cast<std::size_t>(c)] = uietl::uniform(rng, 0.35, 0.65);
    for (int k = 0; k < 3; ++k)
      waves[static_cast<std::size_t>(c)].push_back({uietl::uniform(rng, 0.5, 3.0), uietl::uniform(rng, 0.5, 3.0),
                                                    uietl::uniform(rng, 0.0, 6.283), uietl::uniform(rng, 0.05, 0.12)});
  }
  BasicImage<T> img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = base[static_cast<std::size_t>(c)];
        for (const auto& wv : waves[static_cast<std::size_t>(c)])
          v += wv.amp * std::sin(6.283 * (wv.fy * y / h + wv.fx * x / w) + wv.phase);
        img.at(y, x, c) = static_cast<T>(std::clamp(v, 0.1, 0.9));
      }
  return img;
}

// Fixed underwater-style degradation: per-channel attenuation towards a
// blue-green veil (red fades most).
inline constexpr std::array<double, 3> kAttenuation = {0.6, 0.85, 0.9};
inline constexpr std::array<double, 3> kVeil = {0.1, 0.45, 0.55};

template <class T = float>
BasicImage<T> underwater(const BasicImage<T>& clean) {
  BasicImage<T> out = clean;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a = kAttenuation[i % 3];
    out[i] = static_cast<T>(a * clean[i] + (1.0 - a) * kVeil[i % 3]);
  }
  return out;
}

// 3x3 box blur with replicated borders.
template <class T = float>
BasicImage<T> box_blur(const BasicImage<T>& img) {
  BasicImage<T> out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            s += img.at(std::clamp(y + dy, 0, img.height() - 1), std::clamp(x + dx, 0, img.width() - 1), c);
        out.at(y, x, c) = static_cast<T>(s / 9.0);
      }
  return out;
}

/// {input = degraded, target = clean} training pairs.
template <class T = float>
std::vector<BasicImagePair<T>> underwater_pairs(int n, int side, std::uint64_t seed) {
  std::vector<BasicImagePair<T>> out;
  for (int i = 0; i < n; ++i) {
    auto clean = smooth_scene<T>(side, side, uietl::split_seed(seed, static_cast<std::uint64_t>(i)));
    out.push_back({underwater(clean), clean});
  }
  return out;
}

// Random-texture clean image and its blurred, washed-out version.
template <class T = float>
BasicImagePair<T> blur_pair(int side, std::uint64_t seed) {
  auto clean = random_image<T>(side, side, seed, 0.05, 0.95);
  auto degraded = box_blur(box_blur(clean));
  for (std::size_t i = 0; i < degraded.size(); ++i) degraded[i] = static_cast<T>(0.6 * degraded[i] + 0.2);
  return {clean, degraded};
}

}  // namespace testsupport

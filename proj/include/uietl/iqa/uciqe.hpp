#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "uietl/image.hpp"
#include "uietl/iqa/constants.hpp"

namespace uietl::iqa {

struct Lab {
  double l = 0, a = 0, b = 0;
};

inline double srgb_to_linear(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

/// sRGB (D65) to CIELab. XYZ is formed relative to the white point as
/// g + w0 (r - g) + w2 (b - g), which makes neutral greys land on a = b = 0
/// exactly.
inline Lab srgb_to_lab(double r, double g, double b) {
  // Rows of the sRGB -> XYZ matrix divided by the D65 white (row sums).
  static constexpr double kM[3][3] = {
      {0.4124564, 0.3575761, 0.1804375},
      {0.2126729, 0.7151522, 0.0721750},
      {0.0193339, 0.1191920, 0.9503041},
  };
  const double lr = srgb_to_linear(r), lg = srgb_to_linear(g), lb = srgb_to_linear(b);
  std::array<double, 3> xyz{};
  for (int i = 0; i < 3; ++i) {
    const double white = kM[i][0] + kM[i][1] + kM[i][2];
    xyz[i] = lg + (kM[i][0] / white) * (lr - lg) + (kM[i][2] / white) * (lb - lg);
  }
  auto f = [](double t) {
    constexpr double d = 6.0 / 29.0;
    return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
  };
  const double fx = f(xyz[0]), fy = f(xyz[1]), fz = f(xyz[2]);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

struct UciqeComponents {
  double chroma_sd = 0;
  double luminance_contrast = 0;
  double mean_saturation = 0;
  double value = 0;
};

/// Chroma spread, luminance contrast (mean of top 1% minus mean of bottom 1%)
/// and mean saturation (chroma / lightness), with Lab scaled by 1/100.
template <class T>
UciqeComponents uciqe_components(const BasicImage<T>& img) {
  const std::size_t n = static_cast<std::size_t>(img.height()) * img.width();
  std::vector<double> lum(n), chroma(n);
  double sat_sum = 0, c_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Lab lab = srgb_to_lab(img[3 * i], img[3 * i + 1], img[3 * i + 2]);
    lum[i] = lab.l / 100.0;
    chroma[i] = std::hypot(lab.a, lab.b) / 100.0;
    c_sum += chroma[i];
    if (lum[i] > 0) sat_sum += chroma[i] / lum[i];
  }
  UciqeComponents u;
  const double c_mean = c_sum / static_cast<double>(n);
  double var = 0;
  for (double c : chroma) var += (c - c_mean) * (c - c_mean);
  u.chroma_sd = std::sqrt(var / static_cast<double>(n));

  std::sort(lum.begin(), lum.end());
  const std::size_t tail = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(constants::kUciqeTail * static_cast<double>(n))));
  double lo = 0, hi = 0;
  for (std::size_t i = 0; i < tail; ++i) {
    lo += lum[i];
    hi += lum[n - 1 - i];
  }
  u.luminance_contrast = (hi - lo) / static_cast<double>(tail);
  u.mean_saturation = sat_sum / static_cast<double>(n);
  u.value = constants::kUciqeC1 * u.chroma_sd + constants::kUciqeC2 * u.luminance_contrast +
            constants::kUciqeC3 * u.mean_saturation;
  return u;
}

template <class T>
double uciqe(const BasicImage<T>& img) {
  return uciqe_components(img).value;
}

}  // namespace uietl::iqa

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "uietl/image.hpp"
#include "uietl/iqa/constants.hpp"

namespace uietl::iqa {

struct UiqmComponents {
  double uicm = 0;    // colourfulness
  double uism = 0;    // sharpness
  double uiconm = 0;  // contrast
  double value = 0;
};

namespace detail {

// Symmetric alpha-trimmed mean: drop ceil(a*K) smallest and floor(a*K) largest.
inline double trimmed_mean(std::vector<double> v, double alpha) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  const auto lo = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(k)));
  const auto hi = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(k)));
  double s = 0;
  for (std::size_t i = lo; i < k - hi; ++i) s += v[i];
  return s / static_cast<double>(k - lo - hi);
}

inline double spread_about(const std::vector<double>& v, double mu) {
  double s = 0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size());
}

// Sobel gradient magnitude with replicated borders.
inline std::vector<double> sobel_magnitude(const std::vector<double>& p, int h, int w) {
  auto at = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return p[static_cast<std::size_t>(y) * w + x];
  };
  std::vector<double> out(p.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
      out[static_cast<std::size_t>(y) * w + x] = std::hypot(gx, gy);
    }
  return out;
}

// EME = 2 / (k1 k2) * sum log(max / min) over full blocks; blocks with a zero
// extremum contribute nothing.
inline double eme(const std::vector<double>& p, int h, int w, int block) {
  const int k1 = w / block, k2 = h / block;
  double s = 0;
  for (int by = 0; by < k2; ++by)
    for (int bx = 0; bx < k1; ++bx) {
      double mn = INFINITY, mx = -INFINITY;
      for (int y = by * block; y < (by + 1) * block; ++y)
        for (int x = bx * block; x < (bx + 1) * block; ++x) {
          const double v = p[static_cast<std::size_t>(y) * w + x];
          mn = std::min(mn, v);
          mx = std::max(mx, v);
        }
      if (mn > 0 && mx > 0) s += std::log(mx / mn);
    }
  return 2.0 / (k1 * k2) * s;
}

}  // namespace detail

/// Colourfulness on the opponent planes RG = R - G, YB = (R + G) / 2 - B (0-255 scale).
template <class T>
double uicm(const BasicImage<T>& img) {
  const std::size_t n = static_cast<std::size_t>(img.height()) * img.width();
  std::vector<double> rg(n), yb(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = 255.0 * img[3 * i], g = 255.0 * img[3 * i + 1], b = 255.0 * img[3 * i + 2];
    rg[i] = r - g;
    yb[i] = 0.5 * (r + g) - b;
  }
  const double mrg = detail::trimmed_mean(rg, constants::kUicmTrim);
  const double myb = detail::trimmed_mean(yb, constants::kUicmTrim);
  const double s2 = detail::spread_about(rg, mrg) + detail::spread_about(yb, myb);
  return constants::kUicmMean * std::sqrt(mrg * mrg + myb * myb) + constants::kUicmSpread * std::sqrt(s2);
}

/// Sharpness: per channel, the Sobel magnitude (rescaled to peak 255) times the
/// channel itself, summarised with EME and weighted by luma coefficients.
template <class T>
double uism(const BasicImage<T>& img) {
  const int h = img.height(), w = img.width();
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> ch(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < ch.size(); ++i) ch[i] = 255.0 * img[3 * i + c];
    auto mag = detail::sobel_magnitude(ch, h, w);
    const double peak = *std::max_element(mag.begin(), mag.end());
    if (peak <= 0) continue;
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = mag[i] * (255.0 / peak) * ch[i];
    total += constants::kUismLambda[c] * detail::eme(mag, h, w, constants::kUiqmBlock);
  }
  return total;
}

/// Contrast: -1 / (k1 k2) * sum (range / sum) log(range / sum) over blocks,
/// with block extrema taken across all three channels.
template <class T>
double uiconm(const BasicImage<T>& img) {
  const int block = constants::kUiqmBlock;
  const int k1 = img.width() / block, k2 = img.height() / block;
  double s = 0;
  for (int by = 0; by < k2; ++by)
    for (int bx = 0; bx < k1; ++bx) {
      double mn = INFINITY, mx = -INFINITY;
      for (int y = by * block; y < (by + 1) * block; ++y)
        for (int x = bx * block; x < (bx + 1) * block; ++x)
          for (int c = 0; c < 3; ++c) {
            const double v = 255.0 * img.at(y, x, c);
            mn = std::min(mn, v);
            mx = std::max(mx, v);
          }
      const double top = mx - mn, bot = mx + mn;
      if (top > 0 && bot > 0) s += (top / bot) * std::log(top / bot);
    }
  return -s / (k1 * k2);
}

template <class T>
UiqmComponents uiqm_components(const BasicImage<T>& img) {
  if (std::min(img.height(), img.width()) < constants::kUiqmBlock)
    throw SizeError("uiqm: image smaller than one block");
  UiqmComponents c;
  c.uicm = uicm(img);
  c.uism = uism(img);
  c.uiconm = uiconm(img);
  c.value = constants::kUiqmC1 * c.uicm + constants::kUiqmC2 * c.uism + constants::kUiqmC3 * c.uiconm;
  return c;
}

template <class T>
double uiqm(const BasicImage<T>& img) {
  return uiqm_components(img).value;
}

}  // namespace uietl::iqa

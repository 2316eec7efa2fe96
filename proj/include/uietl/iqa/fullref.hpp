#pragma once

#include <cmath>
#include <vector>

#include "uietl/image.hpp"
#include "uietl/iqa/constants.hpp"

namespace uietl::iqa {

template <class T>
double mse(const BasicImage<T>& a, const BasicImage<T>& b) {
  require_same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

/// 10 log10(1 / MSE) for [0, 1] data, capped at 100 dB.
template <class T>
double psnr(const BasicImage<T>& pred, const BasicImage<T>& target) {
  const double m = mse(pred, target);
  if (m == 0.0) return constants::kPsnrCap;
  return std::min(constants::kPsnrCap, 10.0 * std::log10(1.0 / m));
}

template <class T>
std::vector<double> luminance(const BasicImage<T>& img) {
  std::vector<double> y(static_cast<std::size_t>(img.height()) * img.width());
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c)
      y[static_cast<std::size_t>(r) * img.width() + c] = constants::kLuma[0] * img.at(r, c, 0) +
                                                           constants::kLuma[1] * img.at(r, c, 1) +
                                                           constants::kLuma[2] * img.at(r, c, 2);
  return y;
}

inline std::vector<double> gaussian_kernel_1d(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double mid = (size - 1) / 2.0;
  double sum = 0;
  for (int i = 0; i < size; ++i) {
    k[i] = std::exp(-(i - mid) * (i - mid) / (2 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

namespace detail {

// Separable 'valid' filtering of an h x w plane.
inline std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace detail

/// Mean SSIM on the luminance channel over all fully-contained 11x11
/// Gaussian windows (sigma 1.5), dynamic range 1.
template <class T>
double ssim(const BasicImage<T>& pred, const BasicImage<T>& target) {
  require_same_shape(pred, target, "ssim");
  const int h = pred.height(), w = pred.width();
  if (std::min(h, w) < constants::kSsimWindow) throw SizeError("ssim: image smaller than the 11x11 window");
  const auto a = luminance(pred);
  const auto b = luminance(target);
  const std::size_t n = a.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto k = gaussian_kernel_1d(constants::kSsimWindow, constants::kSsimSigma);
  const auto mu_a = detail::filter_valid(a, h, w, k);
  const auto mu_b = detail::filter_valid(b, h, w, k);
  const auto s_aa = detail::filter_valid(aa, h, w, k);
  const auto s_bb = detail::filter_valid(bb, h, w, k);
  const auto s_ab = detail::filter_valid(ab, h, w, k);
  const double c1 = constants::kSsimK1 * constants::kSsimK1;
  const double c2 = constants::kSsimK2 * constants::kSsimK2;
  double sum = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = s_aa[i] - ma * ma, vb = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
    sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(mu_a.size());
}

}  // namespace uietl::iqa

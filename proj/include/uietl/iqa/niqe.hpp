#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "uietl/error.hpp"
#include "uietl/image.hpp"
#include "uietl/iqa/constants.hpp"

namespace uietl::iqa {

/// Multivariate Gaussian fitted to natural-scene-statistics patch features of
/// a pristine corpus. Scores are raw distances: lower means closer to the corpus.
struct NiqeModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  int patch_size = 16;
  int feature_dim() const { return static_cast<int>(mean.size()); }
};

struct NiqeOptions {
  int patch_size = 16;               // at full resolution; half at the second scale
  double sharpness_fraction = 0.75;  // fit keeps patches above this fraction of the sharpest
  double regularization = 1e-6;      // added to the covariance diagonal before inversion
};

namespace niqe_detail {

constexpr int kFeaturesPerScale = 18;

inline std::vector<double> gray_255(const auto& img) {
  std::vector<double> g(static_cast<std::size_t>(img.height()) * img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      g[static_cast<std::size_t>(y) * img.width() + x] =
          255.0 * (constants::kLuma[0] * img.at(y, x, 0) + constants::kLuma[1] * img.at(y, x, 1) +
                   constants::kLuma[2] * img.at(y, x, 2));
  return g;
}

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

// 7x7 Gaussian (sigma 7/6) local mean / deviation normalisation with
// replicated borders; returns MSCN coefficients and local deviations.
inline void mscn(const Plane& img, Plane& coeffs, Plane& sigma) {
  constexpr int r = 3;
  double k[2 * r + 1];
  double ks = 0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(i * i) / (2.0 * (7.0 / 6.0) * (7.0 / 6.0)));
    ks += k[i + r];
  }
  for (double& v : k) v /= ks;
  auto blur = [&](const std::vector<double>& src) {
    std::vector<double> tmp(src.size()), out(src.size());
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        double s = 0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * src[static_cast<std::size_t>(y) * img.w + std::clamp(x + i, 0, img.w - 1)];
        tmp[static_cast<std::size_t>(y) * img.w + x] = s;
      }
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        double s = 0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, img.h - 1)) * img.w + x];
        out[static_cast<std::size_t>(y) * img.w + x] = s;
      }
    return out;
  };
  std::vector<double> sq(img.v.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = img.v[i] * img.v[i];
  const auto mu = blur(img.v);
  const auto mu2 = blur(sq);
  coeffs = {img.h, img.w, std::vector<double>(img.v.size())};
  sigma = {img.h, img.w, std::vector<double>(img.v.size())};
  for (std::size_t i = 0; i < sq.size(); ++i) {
    sigma.v[i] = std::sqrt(std::abs(mu2[i] - mu[i] * mu[i]));
    coeffs.v[i] = (img.v[i] - mu[i]) / (sigma.v[i] + 1.0);
  }
}

struct GammaTable {
  std::vector<double> shape, ggd_ratio, aggd_ratio;
  GammaTable() {
    for (int i = 0; i <= 9800; ++i) {
      const double g = 0.2 + 0.001 * i;
      shape.push_back(g);
      const double g1 = std::tgamma(1 / g), g2 = std::tgamma(2 / g), g3 = std::tgamma(3 / g);
      ggd_ratio.push_back(g1 * g3 / (g2 * g2));
      aggd_ratio.push_back(g2 * g2 / (g1 * g3));
    }
  }
  static const GammaTable& get() {
    static const GammaTable t;
    return t;
  }
  static double nearest(const std::vector<double>& table, const std::vector<double>& shape, double target) {
    std::size_t best = 0;
    double err = INFINITY;
    for (std::size_t i = 0; i < table.size(); ++i) {
      const double e = std::abs(table[i] - target);
      if (e < err) {
        err = e;
        best = i;
      }
    }
    return shape[best];
  }
};

// Generalised Gaussian (shape, variance) by moment matching.
inline void fit_ggd(const std::vector<double>& x, double* out) {
  double s2 = 0, s1 = 0;
  for (double v : x) {
    s2 += v * v;
    s1 += std::abs(v);
  }
  s2 /= static_cast<double>(x.size());
  s1 /= static_cast<double>(x.size());
  const auto& t = GammaTable::get();
  out[0] = s1 > 0 ? GammaTable::nearest(t.ggd_ratio, t.shape, s2 / (s1 * s1)) : t.shape.back();
  out[1] = s2;
}

// Asymmetric generalised Gaussian (shape, mean, left var, right var).
inline void fit_aggd(const std::vector<double>& x, double* out) {
  double l2 = 0, r2 = 0, a1 = 0, a2 = 0;
  std::size_t nl = 0, nr = 0;
  for (double v : x) {
    if (v < 0) {
      l2 += v * v;
      ++nl;
    } else if (v > 0) {
      r2 += v * v;
      ++nr;
    }
    a1 += std::abs(v);
    a2 += v * v;
  }
  const double n = static_cast<double>(x.size());
  const double sl = nl ? std::sqrt(l2 / static_cast<double>(nl)) : 0.0;
  const double sr = nr ? std::sqrt(r2 / static_cast<double>(nr)) : 0.0;
  const auto& t = GammaTable::get();
  double alpha = t.shape.back();
  if (sl > 0 && sr > 0 && a2 > 0) {
    const double gh = sl / sr;
    const double rh = (a1 / n) * (a1 / n) / (a2 / n);
    const double big_r = rh * (gh * gh * gh + 1) * (gh + 1) / ((gh * gh + 1) * (gh * gh + 1));
    alpha = GammaTable::nearest(t.aggd_ratio, t.shape, big_r);
  }
  const double g1 = std::tgamma(1 / alpha), g2 = std::tgamma(2 / alpha), g3 = std::tgamma(3 / alpha);
  out[0] = alpha;
  out[1] = (sr - sl) * (g2 / g1) * std::sqrt(g1 / g3);
  out[2] = sl * sl;
  out[3] = sr * sr;
}

struct PatchFeatures {
  std::vector<double> features;  // 18 per scale
  double sharpness = 0;
};

inline void scale_features(const Plane& coeffs, int y0, int x0, int p, double* out) {
  std::vector<double> c;
  c.reserve(static_cast<std::size_t>(p) * p);
  for (int y = y0; y < y0 + p; ++y)
    for (int x = x0; x < x0 + p; ++x) c.push_back(coeffs.at(y, x));
  fit_ggd(c, out);
  static constexpr int kShift[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  for (int o = 0; o < 4; ++o) {
    std::vector<double> prod;
    for (int y = y0; y < y0 + p; ++y)
      for (int x = x0; x < x0 + p; ++x) {
        const int yy = y + kShift[o][0], xx = x + kShift[o][1];
        if (yy < y0 || yy >= y0 + p || xx < x0 || xx >= x0 + p) continue;
        prod.push_back(coeffs.at(y, x) * coeffs.at(yy, xx));
      }
    fit_aggd(prod, out + 2 + 4 * o);
  }
}

inline Plane half_scale(const Plane& p) {
  Plane out{p.h / 2, p.w / 2, {}};
  out.v.resize(static_cast<std::size_t>(out.h) * out.w);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x)
      out.v[static_cast<std::size_t>(y) * out.w + x] =
          0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y + 1, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x + 1));
  return out;
}

template <class T>
std::vector<PatchFeatures> patch_features(const BasicImage<T>& img, int patch) {
  if (patch < 4 || patch % 2 != 0) throw ConfigError("niqe: patch size must be even and >= 4");
  Plane full{img.height(), img.width(), gray_255(img)};
  const int py = full.h / patch, px = full.w / patch;
  if (py == 0 || px == 0) throw SizeError("niqe: image smaller than one patch");
  Plane c1, s1, c2, s2;
  mscn(full, c1, s1);
  // Filtering a flat plane leaves rounding noise far below this.
  double peak = 0;
  for (double v : c1.v) peak = std::max(peak, std::fabs(v));
  if (peak < 1e-6) throw DegenerateInputError("niqe: image has no local variation");
  mscn(half_scale(full), c2, s2);
  std::vector<PatchFeatures> out;
  for (int by = 0; by < py; ++by)
    for (int bx = 0; bx < px; ++bx) {
      PatchFeatures f;
      f.features.assign(2 * kFeaturesPerScale, 0.0);
      scale_features(c1, by * patch, bx * patch, patch, f.features.data());
      scale_features(c2, by * patch / 2, bx * patch / 2, patch / 2, f.features.data() + kFeaturesPerScale);
      double s = 0;
      for (int y = by * patch; y < (by + 1) * patch; ++y)
        for (int x = bx * patch; x < (bx + 1) * patch; ++x) s += s1.at(y, x);
      f.sharpness = s / (patch * patch);
      out.push_back(std::move(f));
    }
  return out;
}

inline void mean_cov(const std::vector<std::vector<double>>& rows, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
  const int d = static_cast<int>(rows.front().size());
  const int n = static_cast<int>(rows.size());
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rows[i][j];
  mean = m.colwise().mean();
  Eigen::MatrixXd centered = m.rowwise() - mean.transpose();
  cov = n > 1 ? Eigen::MatrixXd((centered.transpose() * centered) / (n - 1)) : Eigen::MatrixXd::Zero(d, d);
}

}  // namespace niqe_detail

/// Fits the pristine model on patches of at least 10 images, keeping patches
/// whose local sharpness exceeds a fraction of the sharpest patch.
template <class T>
NiqeModel niqe_fit(const std::vector<BasicImage<T>>& corpus, NiqeOptions opts = {}) {
  if (corpus.size() < 10) throw RangeError("niqe_fit: at least 10 corpus images required");
  std::vector<niqe_detail::PatchFeatures> all;
  for (const auto& img : corpus) {
    auto p = niqe_detail::patch_features(img, opts.patch_size);
    all.insert(all.end(), p.begin(), p.end());
  }
  double max_sharp = 0;
  for (const auto& p : all) max_sharp = std::max(max_sharp, p.sharpness);
  std::vector<std::vector<double>> rows;
  for (const auto& p : all)
    if (p.sharpness > opts.sharpness_fraction * max_sharp) rows.push_back(p.features);
  if (rows.size() < 2) throw DegenerateInputError("niqe_fit: too few textured patches");
  NiqeModel m;
  m.patch_size = opts.patch_size;
  niqe_detail::mean_cov(rows, m.mean, m.covariance);
  return m;
}

/// sqrt((mu_m - mu_i)^T ((S_m + S_i) / 2 + eps I)^-1 (mu_m - mu_i)).
template <class T>
double niqe_score(const NiqeModel& model, const BasicImage<T>& img, double regularization = 1e-6) {
  if (model.mean.size() == 0) throw ConfigError("niqe_score: model is not fitted");
  const auto patches = niqe_detail::patch_features(img, model.patch_size);
  std::vector<std::vector<double>> rows;
  for (const auto& p : patches) rows.push_back(p.features);
  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;
  niqe_detail::mean_cov(rows, mu, cov);
  const Eigen::VectorXd diff = model.mean - mu;
  Eigen::MatrixXd pooled = 0.5 * (model.covariance + cov);
  pooled.diagonal().array() += regularization;
  const Eigen::VectorXd sol = pooled.completeOrthogonalDecomposition().solve(diff);
  return std::sqrt(std::max(0.0, diff.dot(sol)));
}

}  // namespace uietl::iqa

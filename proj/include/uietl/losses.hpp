#pragma once

#include <cmath>
#include <vector>

#include "uietl/error.hpp"
#include "uietl/extractor.hpp"
#include "uietl/image.hpp"

namespace uietl {

/// Mean absolute error over all 3HW components. If `grad` is given it receives
/// d loss / d pred (sign(pred - target) / 3HW, zero where equal).
template <class T>
double pixel_loss(const BasicImage<T>& pred, const BasicImage<T>& target, BasicImage<T>* grad = nullptr) {
  require_same_shape(pred, target, "pixel_loss");
  const std::size_t n = pred.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::abs(static_cast<double>(pred[i]) - target[i]);
  if (grad) {
    *grad = BasicImage<T>(pred.height(), pred.width());
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(pred[i]) - target[i];
      (*grad)[i] = static_cast<T>(d > 0 ? inv : (d < 0 ? -inv : 0.0));
    }
  }
  return sum / static_cast<double>(n);
}

namespace detail {

struct Moments2 {
  double mean_a = 0, mean_b = 0, sd_a = 0, sd_b = 0, cov = 0;
};

// Population statistics over the flattened 3HW vectors.
template <class T>
Moments2 joint_moments(const BasicImage<T>& a, const BasicImage<T>& b) {
  const std::size_t n = a.size();
  Moments2 m;
  for (std::size_t i = 0; i < n; ++i) {
    m.mean_a += a[i];
    m.mean_b += b[i];
  }
  m.mean_a /= static_cast<double>(n);
  m.mean_b /= static_cast<double>(n);
  double va = 0, vb = 0, cv = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - m.mean_a, db = b[i] - m.mean_b;
    va += da * da;
    vb += db * db;
    cv += da * db;
  }
  m.sd_a = std::sqrt(va / static_cast<double>(n));
  m.sd_b = std::sqrt(vb / static_cast<double>(n));
  m.cov = cv / static_cast<double>(n);
  return m;
}

// Rounding leaves a few ulps of spread on constant inputs.
inline bool flat(double sd, double mean) { return sd <= 1e-9 * (1.0 + std::fabs(mean)); }

inline bool degenerate(const Moments2& m) { return flat(m.sd_a, m.mean_a) || flat(m.sd_b, m.mean_b); }

}  // namespace detail

/// Pearson correlation of the two images flattened to 3HW vectors.
template <class T>
double pearson_corr(const BasicImage<T>& a, const BasicImage<T>& b) {
  require_same_shape(a, b, "pearson_corr");
  const auto m = detail::joint_moments(a, b);
  if (detail::degenerate(m)) throw DegenerateInputError("pearson_corr: constant image");
  return std::clamp(m.cov / (m.sd_a * m.sd_b), -1.0, 1.0);
}

/// Correlation loss (1 - rho) / 2, in [0, 1].
template <class T>
double pearson_loss(const BasicImage<T>& pred, const BasicImage<T>& target, BasicImage<T>* grad = nullptr) {
  require_same_shape(pred, target, "pearson_loss");
  const auto m = detail::joint_moments(pred, target);
  if (detail::degenerate(m)) throw DegenerateInputError("pearson_loss: constant image");
  const double rho = m.cov / (m.sd_a * m.sd_b);
  if (grad) {
    // d rho / d a_i = [ (b_i - mu_b) / (sd_a sd_b) - rho (a_i - mu_a) / sd_a^2 ] / n
    const double n = static_cast<double>(pred.size());
    *grad = BasicImage<T>(pred.height(), pred.width());
    const double k1 = 1.0 / (m.sd_a * m.sd_b * n);
    const double k2 = rho / (m.sd_a * m.sd_a * n);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double drho = (target[i] - m.mean_b) * k1 - (pred[i] - m.mean_a) * k2;
      (*grad)[i] = static_cast<T>(-0.5 * drho);
    }
  }
  return 0.5 * (1.0 - std::clamp(rho, -1.0, 1.0));
}

/// Mean absolute feature difference, averaged over the extractor's layers.
template <class T>
double perceptual_loss(const BasicImage<T>& pred, const BasicImage<T>& target,
                       const FeatureExtractor<T>& extractor, BasicImage<T>* grad = nullptr) {
  require_same_shape(pred, target, "perceptual_loss");
  std::vector<Tensor<T>> fp, ft;
  try {
    fp = extractor.extract(pred);
    ft = extractor.extract(target);
  } catch (const ExtractorError&) {
    throw;
  } catch (const std::exception& e) {
    throw ExtractorError(extractor.tag() + ": " + e.what());
  }
  if (fp.empty() || fp.size() != ft.size()) throw ExtractorError(extractor.tag() + ": inconsistent layers");
  const double layers = static_cast<double>(fp.size());
  double total = 0.0;
  std::vector<Tensor<T>> seeds;
  for (std::size_t l = 0; l < fp.size(); ++l) {
    if (fp[l].shape() != ft[l].shape()) throw ExtractorError(extractor.tag() + ": layer shape mismatch");
    const double n = static_cast<double>(fp[l].size());
    double s = 0.0;
    Tensor<T> seed(fp[l].shape());
    for (std::size_t i = 0; i < fp[l].size(); ++i) {
      const double d = static_cast<double>(fp[l][i]) - ft[l][i];
      s += std::abs(d);
      seed[i] = static_cast<T>(d > 0 ? 1.0 / (n * layers) : (d < 0 ? -1.0 / (n * layers) : 0.0));
    }
    total += s / n;
    seeds.push_back(std::move(seed));
  }
  if (grad) *grad = extractor.backward(pred, seeds);
  return total / layers;
}

struct LossWeights {
  double lambda1 = 1.0;    // pixel
  double lambda2 = 0.5;    // perceptual
  double lambda3 = 0.003;  // quality score

  void validate() const {
    if (!std::isfinite(lambda1) || !std::isfinite(lambda2) || !std::isfinite(lambda3) || lambda1 < 0 ||
        lambda2 < 0 || lambda3 < 0)
      throw ConfigError("loss weights must be finite and non-negative");
  }
};

/// Terms of the fine-tuning objective. `score_gap` is q_pred - q_ref and
/// `score_term` is lambda3 * score_gap, so that
/// total = lambda1 * pixel + lambda2 * perceptual - score_term.
struct LossBreakdown {
  double pixel = 0;
  double perceptual = 0;
  double score_gap = 0;
  double score_term = 0;
  double total = 0;

  double reconstruct(const LossWeights& w) const { return w.lambda1 * pixel + w.lambda2 * perceptual - score_term; }
};

/// lambda1 * L_pix(pseudo, pred) + lambda2 * L_feat(pseudo, pred) - lambda3 * (q_pred - q_ref).
/// q_ref is a constant. If `grad` is given it receives d total / d pred; the
/// score contribution needs `q_pred_grad` (dQ/dpred) and is skipped without it.
template <class T>
LossBreakdown total_loss(const BasicImage<T>& pred, const BasicImage<T>& pseudo, double q_pred, double q_ref,
                         const LossWeights& w, const FeatureExtractor<T>& extractor,
                         BasicImage<T>* grad = nullptr, const BasicImage<T>* q_pred_grad = nullptr) {
  w.validate();
  LossBreakdown b;
  BasicImage<T> g_pix, g_feat;
  b.pixel = pixel_loss(pred, pseudo, grad ? &g_pix : nullptr);
  b.perceptual = perceptual_loss(pred, pseudo, extractor, grad && w.lambda2 > 0 ? &g_feat : nullptr);
  b.score_gap = q_pred - q_ref;
  b.score_term = w.lambda3 == 0.0 ? 0.0 : w.lambda3 * b.score_gap;
  b.total = b.reconstruct(w);
  if (grad) {
    *grad = BasicImage<T>(pred.height(), pred.width());
    for (std::size_t i = 0; i < grad->size(); ++i) {
      double v = w.lambda1 * g_pix[i];
      if (w.lambda2 > 0) v += w.lambda2 * g_feat[i];
      if (w.lambda3 > 0 && q_pred_grad) v -= w.lambda3 * (*q_pred_grad)[i];
      (*grad)[i] = static_cast<T>(v);
    }
  }
  return b;
}

}  // namespace uietl

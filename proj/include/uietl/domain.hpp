#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uietl/error.hpp"
#include "uietl/extractor.hpp"
#include "uietl/image.hpp"
#include "uietl/rng.hpp"

namespace uietl {

/// Synthetic corruption with a known clean source.
struct NoiseSpec {
  enum class Kind { kGaussian, kColorCast, kHazeBlend };
  Kind kind = Kind::kGaussian;
  double sigma = 0.05;                          // gaussian
  std::array<double, 3> cast = {0.0, 0.0, 0.0};  // color-cast offset per channel
  double blend = 0.3;                           // haze-blend weight towards `haze`
  std::array<double, 3> haze = {0.6, 0.75, 0.8};
  std::uint64_t seed = 0;

  static NoiseSpec gaussian(double sigma, std::uint64_t seed) {
    NoiseSpec s;
    s.sigma = sigma;
    s.seed = seed;
    return s;
  }
  static NoiseSpec color_cast(std::array<double, 3> cast) {
    NoiseSpec s;
    s.kind = Kind::kColorCast;
    s.cast = cast;
    return s;
  }
  static NoiseSpec haze_blend(double blend, std::array<double, 3> haze = {0.6, 0.75, 0.8}) {
    NoiseSpec s;
    s.kind = Kind::kHazeBlend;
    s.blend = blend;
    s.haze = haze;
    return s;
  }

  void validate() const {
    if (!(sigma >= 0) || !std::isfinite(sigma)) throw RangeError("noise: sigma must be finite and >= 0");
    if (!(blend >= 0 && blend <= 1)) throw RangeError("noise: blend must lie in [0, 1]");
    for (double c : cast)
      if (!(std::abs(c) <= 1)) throw RangeError("noise: cast components must lie in [-1, 1]");
    for (double h : haze)
      if (!(h >= 0 && h <= 1)) throw RangeError("noise: haze colour must lie in [0, 1]");
  }
};

inline std::string to_string(NoiseSpec::Kind k) {
  switch (k) {
    case NoiseSpec::Kind::kGaussian: return "gaussian";
    case NoiseSpec::Kind::kColorCast: return "color-cast";
    case NoiseSpec::Kind::kHazeBlend: return "haze-blend";
  }
  return "?";
}

inline NoiseSpec::Kind parse_noise_kind(const std::string& s) {
  if (s == "gaussian") return NoiseSpec::Kind::kGaussian;
  if (s == "color-cast") return NoiseSpec::Kind::kColorCast;
  if (s == "haze-blend") return NoiseSpec::Kind::kHazeBlend;
  throw ConfigError("unknown noise kind '" + s + "'");
}

/// Applies the corruption and clamps to [0, 1]. `index` separates the noise
/// streams of images that share a spec.
template <class T>
BasicImage<T> corrupt(const BasicImage<T>& clean, const NoiseSpec& spec, std::uint64_t index = 0) {
  spec.validate();
  BasicImage<T> out = clean;
  switch (spec.kind) {
    case NoiseSpec::Kind::kGaussian: {
      Rng rng(split_seed(spec.seed, static_cast<std::uint64_t>(Stream::kNoise), index));
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(out[i] + spec.sigma * normal(rng));
      break;
    }
    case NoiseSpec::Kind::kColorCast:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(out[i] + spec.cast[i % 3]);
      break;
    case NoiseSpec::Kind::kHazeBlend:
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<T>((1.0 - spec.blend) * out[i] + spec.blend * spec.haze[i % 3]);
      break;
  }
  clamp_unit(out);
  return out;
}

/// Mean over aligned pairs of the squared pixel difference, per component by
/// default or summed over the image when `raw_sum` is set.
template <class T>
double domain_discrepancy(const std::vector<BasicImage<T>>& pseudo, const std::vector<BasicImage<T>>& real,
                          bool raw_sum = false) {
  if (pseudo.size() != real.size()) throw AlignmentError("domain_discrepancy: lists differ in length");
  if (pseudo.empty()) throw AlignmentError("domain_discrepancy: empty lists");
  double total = 0;
  for (std::size_t k = 0; k < pseudo.size(); ++k) {
    if (!pseudo[k].same_shape(real[k]))
      throw AlignmentError("domain_discrepancy: shape mismatch at pair " + std::to_string(k));
    double s = 0;
    for (std::size_t i = 0; i < pseudo[k].size(); ++i) {
      const double d = static_cast<double>(pseudo[k][i]) - real[k][i];
      s += d * d;
    }
    total += raw_sum ? s : s / static_cast<double>(pseudo[k].size());
  }
  return total / static_cast<double>(pseudo.size());
}

struct ShiftReport {
  double delta_domain = 0;
  double delta_feat = 0;
  std::vector<double> mu_r;
  std::vector<double> mu_n;
  std::string extractor;
};

/// Flattened, concatenated extractor layers averaged over a set.
template <class T>
std::vector<double> mean_features(const std::vector<BasicImage<T>>& set, const FeatureExtractor<T>& extractor) {
  if (set.empty()) throw RangeError("mean_features: empty set");
  std::vector<double> mu;
  for (std::size_t k = 0; k < set.size(); ++k) {
    std::vector<Tensor<T>> f;
    try {
      f = extractor.extract(set[k]);
    } catch (const ExtractorError&) {
      throw;
    } catch (const std::exception& e) {
      throw ExtractorError(extractor.tag() + ": " + e.what());
    }
    std::size_t n = 0;
    for (const auto& t : f) n += t.size();
    if (k == 0) mu.assign(n, 0.0);
    if (n != mu.size()) throw ExtractorError(extractor.tag() + ": feature size differs across the set");
    std::size_t o = 0;
    for (const auto& t : f)
      for (std::size_t i = 0; i < t.size(); ++i) mu[o++] += static_cast<double>(t[i]);
  }
  for (double& v : mu) v /= static_cast<double>(set.size());
  return mu;
}

/// Squared distance between the mean features of two image sets. When the
/// clean sources are known, `delta_domain` is filled by the caller.
template <class T>
ShiftReport feature_shift(const std::vector<BasicImage<T>>& set_r, const std::vector<BasicImage<T>>& set_n,
                          const FeatureExtractor<T>& extractor) {
  if (set_r.empty() || set_n.empty()) throw RangeError("feature_shift: both sets must be nonempty");
  ShiftReport r;
  r.extractor = extractor.tag();
  r.mu_r = mean_features(set_r, extractor);
  r.mu_n = mean_features(set_n, extractor);
  if (r.mu_r.size() != r.mu_n.size()) throw ExtractorError(extractor.tag() + ": feature size differs between sets");
  for (std::size_t i = 0; i < r.mu_r.size(); ++i) {
    const double d = r.mu_r[i] - r.mu_n[i];
    r.delta_feat += d * d;
  }
  return r;
}

}  // namespace uietl

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "uietl/error.hpp"
#include "uietl/image.hpp"

namespace uietl {

inline const std::vector<double>& default_ratio_grid() {
  static const std::vector<double> grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  return grid;
}

inline void validate_ratio_grid(const std::vector<double>& ratios) {
  if (ratios.size() < 2) throw GridError("ratio grid needs at least two points");
  if (ratios.front() != 0.0 || ratios.back() != 1.0) throw GridError("ratio grid must start at 0 and end at 1");
  for (std::size_t i = 1; i < ratios.size(); ++i)
    if (!(ratios[i] > ratios[i - 1])) throw GridError("ratio grid must be strictly increasing");
}

/// Images blending a clean image towards a degraded one.
template <class T>
struct MixtureSeries {
  BasicImage<T> clean;
  BasicImage<T> degraded;
  std::vector<double> ratios;
  std::vector<BasicImage<T>> mixed;
};

template <class T>
MixtureSeries<T> make_mixture_series(const BasicImage<T>& clean, const BasicImage<T>& degraded,
                                     const std::vector<double>& ratios = default_ratio_grid()) {
  validate_ratio_grid(ratios);
  require_same_shape(clean, degraded, "make_mixture_series");
  MixtureSeries<T> s{clean, degraded, ratios, {}};
  for (double t : ratios) s.mixed.push_back(linear_mix(clean, degraded, t));
  return s;
}

template <class T>
using MetricFn = std::function<double(const BasicImage<T>&)>;

/// Scores strictly decrease along the series, ties allowed within `tol`.
inline bool strictly_decreasing(const std::vector<double>& scores, double tol) {
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[i - 1] + tol) return false;
  // a series with every step tied carries no ordering
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] < scores[i - 1] - tol) return true;
  return false;
}

struct MonotonicityOptions {
  double relative_tolerance = 1e-6;  // fraction of the observed score range per series
};

/// Per-series scores, evaluated once so callers can audit them.
template <class T>
std::vector<std::vector<double>> series_scores(const MetricFn<T>& metric,
                                               const std::vector<BasicImagePair<T>>& pairs,
                                               const std::vector<double>& ratios = default_ratio_grid()) {
  validate_ratio_grid(ratios);
  if (pairs.empty()) throw RangeError("monotonicity: at least one pair required");
  std::vector<std::vector<double>> out;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto s = make_mixture_series(pairs[p].input, pairs[p].target, ratios);
    std::vector<double> scores;
    for (const auto& img : s.mixed) {
      try {
        scores.push_back(metric(img));
      } catch (const Error& e) {
        throw MetricError("pair " + std::to_string(p) + ": " + e.what());
      } catch (const std::exception& e) {
        throw MetricError("pair " + std::to_string(p) + ": " + e.what());
      }
    }
    out.push_back(std::move(scores));
  }
  return out;
}

inline double monotonicity_rate(const std::vector<std::vector<double>>& scores, MonotonicityOptions opts = {}) {
  std::size_t pass = 0;
  for (const auto& s : scores) {
    const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    const double tol = opts.relative_tolerance * (*hi - *lo);
    pass += strictly_decreasing(s, tol) ? 1 : 0;
  }
  return scores.empty() ? 0.0 : static_cast<double>(pass) / static_cast<double>(scores.size());
}

/// Fraction of (clean, degraded) pairs whose mixture scores decrease with the
/// degraded share. Each pair is stored as {input = clean, target = degraded}.
template <class T>
double monotonicity_rate(const MetricFn<T>& metric, const std::vector<BasicImagePair<T>>& pairs,
                         const std::vector<double>& ratios = default_ratio_grid(), MonotonicityOptions opts = {}) {
  return monotonicity_rate(series_scores(metric, pairs, ratios), opts);
}

struct MetricReport {
  std::string tag;
  double monotonicity = 0;
  double plcc = 0;
  int rank = 0;
};

/// Orders by monotonicity rate, then PLCC, both descending; full ties keep
/// input order. Ranks start at 1.
inline std::vector<MetricReport> rank_metrics(std::vector<MetricReport> reports) {
  if (reports.empty()) throw RangeError("rank_metrics: no reports");
  std::stable_sort(reports.begin(), reports.end(), [](const MetricReport& a, const MetricReport& b) {
    if (a.monotonicity != b.monotonicity) return a.monotonicity > b.monotonicity;
    return a.plcc > b.plcc;
  });
  for (std::size_t i = 0; i < reports.size(); ++i) reports[i].rank = static_cast<int>(i) + 1;
  return reports;
}

}  // namespace uietl

#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "uietl/error.hpp"

namespace uietl::iqa {

/// Pearson linear correlation coefficient of two sequences.
inline double plcc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("plcc: sequences differ in length");
  if (x.size() < 3) throw RangeError("plcc: at least 3 samples required");
  auto flat = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v[0]; });
  };
  if (flat(x) || flat(y)) throw DegenerateInputError("plcc: constant sequence");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInputError("plcc: constant sequence");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace uietl::iqa

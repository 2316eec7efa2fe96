#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "support/synthetic.hpp"
#include "uietl/domain.hpp"
#include "uietl/extractor.hpp"

using namespace uietl;
using testsupport::random_image;
using testsupport::smooth_scene;

using DImage = BasicImage<double>;

namespace {

std::vector<DImage> scenes(int n, int side, std::uint64_t seed, double lo = 0.2, double hi = 0.8) {
  std::vector<DImage> out;
  for (int i = 0; i < n; ++i) out.push_back(random_image<double>(side, side, seed + i, lo, hi));
  return out;
}

std::vector<DImage> offset(const std::vector<DImage>& set, double delta) {
  auto out = set;
  for (auto& img : out)
    for (std::size_t i = 0; i < img.size(); ++i) img[i] += delta;
  return out;
}

std::vector<DImage> corrupt_all(const std::vector<DImage>& set, const NoiseSpec& spec) {
  std::vector<DImage> out;
  for (std::size_t k = 0; k < set.size(); ++k) out.push_back(corrupt(set[k], spec, k));
  return out;
}

}  // namespace

TEST(DomainDiscrepancy, IdentityOffsetAndBruteForce) {
  const auto real = scenes(6, 8, 1);
  EXPECT_EQ(domain_discrepancy(real, real), 0.0);
  EXPECT_NEAR(domain_discrepancy(offset(real, 0.1), real), 0.01, 1e-12);
  EXPECT_NEAR(domain_discrepancy(offset(real, 0.1), real, true), 0.01 * 3 * 64, 1e-9);

  const auto noisy = corrupt_all(real, NoiseSpec::gaussian(0.05, 3));
  double brute = 0;
  for (std::size_t k = 0; k < real.size(); ++k) {
    long double s = 0;
    for (std::size_t i = 0; i < real[k].size(); ++i) s += std::pow(static_cast<long double>(noisy[k][i]) - real[k][i], 2);
    brute += static_cast<double>(s / real[k].size()) / real.size();
  }
  const double d = domain_discrepancy(noisy, real);
  EXPECT_NEAR(d, brute, 1e-12);
  EXPECT_NEAR(d, 0.0025, 0.0006);
}

TEST(DomainDiscrepancy, QuadraticScaling) {
  const auto real = scenes(5, 8, 10);
  const auto other = scenes(5, 8, 20);
  const double base = domain_discrepancy(other, real);
  for (double k : {0.5, 2.0, 3.0}) {
    auto scaled = real;
    for (std::size_t n = 0; n < real.size(); ++n)
      for (std::size_t i = 0; i < real[n].size(); ++i) scaled[n][i] = real[n][i] + k * (other[n][i] - real[n][i]);
    EXPECT_NEAR(domain_discrepancy(scaled, real), k * k * base, 1e-12);
  }
}

TEST(DomainDiscrepancy, AlignmentErrors) {
  const auto real = scenes(3, 8, 1);
  EXPECT_THROW(domain_discrepancy(scenes(2, 8, 1), real), AlignmentError);
  auto bad = real;
  bad[1] = random_image<double>(8, 9, 1);
  EXPECT_THROW(domain_discrepancy(bad, real), AlignmentError);
}

TEST(FeatureShift, IdentityOffsetEqualsClosedForm) {
  IdentityExtractor<double> id;
  const auto r = scenes(4, 6, 30);
  EXPECT_EQ(feature_shift(r, r, id).delta_feat, 0.0);
  for (double delta : {0.01, 0.05, 0.1}) {
    const auto rep = feature_shift(r, offset(r, delta), id);
    EXPECT_NEAR(rep.delta_feat, 3 * 36 * delta * delta, 1e-6);
    EXPECT_EQ(rep.extractor, "identity");
    double stored = 0;
    for (std::size_t i = 0; i < rep.mu_r.size(); ++i) stored += std::pow(rep.mu_r[i] - rep.mu_n[i], 2);
    EXPECT_NEAR(rep.delta_feat, stored, 1e-12);
  }
}

TEST(FeatureShift, SymmetricAndPinnedUnderPyramid) {
  ConvPyramidExtractor<double> pyr;
  const auto clean = scenes(6, 16, 40);
  const auto g = corrupt_all(clean, NoiseSpec::gaussian(0.05, 7));
  const auto c = corrupt_all(clean, NoiseSpec::color_cast({0.08, -0.02, -0.05}));
  const auto gc = feature_shift(g, c, pyr);
  const auto cg = feature_shift(c, g, pyr);
  EXPECT_GT(gc.delta_feat, 0.0);
  EXPECT_NEAR(gc.delta_feat, cg.delta_feat, 1e-12);
  EXPECT_EQ(gc.extractor, "conv-pyramid");
  // regression value from a recorded run with these seeds
  EXPECT_NEAR(gc.delta_feat, 1.2393024981998968, 1e-9);
}

TEST(FeatureShift, ZeroMeanNoiseShiftVanishesWithSetSize) {
  IdentityExtractor<double> id;
  const double s1 = 0.02, s2 = 0.04;
  const int side = 4;
  const double dim = 3.0 * side * side;
  for (int n : {10, 1000}) {
    const auto clean = scenes(n, side, 50, 0.4, 0.6);
    const auto a = corrupt_all(clean, NoiseSpec::gaussian(s1, 1));
    const auto b = corrupt_all(clean, NoiseSpec::gaussian(s2, 2));
    const double expected = dim * (s1 * s1 + s2 * s2) / n;
    EXPECT_LT(feature_shift(a, b, id).delta_feat, 10 * expected) << n;
  }
}

TEST(Noise, KindsClampAndValidate) {
  const DImage img = random_image<double>(8, 8, 3);
  const auto haze = corrupt(img, NoiseSpec::haze_blend(1.0));
  EXPECT_NEAR(haze.at(2, 3, 1), 0.75, 1e-12);
  const auto cast = corrupt(img, NoiseSpec::color_cast({1.0, 0.0, -1.0}));
  EXPECT_EQ(cast.at(0, 0, 0), 1.0);
  EXPECT_EQ(cast.at(0, 0, 2), 0.0);
  const auto heavy = corrupt(img, NoiseSpec::gaussian(5.0, 1));
  for (std::size_t i = 0; i < heavy.size(); ++i) {
    EXPECT_GE(heavy[i], 0.0);
    EXPECT_LE(heavy[i], 1.0);
  }
  EXPECT_EQ(corrupt(img, NoiseSpec::gaussian(0.1, 4), 2), corrupt(img, NoiseSpec::gaussian(0.1, 4), 2));
  EXPECT_NE(corrupt(img, NoiseSpec::gaussian(0.1, 4), 2), corrupt(img, NoiseSpec::gaussian(0.1, 4), 3));
  EXPECT_THROW(corrupt(img, NoiseSpec::haze_blend(1.5)), RangeError);
  EXPECT_THROW(corrupt(img, NoiseSpec::gaussian(-1, 0)), RangeError);
  EXPECT_EQ(parse_noise_kind(to_string(NoiseSpec::Kind::kHazeBlend)), NoiseSpec::Kind::kHazeBlend);
  EXPECT_THROW(parse_noise_kind("fog"), ConfigError);
}

TEST(FeatureShift, Errors) {
  IdentityExtractor<double> id;
  EXPECT_THROW(feature_shift(std::vector<DImage>{}, scenes(1, 4, 1), id), RangeError);
  EXPECT_THROW(feature_shift(scenes(1, 4, 1), scenes(1, 5, 1), id), ExtractorError);
}

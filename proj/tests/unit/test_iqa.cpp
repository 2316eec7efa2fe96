#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "uietl/iqa/fullref.hpp"
#include "uietl/iqa/niqe.hpp"
#include "uietl/iqa/scorer.hpp"
#include "uietl/iqa/stats.hpp"
#include "uietl/iqa/uciqe.hpp"
#include "uietl/iqa/uiqm.hpp"
#include "uietl/rng.hpp"

using namespace uietl;
using namespace uietl::iqa;
using testsupport::constant_image;
using testsupport::random_image;
using testsupport::smooth_scene;

namespace {

Image checkerboard(int side, int square, float lo, float hi) {
  Image img(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = ((y / square + x / square) % 2) ? hi : lo;
  return img;
}

}  // namespace

TEST(Psnr, ClosedFormCapAndOracle) {
  EXPECT_NEAR(psnr(constant_image<float>(8, 8, 0, 0, 0), constant_image<float>(8, 8, .5, .5, .5)), 6.0206, 1e-4);
  const Image a = random_image<float>(16, 16, 1);
  EXPECT_EQ(psnr(a, a), 100.0);
  for (int t = 0; t < 10; ++t) {
    const Image x = random_image<float>(16, 12, 10 + t), y = random_image<float>(16, 12, 40 + t);
    EXPECT_NEAR(psnr(x, y), static_cast<double>(oracle::psnr(x, y)), 1e-4);
    EXPECT_DOUBLE_EQ(psnr(x, y), psnr(y, x));
  }
  EXPECT_THROW(psnr(a, random_image<float>(16, 15, 1)), ShapeError);
}

TEST(Ssim, IdentityInversionOracleAndSymmetry) {
  const Image a = smooth_scene<float>(32, 32, 3);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
  const Image noisy = random_image<float>(32, 32, 4);
  Image inv = noisy;
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0f - noisy[i];
  EXPECT_LT(ssim(inv, noisy), 0.0);
  EXPECT_NEAR(ssim(inv, noisy), static_cast<double>(oracle::ssim(inv, noisy)), 1e-3);
  for (int t = 0; t < 5; ++t) {
    const Image x = smooth_scene<float>(24, 20, 10 + t), y = random_image<float>(24, 20, 30 + t);
    const double s = ssim(x, y);
    EXPECT_NEAR(s, static_cast<double>(oracle::ssim(x, y)), 1e-3);
    EXPECT_NEAR(s, ssim(y, x), 1e-9);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
  EXPECT_THROW(ssim(random_image<float>(10, 32, 1), random_image<float>(10, 32, 2)), SizeError);
}

TEST(Plcc, LinearityAndOracle) {
  const std::vector<double> x{0.1, 0.7, 0.3, 0.9, 0.5};
  std::vector<double> lin, neg;
  for (double v : x) {
    lin.push_back(2 * v + 1);
    neg.push_back(-v);
  }
  EXPECT_NEAR(plcc(x, lin), 1.0, 1e-12);
  EXPECT_NEAR(plcc(x, neg), -1.0, 1e-12);
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a(30), b(30);
    std::vector<long double> al(30), bl(30);
    for (int i = 0; i < 30; ++i) {
      a[i] = al[i] = uniform01(rng);
      b[i] = bl[i] = uniform01(rng);
    }
    EXPECT_NEAR(plcc(a, b), static_cast<double>(oracle::pearson(al, bl)), 1e-9);
  }
  const std::vector<double> flat{0.3, 0.3, 0.3};
  EXPECT_THROW(plcc(flat, std::vector<double>{1, 2, 3}), DegenerateInputError);
  EXPECT_THROW(plcc(std::vector<double>{1, 2}, std::vector<double>{1, 2}), RangeError);
  EXPECT_THROW(plcc(x, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Uiqm, ConstantGrayIsZeroAndCheckerboardComponents) {
  for (float v : {0.0f, 0.2f, 0.5f, 1.0f}) {
    EXPECT_EQ(uiqm(constant_image<float>(16, 16, v, v, v)), 0.0) << v;
  }
  const auto c = uiqm_components(checkerboard(32, 2, 0.2f, 0.8f));
  EXPECT_NEAR(c.uicm, 0.0, 1e-12);
  EXPECT_GT(c.uism, 0.0);
  EXPECT_THROW(uiqm(random_image<float>(7, 32, 1)), SizeError);
}

TEST(Uiqm, ComponentsMatchOracle) {
  for (int t = 0; t < 20; ++t) {
    const Image img = t % 2 ? random_image<float>(32, 40, 100 + t, 0.05, 0.95) : smooth_scene<float>(40, 32, 100 + t);
    const auto c = uiqm_components(img);
    EXPECT_NEAR(c.uicm, static_cast<double>(oracle::uicm(img)), 1e-2);
    EXPECT_NEAR(c.uism, static_cast<double>(oracle::uism(img)), 1e-2);
    EXPECT_NEAR(c.uiconm, static_cast<double>(oracle::uiconm(img)), 1e-2);
    EXPECT_NEAR(c.value, static_cast<double>(oracle::uiqm(img)), 1e-2);
  }
}

TEST(Uciqe, ConstantGrayIsZeroAndComponentsMatchOracle) {
  for (float v : {0.0f, 0.3f, 0.7f, 1.0f}) {
    EXPECT_NEAR(uciqe(constant_image<float>(8, 8, v, v, v)), 0.0, 1e-12) << v;
  }
  // Saturation ramp: red channel sweeps, green and blue fixed.
  Image ramp(4, 50);
  for (int x = 0; x < 50; ++x)
    for (int y = 0; y < 4; ++y) {
      ramp.at(y, x, 0) = static_cast<float>(x) / 49.0f;
      ramp.at(y, x, 1) = 0.2f;
      ramp.at(y, x, 2) = 0.2f;
    }
  for (int t = 0; t < 21; ++t) {
    const Image img = t == 20 ? ramp : random_image<float>(20, 30, 200 + t);
    const auto u = uciqe_components(img);
    const auto o = oracle::uciqe(img);
    EXPECT_NEAR(u.chroma_sd, static_cast<double>(o.chroma_sd), 1e-3);
    EXPECT_NEAR(u.luminance_contrast, static_cast<double>(o.contrast), 1e-3);
    EXPECT_NEAR(u.mean_saturation, static_cast<double>(o.saturation), 1e-3);
    EXPECT_NEAR(u.value, static_cast<double>(o.value), 1e-3);
  }
}

TEST(NoReference, DeterministicAndFinite) {
  for (int t = 0; t < 5; ++t) {
    const Image img = random_image<float>(24, 24, 300 + t);
    EXPECT_EQ(uiqm(img), uiqm(img));
    EXPECT_EQ(uciqe(img), uciqe(img));
    EXPECT_TRUE(std::isfinite(uiqm(img)));
    EXPECT_TRUE(std::isfinite(uciqe(img)));
  }
}

class NiqeTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    for (int i = 0; i < 12; ++i) corpus_.push_back(smooth_scene<float>(64, 64, 500 + i));
    model_ = niqe_fit(corpus_);
  }
  static std::vector<Image> corpus_;
  static NiqeModel model_;
};

std::vector<Image> NiqeTest::corpus_;
NiqeModel NiqeTest::model_;

TEST_F(NiqeTest, ModelShape) {
  EXPECT_EQ(model_.feature_dim(), 36);
  EXPECT_EQ(model_.patch_size, 16);
  EXPECT_TRUE(model_.covariance.isApprox(model_.covariance.transpose()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(model_.covariance);
  EXPECT_GT(es.eigenvalues().minCoeff(), -1e-9);
}

TEST_F(NiqeTest, CorpusMembersScoreWellAndNoiseScoresBadly) {
  std::vector<double> self;
  for (const auto& img : corpus_) self.push_back(niqe_score(model_, img));
  std::vector<double> sorted = self;
  std::sort(sorted.begin(), sorted.end());
  const double p90 = sorted[static_cast<std::size_t>(0.9 * (sorted.size() - 1))];
  const double median = sorted[sorted.size() / 2];
  EXPECT_LT(niqe_score(model_, corpus_[3]), p90 + 1e-12);
  const Image noise = random_image<float>(64, 64, 99);
  EXPECT_GT(niqe_score(model_, noise), median);
  EXPECT_EQ(niqe_score(model_, corpus_[0]), self[0]);
}

TEST_F(NiqeTest, Errors) {
  EXPECT_THROW(niqe_score(model_, constant_image<float>(64, 64, .4, .4, .4)), DegenerateInputError);
  EXPECT_THROW(niqe_score(model_, random_image<float>(8, 8, 1)), SizeError);
  std::vector<Image> few(corpus_.begin(), corpus_.begin() + 9);
  EXPECT_THROW(niqe_fit(few), RangeError);
}

TEST(Proxy, FloorRangeAndMonotoneContrast) {
  ProxyScorer<float> q;
  EXPECT_NEAR(q.score(constant_image<float>(8, 8, .4, .4, .4)), 0.0, 1e-9);
  const auto [lo, hi] = q.range();
  for (int t = 0; t < 10; ++t) {
    const double s = q.score(random_image<float>(8, 8, t));
    EXPECT_GE(s, lo);
    EXPECT_LE(s, hi);
  }
  const Image base = smooth_scene<float>(16, 16, 2);
  double prev = -1;
  for (double k : {0.1, 0.3, 0.6, 1.0}) {
    Image img = base;
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(0.5 + k * (base[i] - 0.5));
    const double s = q.score(img);
    EXPECT_GT(s, prev);
    prev = s;
  }
  EXPECT_TRUE(q.differentiable());
  EXPECT_EQ(q.tag(), "proxy");
}

TEST(Proxy, FrozenParametersAndGradient) {
  ProxyScorer<double> q;
  const std::string before = q.parameters().digest();
  for (const auto& [name, e] : q.parameters().entries()) EXPECT_FALSE(e.trainable) << name;
  for (int t = 0; t < 100; ++t) {
    const auto x = random_image<double>(4, 4, 1000 + t, 0.05, 0.95);
    BasicImage<double> g;
    const double s = q.score_grad(x, g);
    EXPECT_DOUBLE_EQ(s, q.score(x));
    const auto num = oracle::central_difference<double>([&](const BasicImage<double>& v) { return q.score(v); }, x);
    EXPECT_LT(oracle::max_relative_error(g, num), 1e-3) << t;
  }
  EXPECT_EQ(q.parameters().digest(), before);
}

TEST(Scorers, NonDifferentiableAdapters) {
  FunctionScorer<float> f("uiqm", [](const Image& i) { return uiqm(i); }, {-10.0, 10.0});
  EXPECT_FALSE(f.differentiable());
  Image g;
  EXPECT_THROW(f.score_grad(random_image<float>(8, 8, 1), g), CapabilityError);
  const Image img = random_image<float>(16, 16, 2);
  EXPECT_DOUBLE_EQ(f.score(img), uiqm(img));
}

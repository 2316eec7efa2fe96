#include <cmath>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "uietl/iqa/scorer.hpp"
#include "uietl/metric_select.hpp"

using namespace uietl;
using testsupport::blur_pair;
using testsupport::random_image;

namespace {

std::vector<ImagePair> blur_pairs(int n) {
  std::vector<ImagePair> out;
  for (int i = 0; i < n; ++i) out.push_back(blur_pair<float>(16, 100 + i));
  return out;
}

// The metric sees only the mixed image, so MSE-to-clean needs a lookup from
// the series back to its clean endpoint: every pair has a distinct clean image
// and the probe image is matched to the nearest one.
MetricFn<float> mse_to_clean(const std::vector<ImagePair>& pairs, double sign) {
  return [&pairs, sign](const Image& img) {
    double best = INFINITY, score = 0;
    for (const auto& p : pairs) {
      const double d = static_cast<double>(oracle::mse(img, p.input));
      const double dd = static_cast<double>(oracle::mse(img, p.target));
      // the mixture lies on the segment between the endpoints of its own pair
      const double seg = static_cast<double>(oracle::mse(p.input, p.target));
      const double off = std::fabs(std::sqrt(d) + std::sqrt(dd) - std::sqrt(seg));
      if (off < best) {
        best = off;
        score = sign * d;
      }
    }
    return score;
  };
}

}  // namespace

TEST(MixtureSeries, EndpointsCountAndArithmetic) {
  const auto p = blur_pair<float>(8, 1);
  const auto two = make_mixture_series(p.input, p.target, {0.0, 1.0});
  ASSERT_EQ(two.mixed.size(), 2u);
  EXPECT_EQ(two.mixed[0], p.input);
  EXPECT_EQ(two.mixed[1], p.target);
  const auto five = make_mixture_series(p.input, p.target);
  ASSERT_EQ(five.mixed.size(), 5u);
  for (std::size_t i = 0; i < p.input.size(); ++i)
    EXPECT_NEAR(five.mixed[2][i], 0.5 * p.input[i] + 0.5 * p.target[i], 1e-6);
}

TEST(MixtureSeries, GridErrors) {
  const auto p = blur_pair<float>(8, 1);
  EXPECT_THROW(make_mixture_series(p.input, p.target, {0.0, 0.5, 0.25, 1.0}), GridError);
  EXPECT_THROW(make_mixture_series(p.input, p.target, {0.0, 0.5}), GridError);
  EXPECT_THROW(make_mixture_series(p.input, p.target, {-0.1, 1.0}), GridError);
  EXPECT_THROW(make_mixture_series(p.input, p.target, {0.0, 0.5, 0.5, 1.0}), GridError);
  EXPECT_THROW(make_mixture_series(p.input, random_image<float>(8, 9, 1)), ShapeError);
}

TEST(Monotonicity, MseOracleMetricAndTransforms) {
  const auto pairs = blur_pairs(20);
  const auto neg = mse_to_clean(pairs, -1.0), pos = mse_to_clean(pairs, +1.0);
  EXPECT_EQ(monotonicity_rate(neg, pairs), 1.0);
  EXPECT_EQ(monotonicity_rate(pos, pairs), 0.0);
  const MetricFn<float> exp_neg = [&](const Image& i) { return std::exp(neg(i)); };
  const MetricFn<float> affine_neg = [&](const Image& i) { return 2 * neg(i) + 3; };
  EXPECT_EQ(monotonicity_rate(exp_neg, pairs), 1.0);
  EXPECT_EQ(monotonicity_rate(affine_neg, pairs), 1.0);
}

TEST(Monotonicity, InvariantUnderIncreasingTransformsOfAnyMetric) {
  const auto pairs = blur_pairs(20);
  iqa::ProxyScorer<float> q;
  const MetricFn<float> base = [&](const Image& i) { return q.score(i); };
  const MetricFn<float> e = [&](const Image& i) { return std::exp(q.score(i) / 50.0); };
  const MetricFn<float> a = [&](const Image& i) { return 2 * q.score(i) + 3; };
  const double r = monotonicity_rate(base, pairs);
  EXPECT_EQ(monotonicity_rate(e, pairs), r);
  EXPECT_EQ(monotonicity_rate(a, pairs), r);
}

TEST(Monotonicity, ProxyRateAgreesWithHandCheckedScoreTable) {
  const auto pairs = blur_pairs(20);
  iqa::ProxyScorer<float> q;
  const MetricFn<float> metric = [&](const Image& i) { return q.score(i); };
  const auto table = series_scores(metric, pairs);
  ASSERT_EQ(table.size(), 20u);
  int pass = 0;
  for (std::size_t p = 0; p < table.size(); ++p) {
    ASSERT_EQ(table[p].size(), 5u);
    // endpoints equal direct evaluations of the originals
    EXPECT_EQ(table[p].front(), q.score(pairs[p].input));
    EXPECT_EQ(table[p].back(), q.score(pairs[p].target));
    bool ok = true;
    for (int i = 1; i < 5; ++i) ok = ok && table[p][i] < table[p][i - 1];
    pass += ok;
  }
  EXPECT_DOUBLE_EQ(monotonicity_rate(metric, pairs), pass / 20.0);
  EXPECT_EQ(pass, 20);
}

TEST(Monotonicity, TiesAndErrors) {
  EXPECT_EQ(monotonicity_rate({{3, 3, 3, 3, 3}}), 0.0);
  EXPECT_EQ(monotonicity_rate({{5, 4, 4, 2, 1}}), 1.0);
  EXPECT_EQ(monotonicity_rate({{5, 4, 4.000001, 2, 1}}), 1.0);
  EXPECT_EQ(monotonicity_rate({{5, 4, 4.1, 2, 1}}), 0.0);
  const auto pairs = blur_pairs(3);
  int calls = 0;
  const MetricFn<float> failing = [&](const Image&) -> double {
    if (++calls > 7) throw std::runtime_error("boom");
    return -calls;
  };
  try {
    monotonicity_rate(failing, pairs);
    FAIL() << "expected a metric error";
  } catch (const MetricError& e) {
    EXPECT_NE(std::string(e.what()).find("pair 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(monotonicity_rate(failing, std::vector<ImagePair>{}), RangeError);
}

TEST(RankMetrics, OrderingRules) {
  auto single = rank_metrics({{"a", 0.5, 0.1, 0}});
  EXPECT_EQ(single[0].rank, 1);
  auto primary = rank_metrics({{"B", 0.9, 0.9, 0}, {"A", 1.0, 0.5, 0}});
  EXPECT_EQ(primary[0].tag, "A");
  EXPECT_EQ(primary[1].rank, 2);
  auto secondary = rank_metrics({{"low", 0.7, 0.6, 0}, {"high", 0.7, 0.8, 0}});
  EXPECT_EQ(secondary[0].tag, "high");
  auto ties = rank_metrics({{"x", 0.7, 0.6, 0}, {"y", 0.7, 0.6, 0}, {"z", 0.7, 0.6, 0}});
  EXPECT_EQ(ties[0].tag, "x");
  EXPECT_EQ(ties[2].tag, "z");
  EXPECT_THROW(rank_metrics({}), RangeError);
}

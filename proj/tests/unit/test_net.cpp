#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "uietl/net/restoration_net.hpp"
#include "uietl/optim.hpp"

using namespace uietl;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(shape));
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform(rng, lo, hi);
  return t;
}

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.levels = 2;
  c.base_channels = 4;
  c.blocks_per_level = {1, 1};
  c.heads_per_level = {1, 2};
  c.reorder_groups = 4;
  c.refinement_blocks = 1;
  return c;
}

// Checks d(sum(weights * f(inputs))) / d input against central differences for
// every listed input tensor.
void expect_gradients(std::vector<Tensor<double>> inputs,
                      const std::function<Var<double>(Graph<double>&, std::vector<Var<double>>&)>& f,
                      double tol = 1e-5) {
  auto evaluate = [&](const std::vector<Tensor<double>>& xs, std::vector<Tensor<double>>* grads) {
    Graph<double> g(grads != nullptr);
    std::vector<Var<double>> vars;
    for (const auto& x : xs) vars.push_back(g.variable(x));
    Var<double> out = f(g, vars);
    Tensor<double> w(out->value.shape());
    Rng rng(77);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = uniform(rng, -1, 1);
    double s = 0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * out->value[i];
    if (grads) {
      g.backward(out, w);
      for (auto* v : vars) grads->push_back(v->has_grad() ? v->grad : Tensor<double>(v->value.shape()));
    }
    return s;
  };
  std::vector<Tensor<double>> analytic;
  evaluate(inputs, &analytic);
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto xs = inputs;
      xs[k][i] += h;
      const double fp = evaluate(xs, nullptr);
      xs[k][i] -= 2 * h;
      const double fm = evaluate(xs, nullptr);
      const double num = (fp - fm) / (2 * h);
      EXPECT_NEAR(analytic[k][i], num, tol * std::max(1.0, std::abs(num))) << "input " << k << " element " << i;
    }
}

}  // namespace

TEST(Shuffle, ShapesAndLayoutOracle) {
  Tensor<double> x = random_tensor({3, 4, 4}, 1);
  const auto u = ops::pixel_unshuffle(x, 2);
  EXPECT_EQ(u.shape(), (std::vector<int>{12, 2, 2}));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int xx = 0; xx < 4; ++xx) {
        const auto d = oracle::unshuffle_destination(c, y, xx, 2, 3);
        EXPECT_EQ(u.at(d.c, d.y, d.x), x.at(c, y, xx));
      }
  EXPECT_EQ(ops::pixel_shuffle(u, 2).shape(), (std::vector<int>{3, 4, 4}));
}

TEST(Shuffle, RoundTripOverRandomShapes) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 1 + static_cast<int>(uniform_index(rng, 6));
    const int r = 2 + static_cast<int>(uniform_index(rng, 2));
    const int h = r * (1 + static_cast<int>(uniform_index(rng, 5)));
    const int w = r * (1 + static_cast<int>(uniform_index(rng, 5)));
    Tensor<double> x = random_tensor({c, h, w}, 100 + trial);
    EXPECT_EQ(ops::pixel_shuffle(ops::pixel_unshuffle(x, r), r).storage(), x.storage());
    Tensor<double> y = random_tensor({c * r * r, h, w}, 200 + trial);
    EXPECT_EQ(ops::pixel_unshuffle(ops::pixel_shuffle(y, r), r).storage(), y.storage());
  }
}

TEST(Shuffle, ConstantStaysConstantAndErrors) {
  FeatureMap<double> f{Tensor<double>(12, 2, 2, 0.25), 1};
  const auto s = pixel_shuffle(f, 2);
  for (std::size_t i = 0; i < s.values.size(); ++i) EXPECT_EQ(s.values[i], 0.25);
  EXPECT_THROW(pixel_unshuffle(FeatureMap<double>{Tensor<double>(3, 5, 4), 0}, 2), AlignmentError);
  EXPECT_THROW(pixel_shuffle(FeatureMap<double>{Tensor<double>(6, 2, 2), 0}, 2), AlignmentError);
}

TEST(ChannelReorder, MatchesGroupTransposeOracle) {
  for (auto [c, g] : {std::pair{8, 4}, std::pair{16, 4}, std::pair{12, 3}}) {
    const auto dest = oracle::group_transpose_positions(c, g);
    for (int k = 0; k < c; ++k) EXPECT_EQ(ops::reorder_destination(k, c, g), dest[static_cast<std::size_t>(k)]);
  }
  for (int k = 0; k < 8; ++k) EXPECT_EQ(ops::reorder_destination(k, 8, 4), (k % 4) * 2 + k / 4);
  Tensor<double> x = random_tensor({8, 2, 3}, 3);
  const auto r = ops::channel_reorder(x, 4);
  for (int k = 0; k < 8; ++k) EXPECT_EQ(r.at((k % 4) * 2 + k / 4, 1, 2), x.at(k, 1, 2));
}

TEST(GatedFeedForward, ZeroInputGivesZeroAndShapeIsKept) {
  const NetworkConfig cfg;
  const auto P = init_network<double>(cfg, 3);
  FeatureMap<double> zero{Tensor<double>(16, 8, 8), 0};
  const auto out = crgfn_forward(zero, P, "enc0.blk0.ffn", cfg.reorder_groups);
  EXPECT_EQ(out.values.shape(), zero.values.shape());
  for (std::size_t i = 0; i < out.values.size(); ++i) EXPECT_EQ(out.values[i], 0.0);
  FeatureMap<double> x{random_tensor({16, 8, 8}, 4), 0};
  EXPECT_EQ(crgfn_forward(x, P, "enc0.blk0.ffn", 4).values.shape(), x.values.shape());
  FeatureMap<double> wrong{random_tensor({8, 8, 8}, 4), 0};
  EXPECT_THROW(crgfn_forward(wrong, P, "enc0.blk0.ffn", 4), ShapeError);
}

TEST(InitNetwork, DeterministicFiniteAndTrainable) {
  const NetworkConfig cfg;
  const auto a = init_network<float>(cfg, 42), b = init_network<float>(cfg, 42);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.digest(), b.digest());
  EXPECT_NE(a.digest(), init_network<float>(cfg, 43).digest());
  for (const auto& [name, e] : a.entries()) {
    EXPECT_TRUE(e.trainable) << name;
    for (float v : e.values) ASSERT_TRUE(std::isfinite(v)) << name;
  }
}

TEST(InitNetwork, ParameterCountMatchesHandCount) {
  const NetworkConfig cfg;  // 4 levels, 16 base channels, [2,2,2,2] blocks, heads [1,2,4,8], gamma 2
  auto conv = [](long cout, long cin, long k) { return cout * cin * k * k + cout; };
  auto block = [&](long c, long heads) {
    const long hidden = 2 * c;
    const long attn = 2 * c + conv(3 * c, c, 1) + conv(3 * c, 1, 3) + heads + conv(c, c, 1);
    const long ffn = 2 * c + conv(hidden, c, 1) + conv(hidden, 1, 3) + conv(c, hidden / 2, 1);
    return attn + ffn;
  };
  const long ch[4] = {16, 32, 64, 128}, heads[4] = {1, 2, 4, 8};
  long expected = conv(16, 3, 3) + conv(3, 16, 3);  // embedding and output head
  for (int l = 0; l < 4; ++l) expected += 2 * block(ch[l], heads[l]);                // encoder
  for (int l = 0; l < 3; ++l) expected += conv(ch[l] / 2, ch[l], 3);                  // downsampling convs
  for (int l = 0; l < 3; ++l) expected += conv(2 * ch[l + 1], ch[l + 1], 3);          // upsampling convs
  for (int l = 0; l < 3; ++l) expected += conv(ch[l], 2 * ch[l], 1);                  // skip fusion
  for (int l = 0; l < 3; ++l) expected += 2 * block(ch[l], heads[l]);                // decoder
  expected += block(16, 1);                                                           // refinement
  EXPECT_EQ(static_cast<long>(init_network<float>(cfg, 1).scalar_count()), expected);
}

TEST(InitNetwork, InvalidConfigs) {
  NetworkConfig c;
  c.heads_per_level = {3, 2, 4, 8};
  EXPECT_THROW(init_network<float>(c, 1), ConfigError);
  c = NetworkConfig{};
  c.levels = 1;
  EXPECT_THROW(init_network<float>(c, 1), ConfigError);
  c = NetworkConfig{};
  c.reorder_groups = 3;
  EXPECT_THROW(init_network<float>(c, 1), ConfigError);
  c = NetworkConfig{};
  c.ffn_expansion = 2.1;
  EXPECT_THROW(init_network<float>(c, 1), ConfigError);
}

TEST(ForwardEnhance, ShapeRangeDeterminismAndAlignment) {
  const NetworkConfig cfg;
  const auto P = init_network<float>(cfg, 7);
  const Image in = testsupport::random_image(64, 64, 9);
  const Image a = forward_enhance(in, P, cfg), b = forward_enhance(in, P, cfg);
  EXPECT_EQ(a.height(), 64);
  EXPECT_EQ(a.width(), 64);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(in_unit_range(a));
  EXPECT_TRUE(all_finite(a));
  EXPECT_THROW(forward_enhance(testsupport::random_image(60, 64, 1), P, cfg), AlignmentError);
}

TEST(ForwardEnhance, IdentityHeadReturnsInput) {
  const NetworkConfig cfg;
  net::InitOptions o;
  o.identity_head = true;
  const auto P = init_network<float>(cfg, 7, o);
  const Image in = testsupport::random_image(16, 16, 9);
  EXPECT_EQ(forward_enhance(in, P, cfg), in);
}

TEST(Attention, RowsOfTheAttentionMapSumToOne) {
  const NetworkConfig cfg;
  const auto P = init_network<double>(cfg, 11);
  FeatureMap<double> x{random_tensor({32, 4, 4}, 12), 1};
  const auto w = attention_weights(x, P, "enc1.blk0.attn", 2);
  const int d = 16;
  ASSERT_EQ(w.size(), static_cast<std::size_t>(2 * d * d));
  for (int row = 0; row < 2 * d; ++row) {
    double s = 0;
    for (int j = 0; j < d; ++j) s += w[static_cast<std::size_t>(row * d + j)];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(OpGradients, ElementwiseAndLayout) {
  expect_gradients({random_tensor({4, 3, 2}, 1)}, [](auto& g, auto& v) { return ops::silu(g, v[0]); });
  expect_gradients({random_tensor({4, 3, 2}, 2)}, [](auto& g, auto& v) { return ops::tanh(g, v[0]); });
  expect_gradients({random_tensor({4, 3, 2}, 3), random_tensor({4, 3, 2}, 4)},
                   [](auto& g, auto& v) { return ops::mul(g, v[0], v[1]); });
  expect_gradients({random_tensor({3, 4, 4}, 5)}, [](auto& g, auto& v) { return ops::pixel_unshuffle(g, v[0], 2); });
  expect_gradients({random_tensor({12, 2, 2}, 6)}, [](auto& g, auto& v) { return ops::pixel_shuffle(g, v[0], 2); });
  expect_gradients({random_tensor({8, 2, 2}, 7)}, [](auto& g, auto& v) { return ops::channel_reorder(g, v[0], 4); });
  expect_gradients({random_tensor({6, 2, 2}, 8)}, [](auto& g, auto& v) { return ops::slice_channels(g, v[0], 2, 3); });
  expect_gradients({random_tensor({2, 2, 2}, 9), random_tensor({3, 2, 2}, 10)},
                   [](auto& g, auto& v) { return ops::concat_channels(g, v[0], v[1]); });
}

TEST(OpGradients, ConvolutionsAndNorm) {
  expect_gradients({random_tensor({3, 5, 4}, 1), random_tensor({4, 3, 3, 3}, 2), random_tensor({4}, 3)},
                   [](auto& g, auto& v) { return ops::conv2d(g, v[0], v[1], v[2], {1, 1, 1}); });
  expect_gradients({random_tensor({3, 6, 6}, 1), random_tensor({2, 3, 3, 3}, 2), random_tensor({2}, 3)},
                   [](auto& g, auto& v) { return ops::conv2d(g, v[0], v[1], v[2], {2, 1, 1}); });
  expect_gradients({random_tensor({3, 4, 4}, 4), random_tensor({5, 3, 1, 1}, 5), random_tensor({5}, 6)},
                   [](auto& g, auto& v) { return ops::conv2d(g, v[0], v[1], v[2], {1, 0, 1}); });
  expect_gradients({random_tensor({4, 4, 3}, 7), random_tensor({4, 1, 3, 3}, 8), random_tensor({4}, 9)},
                   [](auto& g, auto& v) { return ops::conv2d(g, v[0], v[1], v[2], {1, 1, 4}); });
  expect_gradients({random_tensor({5, 3, 3}, 10), random_tensor({5}, 11), random_tensor({5}, 12)},
                   [](auto& g, auto& v) { return ops::layer_norm(g, v[0], v[1], v[2]); });
}

TEST(OpGradients, ChannelAttention) {
  expect_gradients({random_tensor({4, 3, 3}, 1), random_tensor({4, 3, 3}, 2), random_tensor({4, 3, 3}, 3),
                    random_tensor({2}, 4, 0.5, 2.0)},
                   [](auto& g, auto& v) { return ops::channel_attention(g, v[0], v[1], v[2], v[3], 2); });
}

TEST(NetworkGradients, FullForwardMatchesFiniteDifferences) {
  const NetworkConfig cfg = tiny_config();
  auto P = init_network<double>(cfg, 3);
  // Raise the output head so the loss is sensitive to every stage.
  for (auto& v : P.values("head.w")) v *= 10;
  const auto img = testsupport::random_image<double>(8, 8, 4, 0.2, 0.8);
  const auto target = testsupport::random_image<double>(8, 8, 5, 0.2, 0.8);
  auto loss = [&](const ParameterStore<double>& p) {
    const auto out = forward_enhance(img, p, cfg);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += 0.5 * (out[i] - target[i]) * (out[i] - target[i]);
    return s;
  };
  Graph<double> g(true);
  ParamBinder<double> B(g, P);
  Var<double> out = build_forward(B, g.constant(image_to_tensor(img)), cfg);
  Tensor<double> seed(out->value.shape());
  const auto tt = image_to_tensor(target);
  for (std::size_t i = 0; i < seed.size(); ++i) seed[i] = out->value[i] - tt[i];
  g.backward(out, seed);
  auto grads = zero_gradients(P);
  B.collect(grads);
  const double h = 1e-6;
  int checked = 0;
  for (const auto& [name, gvec] : grads) {
    // spot-check three scalars per entry
    for (std::size_t i : {std::size_t{0}, gvec.size() / 2, gvec.size() - 1}) {
      auto q = P;
      q.values(name)[i] += h;
      const double fp = loss(q);
      q.values(name)[i] -= 2 * h;
      const double fm = loss(q);
      const double num = (fp - fm) / (2 * h);
      EXPECT_NEAR(gvec[i], num, 1e-5 * std::max(1.0, std::abs(num))) << name << "[" << i << "]";
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(NetworkGradients, OneStepMovesEveryTrainableEntry) {
  const NetworkConfig cfg;
  auto P = init_network<float>(cfg, 5);
  const auto before = P;
  const Image img = testsupport::random_image(16, 16, 1, 0.2, 0.8);
  const Image target = testsupport::random_image(16, 16, 2, 0.2, 0.8);
  Graph<float> g(true);
  ParamBinder<float> B(g, P);
  Var<float> out = build_forward(B, g.constant(image_to_tensor(img)), cfg);
  Tensor<float> seed(out->value.shape());
  const auto tt = image_to_tensor(target);
  for (std::size_t i = 0; i < seed.size(); ++i) seed[i] = out->value[i] - tt[i];
  g.backward(out, seed);
  auto grads = zero_gradients(P);
  B.collect(grads);
  AdamW<float> opt;
  opt.step(P, grads, 1e-3);
  for (const auto& [name, e] : P.entries()) EXPECT_NE(e.values, before.at(name).values) << name;
}

TEST(Optimizer, ZeroLearningRateLeavesParametersUnchanged) {
  auto P = init_network<float>(NetworkConfig{}, 5);
  const auto before = P;
  auto grads = zero_gradients(P);
  for (auto& [n, g] : grads)
    for (auto& v : g) v = 0.5f;
  AdamW<float> opt;
  opt.step(P, grads, 0.0);
  EXPECT_EQ(P, before);
}

TEST(Optimizer, FrozenEntriesNeverChange) {
  auto P = init_network<float>(NetworkConfig{}, 5);
  P.set_trainable(false);
  const auto before = P;
  auto grads = zero_gradients(P);
  EXPECT_TRUE(grads.empty());
  AdamW<float> opt;
  opt.step(P, grads, 1.0);
  EXPECT_EQ(P, before);
}

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "uietl/image.hpp"
#include "uietl/net/config.hpp"
#include "uietl/ops.hpp"
#include "uietl/params.hpp"
#include "uietl/rng.hpp"

namespace uietl {

/// Activation at one level of the network; `values` is (C, h, w).
template <class T>
struct FeatureMap {
  Tensor<T> values;
  int level = 0;
};

template <class T>
FeatureMap<T> pixel_unshuffle(const FeatureMap<T>& x, int r) {
  return {ops::pixel_unshuffle(x.values, r), x.level + 1};
}

template <class T>
FeatureMap<T> pixel_shuffle(const FeatureMap<T>& x, int r) {
  return {ops::pixel_shuffle(x.values, r), x.level - 1};
}

namespace net {

struct InitOptions {
  // Zero the output head so the untrained network returns its input.
  bool identity_head = false;
  double head_scale = 0.1;
};

template <class T>
class Initializer {
 public:
  Initializer(ParameterStore<T>& store, std::uint64_t seed) : store_(store), rng_(seed) {}

  void conv(const std::string& name, int cout, int cin_per_group, int k, bool bias = true,
            double scale = 1.0) {
    const double bound = scale / std::sqrt(static_cast<double>(cin_per_group * k * k));
    std::vector<T> w(static_cast<std::size_t>(cout) * cin_per_group * k * k);
    for (T& v : w) v = static_cast<T>(uniform(rng_, -bound, bound));
    store_.add(name + ".w", {cout, cin_per_group, k, k}, std::move(w));
    if (bias) store_.add(name + ".b", {cout}, std::vector<T>(static_cast<std::size_t>(cout), T(0)));
  }
  void zero_conv(const std::string& name, int cout, int cin, int k) {
    store_.add(name + ".w", {cout, cin, k, k},
               std::vector<T>(static_cast<std::size_t>(cout) * cin * k * k, T(0)));
    store_.add(name + ".b", {cout}, std::vector<T>(static_cast<std::size_t>(cout), T(0)));
  }
  void norm(const std::string& name, int c) {
    store_.add(name + ".w", {c}, std::vector<T>(static_cast<std::size_t>(c), T(1)));
    store_.add(name + ".b", {c}, std::vector<T>(static_cast<std::size_t>(c), T(0)));
  }
  void constant(const std::string& name, int n, T value) {
    store_.add(name, {n}, std::vector<T>(static_cast<std::size_t>(n), value));
  }

 private:
  ParameterStore<T>& store_;
  Rng rng_;
};

/// Parameters of the gated feed-forward: pre-norm, 1x1 expansion to
/// `hidden` channels, depthwise 3x3, 1x1 projection of hidden/2 back to c.
template <class T>
void add_gated_ffn(Initializer<T>& init, const std::string& p, int c, int hidden) {
  init.norm(p + ".norm", c);
  init.conv(p + ".expand", hidden, c, 1);
  init.conv(p + ".dw", hidden, 1, 3);
  init.conv(p + ".proj", c, hidden / 2, 1);
}

template <class T>
void add_attention(Initializer<T>& init, const std::string& p, int c, int heads) {
  init.norm(p + ".norm", c);
  init.conv(p + ".qkv", 3 * c, c, 1);
  init.conv(p + ".qkv_dw", 3 * c, 1, 3);
  init.constant(p + ".temperature", heads, T(1));
  init.conv(p + ".proj", c, c, 1);
}

template <class T>
void add_block(Initializer<T>& init, const std::string& p, int c, int heads, int hidden) {
  add_attention(init, p + ".attn", c, heads);
  add_gated_ffn(init, p + ".ffn", c, hidden);
}

inline std::string block_name(const std::string& stage, int i) { return stage + ".blk" + std::to_string(i); }
inline std::string enc(int l) { return "enc" + std::to_string(l); }
inline std::string dec(int l) { return "dec" + std::to_string(l); }

// --- forward pieces -------------------------------------------------------

template <class T>
Var<T> conv(ParamBinder<T>& P, Var<T> x, const std::string& name, ops::ConvSpec s = {}) {
  return ops::conv2d(P.graph(), x, P(name + ".w"), P(name + ".b"), s);
}

template <class T>
Var<T> norm(ParamBinder<T>& P, Var<T> x, const std::string& name) {
  return ops::layer_norm(P.graph(), x, P(name + ".w"), P(name + ".b"));
}

/// Gated feed-forward with channel reordering and residual connection:
/// x + proj( a * silu(b) ), where [a | b] = dw3x3( reorder( expand( norm(x) ) ) ).
template <class T>
Var<T> gated_ffn(ParamBinder<T>& P, Var<T> x, const std::string& p, int reorder_groups) {
  auto& g = P.graph();
  Var<T> h = norm(P, x, p + ".norm");
  h = conv(P, h, p + ".expand");
  h = ops::channel_reorder(g, h, reorder_groups);
  const int hidden = h->value.channels();
  h = ops::conv2d(g, h, P(p + ".dw.w"), P(p + ".dw.b"), {1, 1, hidden});
  Var<T> a = ops::slice_channels(g, h, 0, hidden / 2);
  Var<T> b = ops::slice_channels(g, h, hidden / 2, hidden / 2);
  Var<T> gated = ops::mul(g, a, ops::silu(g, b));
  return ops::add(g, x, conv(P, gated, p + ".proj"));
}

template <class T>
Var<T> attention(ParamBinder<T>& P, Var<T> x, const std::string& p, int heads,
                 std::vector<T>* weights_out = nullptr) {
  auto& g = P.graph();
  const int c = x->value.channels();
  Var<T> h = norm(P, x, p + ".norm");
  h = conv(P, h, p + ".qkv");
  h = ops::conv2d(g, h, P(p + ".qkv_dw.w"), P(p + ".qkv_dw.b"), {1, 1, 3 * c});
  Var<T> q = ops::slice_channels(g, h, 0, c);
  Var<T> k = ops::slice_channels(g, h, c, c);
  Var<T> v = ops::slice_channels(g, h, 2 * c, c);
  Var<T> o = ops::channel_attention(g, q, k, v, P(p + ".temperature"), heads, weights_out);
  return ops::add(g, x, conv(P, o, p + ".proj"));
}

template <class T>
Var<T> block(ParamBinder<T>& P, Var<T> x, const std::string& p, int heads, int reorder_groups) {
  x = attention(P, x, p + ".attn", heads);
  return gated_ffn(P, x, p + ".ffn", reorder_groups);
}

}  // namespace net

/// Deterministic initialisation; every entry starts trainable.
template <class T = float>
ParameterStore<T> init_network(const NetworkConfig& cfg, std::uint64_t seed,
                               net::InitOptions opts = {}) {
  cfg.validate();
  ParameterStore<T> store;
  net::Initializer<T> init(store, split_seed(seed, Stream::kInit));
  const int c0 = cfg.base_channels;
  const auto L = cfg.levels;
  init.conv("embed", c0, 3, 3);
  for (int l = 0; l < L; ++l) {
    const int c = cfg.channels_at(l);
    for (int i = 0; i < cfg.blocks_per_level[l]; ++i)
      net::add_block(init, net::block_name(net::enc(l), i), c, cfg.heads_per_level[l], cfg.ffn_channels_at(l));
    if (l + 1 < L) init.conv("down" + std::to_string(l), c / 2, c, 3);
  }
  for (int l = L - 2; l >= 0; --l) {
    const int c = cfg.channels_at(l);
    const int cu = cfg.channels_at(l + 1);
    init.conv("up" + std::to_string(l + 1), 2 * cu, cu, 3);
    init.conv("fuse" + std::to_string(l), c, 2 * c, 1);
    for (int i = 0; i < cfg.blocks_per_level[l]; ++i)
      net::add_block(init, net::block_name(net::dec(l), i), c, cfg.heads_per_level[l], cfg.ffn_channels_at(l));
  }
  for (int i = 0; i < cfg.refinement_blocks; ++i)
    net::add_block(init, net::block_name("refine", i), c0, cfg.heads_per_level[0], cfg.ffn_channels_at(0));
  if (opts.identity_head)
    init.zero_conv("head", 3, c0, 3);
  else
    init.conv("head", 3, c0, 3, true, opts.head_scale);
  return store;
}

/// Builds the full forward graph for one (3, H, W) input. If `encoder_out` is
/// given it receives the encoder activation of every level.
template <class T>
Var<T> build_forward(ParamBinder<T>& P, Var<T> input, const NetworkConfig& cfg,
                     std::vector<Var<T>>* encoder_out = nullptr) {
  auto& g = P.graph();
  const int f = cfg.downsampling();
  if (input->value.height() % f != 0 || input->value.width() % f != 0)
    throw AlignmentError("forward: " + std::to_string(input->value.height()) + "x" +
                         std::to_string(input->value.width()) + " is not divisible by " + std::to_string(f));
  const int r = cfg.shuffle_factor;
  const int L = cfg.levels;
  std::vector<Var<T>> skips;
  Var<T> x = net::conv(P, input, "embed", {1, 1, 1});
  for (int l = 0; l < L; ++l) {
    if (l > 0) x = ops::pixel_unshuffle(g, net::conv(P, x, "down" + std::to_string(l - 1), {1, 1, 1}), r);
    for (int i = 0; i < cfg.blocks_per_level[l]; ++i)
      x = net::block(P, x, net::block_name(net::enc(l), i), cfg.heads_per_level[l], cfg.reorder_groups);
    skips.push_back(x);
  }
  if (encoder_out) *encoder_out = skips;
  for (int l = L - 2; l >= 0; --l) {
    Var<T> up = ops::pixel_shuffle(g, net::conv(P, x, "up" + std::to_string(l + 1), {1, 1, 1}), r);
    x = net::conv(P, ops::concat_channels(g, up, skips[static_cast<std::size_t>(l)]), "fuse" + std::to_string(l));
    for (int i = 0; i < cfg.blocks_per_level[l]; ++i)
      x = net::block(P, x, net::block_name(net::dec(l), i), cfg.heads_per_level[l], cfg.reorder_groups);
  }
  for (int i = 0; i < cfg.refinement_blocks; ++i)
    x = net::block(P, x, net::block_name("refine", i), cfg.heads_per_level[0], cfg.reorder_groups);
  Var<T> residual = net::conv(P, x, "head", {1, 1, 1});
  return ops::clamp_unit(g, ops::add(g, input, residual));
}

/// Inference: enhanced image with the same shape as the input, in [0, 1].
template <class T>
BasicImage<T> forward_enhance(const BasicImage<T>& img, const ParameterStore<T>& params,
                              const NetworkConfig& cfg) {
  Graph<T> g(false);
  ParamBinder<T> P(g, params);
  Var<T> out = build_forward(P, g.constant(image_to_tensor(img)), cfg);
  return tensor_to_image(out->value);
}

/// Encoder activations of every level, for use as a feature extractor.
template <class T>
std::vector<FeatureMap<T>> encoder_features(const BasicImage<T>& img, const ParameterStore<T>& params,
                                            const NetworkConfig& cfg) {
  Graph<T> g(false);
  ParamBinder<T> P(g, params);
  std::vector<Var<T>> enc;
  build_forward(P, g.constant(image_to_tensor(img)), cfg, &enc);
  std::vector<FeatureMap<T>> out;
  for (std::size_t l = 0; l < enc.size(); ++l) out.push_back({enc[l]->value, static_cast<int>(l)});
  return out;
}

/// Runs the gated feed-forward stored under `prefix` on a feature map.
template <class T>
FeatureMap<T> crgfn_forward(const FeatureMap<T>& x, const ParameterStore<T>& params,
                            const std::string& prefix, int reorder_groups) {
  if (params.at(prefix + ".norm.w").values.size() != static_cast<std::size_t>(x.values.channels()))
    throw ShapeError("crgfn_forward: channel count does not match parameters");
  Graph<T> g(false);
  ParamBinder<T> P(g, params);
  Var<T> out = net::gated_ffn(P, g.constant(x.values), prefix, reorder_groups);
  return {out->value, x.level};
}

/// Attention maps of the attention stage stored under `prefix`, one d x d
/// row-major block per head.
template <class T>
std::vector<T> attention_weights(const FeatureMap<T>& x, const ParameterStore<T>& params,
                                 const std::string& prefix, int heads) {
  Graph<T> g(false);
  ParamBinder<T> P(g, params);
  std::vector<T> w;
  net::attention(P, g.constant(x.values), prefix, heads, &w);
  return w;
}

}  // namespace uietl

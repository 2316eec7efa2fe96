#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "uietl/image.hpp"
#include "uietl/net/restoration_net.hpp"
#include "uietl/ops.hpp"
#include "uietl/params.hpp"
#include "uietl/rng.hpp"

namespace uietl {

/// Maps an image to a list of feature layers. `backward` returns the gradient
/// with respect to the image of sum_l <layer_grads[l], phi_l(image)>.
template <class T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string tag() const = 0;
  virtual std::vector<Tensor<T>> extract(const BasicImage<T>& img) const = 0;
  virtual BasicImage<T> backward(const BasicImage<T>& img,
                                 const std::vector<Tensor<T>>& layer_grads) const = 0;
};

template <class T>
class IdentityExtractor final : public FeatureExtractor<T> {
 public:
  std::string tag() const override { return "identity"; }
  std::vector<Tensor<T>> extract(const BasicImage<T>& img) const override { return {image_to_tensor(img)}; }
  BasicImage<T> backward(const BasicImage<T>&, const std::vector<Tensor<T>>& grads) const override {
    if (grads.size() != 1) throw ExtractorError("identity extractor has one layer");
    return tensor_to_image(grads[0]);
  }
};

/// Frozen random convolutional pyramid: stride-2 3x3 convolutions with tanh,
/// widths 3 -> 8 -> 16 -> 32, one feature layer per stage.
template <class T>
class ConvPyramidExtractor final : public FeatureExtractor<T> {
 public:
  static constexpr int kStages = 3;

  explicit ConvPyramidExtractor(std::uint64_t seed = 20240601) {
    Rng rng(split_seed(seed, Stream::kExtractor));
    int cin = 3;
    for (int s = 0; s < kStages; ++s) {
      const int cout = 8 << s;
      const double bound = std::sqrt(3.0 / (cin * 9));
      std::vector<T> w(static_cast<std::size_t>(cout) * cin * 9);
      for (T& v : w) v = static_cast<T>(uniform(rng, -bound, bound));
      std::vector<T> b(static_cast<std::size_t>(cout));
      for (T& v : b) v = static_cast<T>(uniform(rng, -0.1, 0.1));
      params_.add(stage(s) + ".w", {cout, cin, 3, 3}, std::move(w), false);
      params_.add(stage(s) + ".b", {cout}, std::move(b), false);
      cin = cout;
    }
  }

  std::string tag() const override { return "conv-pyramid"; }
  const ParameterStore<T>& parameters() const noexcept { return params_; }

  std::vector<Tensor<T>> extract(const BasicImage<T>& img) const override {
    Graph<T> g(false);
    std::vector<Var<T>> layers = build(g, g.constant(image_to_tensor(img)));
    std::vector<Tensor<T>> out;
    for (Var<T> v : layers) out.push_back(v->value);
    return out;
  }

  BasicImage<T> backward(const BasicImage<T>& img, const std::vector<Tensor<T>>& grads) const override {
    if (grads.size() != kStages) throw ExtractorError("conv pyramid expects one gradient per stage");
    Graph<T> g(true);
    Var<T> in = g.variable(image_to_tensor(img));
    std::vector<Var<T>> layers = build(g, in);
    // Seed all stages at once: the last layer via backward(), the rest by
    // pre-loading their gradient buffers.
    for (int s = 0; s + 1 < kStages; ++s) ops::accumulate(layers[s]->g(), grads[s]);
    g.backward(layers.back(), grads.back());
    return in->has_grad() ? tensor_to_image(in->grad) : BasicImage<T>(img.height(), img.width());
  }

 private:
  static std::string stage(int s) { return "stage" + std::to_string(s); }

  std::vector<Var<T>> build(Graph<T>& g, Var<T> x) const {
    ParamBinder<T> P(g, params_);
    std::vector<Var<T>> out;
    for (int s = 0; s < kStages; ++s) {
      x = ops::tanh(g, ops::conv2d(g, x, P(stage(s) + ".w"), P(stage(s) + ".b"), {2, 1, 1}));
      out.push_back(x);
    }
    return out;
  }

  ParameterStore<T> params_;
};

/// Encoder activations of a restoration network (all levels), parameters frozen.
template <class T>
class EncoderExtractor final : public FeatureExtractor<T> {
 public:
  EncoderExtractor(ParameterStore<T> params, NetworkConfig cfg) : params_(std::move(params)), cfg_(std::move(cfg)) {
    params_.set_trainable(false);
  }
  std::string tag() const override { return "encoder"; }

  std::vector<Tensor<T>> extract(const BasicImage<T>& img) const override {
    std::vector<Tensor<T>> out;
    for (auto& f : encoder_features(img, params_, cfg_)) out.push_back(std::move(f.values));
    return out;
  }

  BasicImage<T> backward(const BasicImage<T>& img, const std::vector<Tensor<T>>& grads) const override {
    Graph<T> g(true);
    ParamBinder<T> P(g, params_);
    Var<T> in = g.variable(image_to_tensor(img));
    std::vector<Var<T>> enc;
    build_forward(P, in, cfg_, &enc);
    if (grads.size() != enc.size()) throw ExtractorError("encoder extractor: layer count mismatch");
    for (std::size_t l = 0; l + 1 < enc.size(); ++l) ops::accumulate(enc[l]->g(), grads[l]);
    g.backward(enc.back(), grads.back());
    return in->has_grad() ? tensor_to_image(in->grad) : BasicImage<T>(img.height(), img.width());
  }

 private:
  ParameterStore<T> params_;
  NetworkConfig cfg_;
};

}  // namespace uietl

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <utility>

#include <unistd.h>

#include "uietl/error.hpp"
#include "uietl/image.hpp"
#include "uietl/image_io.hpp"
#include "uietl/iqa/constants.hpp"
#include "uietl/params.hpp"

namespace uietl::iqa {

/// No-reference quality model used to guide fine-tuning. Parameters are fixed
/// at construction and never mutate.
template <class T>
class QualityScorer {
 public:
  virtual ~QualityScorer() = default;
  virtual std::string tag() const = 0;
  virtual bool differentiable() const = 0;
  virtual const ParameterStore<double>& parameters() const = 0;
  virtual std::pair<double, double> range() const = 0;
  virtual double score(const BasicImage<T>& img) const = 0;

  /// Score and d score / d pixel.
  virtual double score_grad(const BasicImage<T>& img, BasicImage<T>& grad) const {
    (void)img;
    (void)grad;
    throw CapabilityError(tag() + ": scorer is not differentiable");
  }
};

/// Differentiable stand-in for a learned quality model: a weighted sum of
/// smooth contrast, colourfulness and sharpness terms, each mapped through
/// 1 - exp(-c / tau). Range [0, 100); a constant image scores exactly 0.
template <class T>
class ProxyScorer final : public QualityScorer<T> {
 public:
  struct Settings {
    double w_contrast = 0.4, w_colour = 0.3, w_sharp = 0.3;
    double tau_contrast = 0.15, tau_colour = 0.1, tau_sharp = 0.05;
    double eps = 1e-3;
  };

  struct Components {
    double contrast = 0, colourfulness = 0, sharpness = 0;
  };

  explicit ProxyScorer(Settings s = {}) {
    auto put = [&](const std::string& n, std::vector<double> v) {
      const int len = static_cast<int>(v.size());
      params_.add(n, {len}, std::move(v), false);
    };
    put("weights", {s.w_contrast, s.w_colour, s.w_sharp});
    put("scales", {s.tau_contrast, s.tau_colour, s.tau_sharp});
    put("eps", {s.eps});
    for (double v : params_.at("weights").values)
      if (!(v >= 0)) throw ConfigError("proxy scorer: weights must be non-negative");
    for (double v : params_.at("scales").values)
      if (!(v > 0)) throw ConfigError("proxy scorer: scales must be positive");
    if (!(s.eps > 0)) throw ConfigError("proxy scorer: eps must be positive");
  }

  std::string tag() const override { return "proxy"; }
  bool differentiable() const override { return true; }
  const ParameterStore<double>& parameters() const override { return params_; }
  std::pair<double, double> range() const override { return {0.0, 100.0 * weight_sum()}; }

  Components components(const BasicImage<T>& img) const { return evaluate(img, nullptr); }

  double score(const BasicImage<T>& img) const override { return combine(evaluate(img, nullptr), nullptr); }

  double score_grad(const BasicImage<T>& img, BasicImage<T>& grad) const override {
    Partials p;
    const Components c = evaluate(img, &p);
    double dq[3];
    const double q = combine(c, dq);
    grad = BasicImage<T>(img.height(), img.width());
    for (std::size_t i = 0; i < grad.size(); ++i)
      grad[i] = static_cast<T>(dq[0] * p.contrast[i] + dq[1] * p.colour[i] + dq[2] * p.sharp[i]);
    return q;
  }

 private:
  struct Partials {
    std::vector<double> contrast, colour, sharp;
  };

  double weight_sum() const {
    double s = 0;
    for (double v : params_.at("weights").values) s += v;
    return s;
  }

  double combine(const Components& c, double* dq) const {
    const auto& w = params_.at("weights").values;
    const auto& tau = params_.at("scales").values;
    const double v[3] = {c.contrast, c.colourfulness, c.sharpness};
    double q = 0;
    for (int k = 0; k < 3; ++k) {
      const double e = std::exp(-v[k] / tau[k]);
      q += 100.0 * w[k] * (1.0 - e);
      if (dq) dq[k] = 100.0 * w[k] * e / tau[k];
    }
    return q;
  }

  // sqrt(v + eps^2) - eps written without cancellation.
  static double smooth_root(double v, double eps) { return v / (std::sqrt(v + eps * eps) + eps); }

  Components evaluate(const BasicImage<T>& img, Partials* p) const {
    const double eps = params_.at("eps").values[0];
    const int h = img.height(), w = img.width();
    const std::size_t n = static_cast<std::size_t>(h) * w;
    const double N = static_cast<double>(n);
    std::vector<double> Y(n), RG(n), YB(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = img[3 * i], g = img[3 * i + 1], b = img[3 * i + 2];
      Y[i] = constants::kLuma[0] * r + constants::kLuma[1] * g + constants::kLuma[2] * b;
      RG[i] = r - g;
      YB[i] = 0.5 * (r + g) - b;
    }
    auto mean = [&](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x;
      return s / N;
    };
    auto variance = [&](const std::vector<double>& v, double m) {
      double s = 0;
      for (double x : v) s += (x - m) * (x - m);
      return s / N;
    };
    const double my = mean(Y), mrg = mean(RG), myb = mean(YB);
    const double vy = variance(Y, my);
    const double vc = variance(RG, mrg) + variance(YB, myb);
    Components c;
    c.contrast = smooth_root(vy, eps);
    c.colourfulness = smooth_root(vc, eps);

    const int gh = std::max(h - 1, 0), gw = std::max(w - 1, 0);
    const double M = static_cast<double>(gh) * gw;
    std::vector<double> dY;
    if (p) {
      dY.assign(n, 0.0);
      p->contrast.assign(3 * n, 0.0);
      p->colour.assign(3 * n, 0.0);
      p->sharp.assign(3 * n, 0.0);
    }
    double s = 0;
    for (int y = 0; y < gh; ++y)
      for (int x = 0; x < gw; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double dx = Y[i + 1] - Y[i], dy = Y[i + w] - Y[i];
        const double m2 = dx * dx + dy * dy;
        const double root = std::sqrt(m2 + eps * eps);
        s += m2 / (root + eps);
        if (p) {
          const double gx = dx / (M * root), gy = dy / (M * root);
          dY[i + 1] += gx;
          dY[i + w] += gy;
          dY[i] -= gx + gy;
        }
      }
    c.sharpness = M > 0 ? s / M : 0.0;

    if (p) {
      const double dcon = 1.0 / (2.0 * std::sqrt(vy + eps * eps));
      const double dcol = 1.0 / (2.0 * std::sqrt(vc + eps * eps));
      for (std::size_t i = 0; i < n; ++i) {
        const double gy = dcon * 2.0 * (Y[i] - my) / N;
        const double grg = dcol * 2.0 * (RG[i] - mrg) / N;
        const double gyb = dcol * 2.0 * (YB[i] - myb) / N;
        for (int k = 0; k < 3; ++k) {
          p->contrast[3 * i + k] = gy * constants::kLuma[k];
          p->sharp[3 * i + k] = dY[i] * constants::kLuma[k];
        }
        p->colour[3 * i] = grg + 0.5 * gyb;
        p->colour[3 * i + 1] = -grg + 0.5 * gyb;
        p->colour[3 * i + 2] = -gyb;
      }
    }
    return c;
  }

  ParameterStore<double> params_;
};

/// Wraps any image metric as a non-differentiable scorer.
template <class T>
class FunctionScorer final : public QualityScorer<T> {
 public:
  FunctionScorer(std::string tag, std::function<double(const BasicImage<T>&)> fn,
                 std::pair<double, double> range = {-INFINITY, INFINITY})
      : tag_(std::move(tag)), fn_(std::move(fn)), range_(range) {}

  std::string tag() const override { return tag_; }
  bool differentiable() const override { return false; }
  const ParameterStore<double>& parameters() const override { return params_; }
  std::pair<double, double> range() const override { return range_; }
  double score(const BasicImage<T>& img) const override { return fn_(img); }

 private:
  std::string tag_;
  std::function<double(const BasicImage<T>&)> fn_;
  std::pair<double, double> range_;
  ParameterStore<double> params_;
};

/// Adapter for an out-of-process quality model. The image is written to a
/// temporary PNG, "{}" in the command is replaced by its path, and the first
/// number printed on stdout is the score.
template <class T>
class ExternalCommandScorer final : public QualityScorer<T> {
 public:
  ExternalCommandScorer(std::string command, std::pair<double, double> range = {0.0, 100.0})
      : command_(std::move(command)), range_(range) {
    if (command_.find("{}") == std::string::npos) throw ConfigError("external scorer: command needs a {} placeholder");
  }

  std::string tag() const override { return "external"; }
  bool differentiable() const override { return false; }
  const ParameterStore<double>& parameters() const override { return params_; }
  std::pair<double, double> range() const override { return range_; }

  double score(const BasicImage<T>& img) const override {
    namespace fs = std::filesystem;
    static int counter = 0;
    const fs::path tmp = fs::temp_directory_path() /
                         ("uietl_score_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".png");
    save_png(img, tmp);
    std::string cmd = command_;
    cmd.replace(cmd.find("{}"), 2, "'" + tmp.string() + "'");
    std::unique_ptr<FILE, int (*)(FILE*)> pipe(::popen(cmd.c_str(), "r"), ::pclose);
    if (!pipe) throw IoError("external scorer: cannot run command");
    std::string out;
    char buf[256];
    while (std::fgets(buf, sizeof buf, pipe.get())) out += buf;
    const int status = ::pclose(pipe.release());
    std::error_code ec;
    fs::remove(tmp, ec);
    if (status != 0) throw MetricError("external scorer: command exited with status " + std::to_string(status));
    try {
      return std::stod(out);
    } catch (const std::exception&) {
      throw MetricError("external scorer: no numeric output");
    }
  }

 private:
  std::string command_;
  std::pair<double, double> range_;
  ParameterStore<double> params_;
};

}  // namespace uietl::iqa

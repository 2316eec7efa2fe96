#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "uietl/error.hpp"
#include "uietl/params.hpp"

namespace uietl {

/// Cosine annealing from eta_max (step 0) to eta_min (step == total).
inline double cosine_lr(long step, long total, double eta_max, double eta_min) {
  if (total <= 0 || step < 0 || step > total)
    throw RangeError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(total) + "]");
  if (eta_min > eta_max) throw RangeError("cosine_lr: eta_min exceeds eta_max");
  return eta_min +
         0.5 * (eta_max - eta_min) * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total));
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Adaptive moments with decoupled weight decay. Moments are kept in double
/// regardless of the parameter type.
template <class T>
class AdamW {
 public:
  struct Moments {
    std::vector<double> m, v;
  };

  AdamW() = default;
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  const AdamWConfig& config() const noexcept { return cfg_; }
  long step_count() const noexcept { return t_; }
  const std::map<std::string, Moments>& moments() const noexcept { return state_; }

  void restore(long t, std::map<std::string, Moments> state) {
    t_ = t;
    state_ = std::move(state);
  }

  void step(ParameterStore<T>& params, const GradientMap<T>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& [name, g] : grads) {
      const auto& entry = params.at(name);
      if (!entry.trainable) continue;
      auto& st = state_[name];
      if (st.m.empty()) {
        st.m.assign(g.size(), 0.0);
        st.v.assign(g.size(), 0.0);
      }
      auto& p = params.values(name);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * gi;
        st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * gi * gi;
        double pi = static_cast<double>(p[i]);
        pi -= lr * cfg_.weight_decay * pi;
        pi -= lr * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + cfg_.eps);
        p[i] = static_cast<T>(pi);
      }
    }
  }

 private:
  AdamWConfig cfg_;
  long t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace uietl

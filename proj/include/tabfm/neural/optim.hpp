#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "tabfm/core/error.hpp"
#include "tabfm/neural/tensor.hpp"

namespace tabfm::nn {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
  double weight_decay = 0.0;

  static AdamConfig gan() { return {2e-4, 0.5, 0.9, 1e-8, 1e-6}; }
  static AdamConfig vae() { return {1e-3, 0.9, 0.999, 1e-8, 1e-5}; }
};

/// Bias-corrected Adam. Moments are keyed by parameter name and each
/// parameter keeps its own step count, so swapping in freshly initialised
/// head layers starts their correction from step one while the body keeps its
/// history.
template <typename Real>
class Adam {
 public:
  struct Moments {
    std::vector<double> m, v;
    std::size_t step = 0;
  };

  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  void step(const std::vector<Param<Real>*>& params) {
    for (Param<Real>* p : params) {
      if (!p->trainable) continue;
      require(p->grad.same_shape(p->value), ErrorKind::Shape,
              "adam: gradient shape mismatch for " + p->name);
      auto& st = state_[p->name];
      if (st.m.size() != p->value.size()) st = Moments{std::vector<double>(p->value.size(), 0.0),
                                                       std::vector<double>(p->value.size(), 0.0), 0};
      ++st.step;
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.step));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.step));
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        double g = static_cast<double>(p->grad.data[i]);
        if (cfg_.weight_decay != 0.0) g += cfg_.weight_decay * static_cast<double>(p->value.data[i]);
        st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
        st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = st.m[i] / c1;
        const double vhat = st.v[i] / c2;
        p->value.data[i] -= static_cast<Real>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  /// Drops moments for parameters whose names start with `prefix`.
  void forget(const std::string& prefix) {
    for (auto it = state_.begin(); it != state_.end();)
      it = it->first.starts_with(prefix) ? state_.erase(it) : std::next(it);
  }

  const std::map<std::string, Moments>& state() const { return state_; }

 private:
  AdamConfig cfg_;
  std::map<std::string, Moments> state_;
};

}  // namespace tabfm::nn

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "alba/kernels.hpp"
#include "alba/param_store.hpp"

namespace alba {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers exist only for trainable entries;
// frozen entries are never touched, even if someone injected a gradient.
template <class T>
class AdamT {
 public:
  explicit AdamT(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamStoreT<T>& store, T lr) {
    step(store, [lr](const std::string&) { return lr; });
  }

  void step(ParamStoreT<T>& store, const std::function<T(const std::string&)>& lr_for) {
    ++t_;
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T bc1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const T bc2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
    for (auto& [name, e] : store) {
      if (!e.trainable) continue;
      if (!e.tensor.has_grad())
        throw TrainingError("adam_step: missing gradient for trainable parameter '" + name + "'");
      auto& mom = moments_[name];
      std::size_t n = e.tensor.numel();
      if (mom.m.empty()) {
        mom.m.assign(n, T(0));
        mom.v.assign(n, T(0));
      }
      kern::Ops<T>::adam_update(e.tensor.data().data(), e.tensor.grad().data(), mom.m.data(),
                                mom.v.data(), n, lr_for(name), b1, b2, static_cast<T>(cfg_.eps),
                                bc1, bc2);
      e.tensor.drop_grad();
    }
    // moment buffers only for currently-trainable parameters
    for (auto it = moments_.begin(); it != moments_.end();) {
      if (!store.contains(it->first) || !store.trainable(it->first)) it = moments_.erase(it);
      else ++it;
    }
    store.bump();
  }

  std::uint64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<T> m, v;
  };
  std::map<std::string, Moments> moments_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
};

using Adam = AdamT<float>;

// Cosine decay from lr_init to lr_final over decay_steps, constant afterward.
// Written as a lerp so the endpoints and midpoint are exact in double.
inline double cosine_lr(std::uint64_t step, std::uint64_t decay_steps, double lr_init, double lr_final) {
  if (decay_steps < 1) throw ConfigError("cosine_lr: decay_steps must be >= 1");
  double frac = static_cast<double>(std::min(step, decay_steps)) / static_cast<double>(decay_steps);
  double w = 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
  return lr_init * w + lr_final * (1.0 - w);
}

// Global-norm gradient clipping over trainable entries.
template <class T>
double global_grad_norm(const ParamStoreT<T>& store) {
  double acc = 0.0;
  for (const auto& [name, e] : store) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    auto g = e.tensor.grad();
    acc += static_cast<double>(kern::Ops<T>::dot(g.data(), g.data(), g.size()));
  }
  return std::sqrt(acc);
}

template <class T>
void clip_global_norm(ParamStoreT<T>& store, double max_norm) {
  double norm = global_grad_norm(store);
  if (norm <= max_norm || norm == 0.0) return;
  T s = static_cast<T>(max_norm / norm);
  for (auto& [name, e] : store) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    auto g = e.tensor.ensure_grad();
    kern::Ops<T>::scale(g.data(), s, g.data(), g.size());
  }
}

}  // namespace alba

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "holstein/tensor.hpp"

namespace holstein::ad {

struct AdamWHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// AdamW with decoupled weight decay:
///   w <- w - lr*wd*w, then the bias-corrected Adam step on the same lr.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Tensor<T>> params, AdamWHyper hyper) : params_(std::move(params)), hyper_(hyper) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  /// Applies one update at learning rate `lr` (overrides hyper.lr).
  void step(double lr) {
    for (const auto& p : params_)
      if (!p.has_grad()) throw InvalidArgument("adamw_step: parameter has no gradient (run backward first)");
    ++steps_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(steps_));
    const double decay = 1.0 - lr * hyper_.weight_decay;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto w = params_[k].values();
      auto g = params_[k].grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = hyper_.beta1 * m[i] + (1.0 - hyper_.beta1) * gi;
        v[i] = hyper_.beta2 * v[i] + (1.0 - hyper_.beta2) * gi * gi;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        const double updated = static_cast<double>(w[i]) * decay - lr * mhat / (std::sqrt(vhat) + hyper_.eps);
        w[i] = static_cast<T>(updated);
      }
    }
  }
  void step() { step(hyper_.lr); }

  std::size_t steps_taken() const { return steps_; }
  const AdamWHyper& hyper() const { return hyper_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamWHyper hyper_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

template <typename T>
double global_grad_norm(const std::vector<Tensor<T>>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the factor applied (1 when no clipping was needed).
template <typename T>
double clip_gradients(std::vector<Tensor<T>>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (!(norm > max_norm)) return 1.0;
  const double factor = max_norm / norm;
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (T& g : p.grad()) g = static_cast<T>(g * factor);
  }
  return factor;
}

/// Cosine annealing with warm restarts and a linear warm-up at the start of
/// every cycle. One cycle per curriculum stage.
struct LrSchedule {
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  std::size_t warmup_steps = 200;
  std::vector<std::size_t> cycle_lengths;

  std::size_t total_steps() const {
    std::size_t n = 0;
    for (auto c : cycle_lengths) n += c;
    return n;
  }
};

inline double lr_in_cycle(std::size_t local, std::size_t cycle_len, const LrSchedule& s) {
  const std::size_t warmup = cycle_len > 1 ? std::min(s.warmup_steps, cycle_len - 1) : 0;
  if (local < warmup) return s.lr_max * static_cast<double>(local) / static_cast<double>(warmup);
  const std::size_t span = cycle_len - 1 - warmup;
  const double tau = span == 0 ? 0.0 : static_cast<double>(local - warmup) / static_cast<double>(span);
  return s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + std::cos(std::numbers::pi * std::min(tau, 1.0)));
}

/// Learning rate at a global optimizer step. Past the last cycle the rate
/// stays at lr_min.
inline double lr_at(std::size_t step, const LrSchedule& s) {
  std::size_t start = 0;
  for (std::size_t len : s.cycle_lengths) {
    if (len == 0) continue;
    if (step < start + len) return lr_in_cycle(step - start, len, s);
    start += len;
  }
  return s.lr_min;
}

}  // namespace holstein::ad

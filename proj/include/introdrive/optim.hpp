#ifndef INTRODRIVE_OPTIM_HPP
#define INTRODRIVE_OPTIM_HPP

#include <cmath>
#include <vector>

#include "introdrive/layers.hpp"
#include "introdrive/tensor.hpp"

namespace introdrive {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // 0 disables clipping
};

/// Adam over a ParamStore, with optional global-norm gradient clipping.
/// The optimizer is the single writer of parameter buffers.
class Adam {
 public:
  Adam(ParamStore& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
    for (const auto& [_, t] : params_.items()) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }

  /// Consume gradients of a finished backward pass and update parameters.
  void step(const Tape& tape) {
    std::vector<std::vector<double>> grads;
    grads.reserve(params_.count());
    double sq_norm = 0.0;
    for (const auto& [_, t] : params_.items()) {
      grads.push_back(tape.grad(t));
      for (double g : grads.back()) sq_norm += g * g;
    }
    const double norm = std::sqrt(sq_norm);
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t p = 0; p < grads.size(); ++p) {
      double* w = params_.items()[p].second.mutable_data();
      auto& m = m_[p];
      auto& v = v_[p];
      const auto& g = grads[p];
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double gi = g[i] * scale;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        w[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
      }
    }
    last_grad_norm_ = norm;
  }

  double last_grad_norm() const { return last_grad_norm_; }
  long steps() const { return t_; }

 private:
  ParamStore& params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
  double last_grad_norm_ = 0.0;
};

}  // namespace introdrive

#endif

#pragma once

#include <cmath>
#include <vector>

#include "ias/ad/tape.hpp"

namespace ias::ad {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
};

// Adam over an ordered parameter list. The list order must be identical on
// every step (modules enumerate their parameters deterministically).
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  long steps() const { return steps_; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

  // Applies one update from the accumulated gradients and zeroes them.
  // Returns the pre-clip global gradient norm.
  double step(const std::vector<Parameter<T>*>& params) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    require(m_.size() == params.size(), "Adam: parameter list changed between steps");
    double sq = 0.0;
    for (auto* p : params) sq += static_cast<double>(p->grad.squaredNorm());
    const double norm = std::sqrt(sq);
    T factor = T(1);
    if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) factor = static_cast<T>(cfg_.clip_norm / norm);
    ++steps_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    const T lr = static_cast<T>(cfg_.learning_rate * std::sqrt(bc2) / bc1);
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T eps = static_cast<T>(cfg_.epsilon * std::sqrt(bc2));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter<T>& p = *params[i];
      require(p.grad.rows() == m_[i].rows() && p.grad.cols() == m_[i].cols(),
              "Adam: parameter shape changed between steps");
      auto g = (p.grad.array() * factor);
      m_[i].array() = b1 * m_[i].array() + (T(1) - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (T(1) - b2) * g.square();
      p.value.array() -= lr * m_[i].array() / (v_[i].array().sqrt() + eps);
      p.zero_grad();
    }
    return norm;
  }

 private:
  AdamConfig cfg_;
  long steps_ = 0;
  std::vector<Matrix<T>> m_, v_;
};

template <class T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

template <class T>
bool all_finite(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params)
    if (!p->value.allFinite()) return false;
  return true;
}

}  // namespace ias::ad

#include "core/optim.hpp"

#include <cmath>

namespace seqnav {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0f);
    v_.emplace_back(p.size(), 0.0f);
  }
}

bool AdamW::step() {
  for (Tensor& p : params_) {
    for (float g : p.grad()) {
      if (!std::isfinite(g)) {
        ++skipped_;
        return false;
      }
    }
  }
  ++step_count_;
  const float t = static_cast<float>(step_count_);
  const float bc1 = 1.0f - std::pow(cfg_.beta1, t);
  const float bc2 = 1.0f - std::pow(cfg_.beta2, t);
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    auto vals = p.values_mut();
    auto grads = p.grad();
    for (size_t j = 0; j < vals.size(); ++j) {
      const float g = grads[j];
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0f - cfg_.beta1) * g;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0f - cfg_.beta2) * g * g;
      const float mhat = m_[i][j] / bc1;
      const float vhat = v_[i][j] / bc2;
      // Decoupled decay: applied to the weight, not the gradient.
      vals[j] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * vals[j]);
    }
  }
  return true;
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

float clip_grad_norm(const std::vector<Tensor>& params, float max_norm) {
  double total = 0.0;
  for (const Tensor& p : params) {
    for (float g : p.grad()) total += static_cast<double>(g) * g;
  }
  const float norm = static_cast<float>(std::sqrt(total));
  if (norm > max_norm && norm > 0.0f) {
    const float s = max_norm / norm;
    for (const Tensor& p : params) {
      Tensor t = p;
      auto n = t.node();
      for (float& g : n->grad) g *= s;
    }
  }
  return norm;
}

}  // namespace seqnav

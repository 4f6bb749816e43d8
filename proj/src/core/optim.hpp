#pragma once

#include <cstdint>
#include <vector>

#include "core/tensor.hpp"

namespace seqnav {

struct AdamWConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.01f;
};

// AdamW with decoupled weight decay. A step with any non-finite gradient is
// skipped entirely and counted.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);

  // Applies one update from the parameters' current gradients.
  // Returns false when the step was skipped.
  bool step();

  void zero_grad();

  uint64_t step_count() const { return step_count_; }
  uint64_t skipped_steps() const { return skipped_; }

  const std::vector<Tensor>& params() const { return params_; }

  // Moment access for checkpointing; shaped like the parameter at the
  // same index.
  std::vector<float>& first_moment(size_t i) { return m_[i]; }
  std::vector<float>& second_moment(size_t i) { return v_[i]; }
  void set_step_count(uint64_t n) { step_count_ = n; }

 private:
  std::vector<Tensor> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  uint64_t step_count_ = 0;
  uint64_t skipped_ = 0;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
float clip_grad_norm(const std::vector<Tensor>& params, float max_norm);

}  // namespace seqnav

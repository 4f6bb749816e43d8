#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "core/rng.hpp"

namespace seqnav {

using Shape = std::vector<int>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Additive mask sentinel for blocked attention positions. Large enough that
// exp() underflows to exactly 0 in float32; a post-softmax zeroing pass
// asserts the contract anyway.
constexpr float kMaskBlocked = -1e9f;

struct TensorNode {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // allocated on demand, same extent as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backprop;  // accumulates this->grad into parents

  bool is_leaf() const { return !backprop; }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
  }
};

// Reverse-mode autodiff tensor: float32 values plus a computation-graph link.
// Copying a Tensor aliases the same node. Rank 1 and rank 2 cover everything
// the model needs; a scalar is shape {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float v);
  static Tensor from(Shape shape, std::vector<float> data, bool requires_grad = false);
  static Tensor scalar(float v);
  // Learnable parameter, truncated-normal init (resampled beyond 2 sigma).
  static Tensor param(Shape shape, RngStream& rng, float stddev);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return static_cast<int64_t>(node_->value.size()); }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  // Rank-2 view helpers; a rank-1 tensor acts as a single row.
  int rows() const { return rank() == 2 ? node_->shape[0] : 1; }
  int cols() const { return rank() == 2 ? node_->shape[1] : node_->shape[0]; }

  std::span<const float> values() const { return node_->value; }
  std::span<float> values_mut() { return node_->value; }
  std::span<const float> grad() const;
  float item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor detach() const;  // same values, cut from the graph
  void zero_grad();

  // Reverse pass from a scalar. Visits each reachable node once in reverse
  // topological order; leaf gradients accumulate across calls, interior
  // gradients are reset at the start of every call.
  void backward() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Thread-local gradient mode. Ops executed while a NoGradGuard is alive do
// not record the graph (forward values only).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);
Tensor add_scalar(const Tensor& a, float c);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
// Natural log; inputs floored at 1e-12.
Tensor log(const Tensor& a);

// ---- linear algebra ----
// C = A * B, A [m x k], B [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
// C = A * B^T, A [m x k], B [n x k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// y = x * W + b, x rank-1 [din] or rank-2 [m x din]; W [din x dout], b [dout].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// ---- attention / normalization ----
// Row-wise softmax of (logits + mask). Mask entries are 0 (attendable) or
// kMaskBlocked; blocked outputs are exactly 0 and receive zero gradient.
// Mask is either the same shape as logits or rank-1 broadcast across rows.
// A fully blocked row is rejected.
Tensor masked_softmax(const Tensor& logits, const Tensor& mask);
Tensor softmax(const Tensor& logits);
// Normalizes the last dimension; gamma/beta rank-1 [n].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);

// ---- reductions ----
// Column-wise mean: [m x n] -> [n]; gradient distributes 1/m per element.
Tensor mean_over_rows(const Tensor& x);
// Sum of all elements -> scalar.
Tensor sum(const Tensor& x);

// ---- losses ----
// -log softmax(logits)[target]; logits rank-1 [n].
Tensor cross_entropy(const Tensor& logits, int target);
// Mean of per-row cross entropies; logits [m x n], targets length m.
Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> targets);
// -(t log p + (1-t) log(1-p)); p is a scalar probability, clamped to
// [1e-7, 1 - 1e-7] with the clamp counted (see bce_clamp_count).
Tensor binary_cross_entropy(const Tensor& p, float target);
uint64_t bce_clamp_count();

// ---- structure ----
// Gathers rows of table [V x d] at ids; gradient scatter-adds into table.
Tensor embedding(const Tensor& table, std::span<const int> ids);
Tensor select_row(const Tensor& x, int row);          // [m x n] -> [n]
Tensor concat_rows(std::span<const Tensor> parts);    // stack as rows
Tensor concat_cols(std::span<const Tensor> parts);    // join last dims
Tensor slice_cols(const Tensor& x, int c0, int c1);   // [.. x n] -> [.. x (c1-c0)]
Tensor tile_rows(const Tensor& x, int m);             // [n] -> [m x n]
Tensor flatten(const Tensor& x);                      // reshape to rank 1
Tensor add_row_broadcast(const Tensor& x, const Tensor& v);  // x[i,:] += v

// Writes "msg" to stderr when SEQNAV_LOG=debug.
void debug_log(const std::string& msg);

}  // namespace seqnav

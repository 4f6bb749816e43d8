#include "core/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <stdexcept>
#include <unordered_set>

namespace seqnav {

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += " x ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

thread_local int g_no_grad_depth = 0;
std::atomic<uint64_t> g_bce_clamps{0};

std::shared_ptr<TensorNode> make_node(Shape shape) {
  if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor: nonpositive extent in " + shape_str(shape));
  }
  auto n = std::make_shared<TensorNode>();
  n->value.assign(static_cast<size_t>(numel(shape)), 0.0f);
  n->shape = std::move(shape);
  return n;
}

// Links the result into the graph when gradients are being recorded and at
// least one parent needs them.
template <typename Fn>
Tensor finish(std::shared_ptr<TensorNode> out,
              std::initializer_list<Tensor> parents, Fn&& make_backprop) {
  if (grad_enabled()) {
    bool needs = false;
    for (const Tensor& p : parents) needs = needs || p.node()->requires_grad;
    if (needs) {
      out->requires_grad = true;
      for (const Tensor& p : parents) out->parents.push_back(p.node());
      out->backprop = make_backprop(out.get());
    }
  }
  return Tensor(std::move(out));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch: " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <typename FwdFn, typename DerivFn>
Tensor unary_elementwise(const Tensor& a, FwdFn fwd, DerivFn dfn) {
  auto out = make_node(a.shape());
  const auto& av = a.node()->value;
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = fwd(av[i]);
  TensorNode* an = a.node().get();
  return finish(out, {a}, [an, dfn](TensorNode* o) {
    return [an, o, dfn]() {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (size_t i = 0; i < o->value.size(); ++i) {
        an->grad[i] += o->grad[i] * dfn(an->value[i], o->value[i]);
      }
    };
  });
}

}  // namespace

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

uint64_t bce_clamp_count() { return g_bce_clamps.load(); }

void debug_log(const std::string& msg) {
  static const bool enabled = []() {
    const char* v = std::getenv("SEQNAV_LOG");
    return v != nullptr && std::string(v) == "debug";
  }();
  if (enabled) std::cerr << "[seqnav debug] " << msg << "\n";
}

// ---- Tensor basics ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = make_node(std::move(shape));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, float v) {
  auto n = make_node(std::move(shape));
  std::fill(n->value.begin(), n->value.end(), v);
  return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<float> data, bool requires_grad) {
  auto n = make_node(std::move(shape));
  if (static_cast<int64_t>(data.size()) != numel(n->shape)) {
    throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(n->shape));
  }
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(float v) { return full({1}, v); }

Tensor Tensor::param(Shape shape, RngStream& rng, float stddev) {
  auto n = make_node(std::move(shape));
  for (float& x : n->value) x = rng.truncated_normal(stddev);
  n->requires_grad = true;
  return Tensor(std::move(n));
}

std::span<const float> Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

float Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item: tensor has " + std::to_string(size()) + " elements");
  return node_->value[0];
}

Tensor Tensor::detach() const {
  auto n = make_node(node_->shape);
  n->value = node_->value;
  return Tensor(std::move(n));
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

void Tensor::backward() const {
  if (size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got " + shape_str(shape()));
  }
  // Iterative DFS post-order; deterministic given the graph.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  struct Frame {
    TensorNode* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  if (node_->requires_grad || node_->is_leaf()) {
    stack.push_back({node_.get(), 0});
    seen.insert(node_.get());
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  // Interior gradients are reset each pass; leaf gradients accumulate.
  for (TensorNode* n : order) {
    if (n->is_leaf()) {
      n->ensure_grad();
    } else {
      n->grad.assign(n->value.size(), 0.0f);
    }
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop();
  }
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  auto out = make_node(a.shape());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + bv[i];
  TensorNode* an = a.node().get();
  TensorNode* bn = b.node().get();
  return finish(out, {a, b}, [an, bn](TensorNode* o) {
    return [an, bn, o]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] += o->grad[i];
      }
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  auto out = make_node(a.shape());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] - bv[i];
  TensorNode* an = a.node().get();
  TensorNode* bn = b.node().get();
  return finish(out, {a, b}, [an, bn](TensorNode* o) {
    return [an, bn, o]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] -= o->grad[i];
      }
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  auto out = make_node(a.shape());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * bv[i];
  TensorNode* an = a.node().get();
  TensorNode* bn = b.node().get();
  return finish(out, {a, b}, [an, bn](TensorNode* o) {
    return [an, bn, o]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] += o->grad[i] * an->value[i];
      }
    };
  });
}

Tensor scale(const Tensor& a, float c) {
  return unary_elementwise(
      a, [c](float x) { return x * c; }, [c](float, float) { return c; });
}

Tensor add_scalar(const Tensor& a, float c) {
  return unary_elementwise(
      a, [c](float x) { return x + c; }, [](float, float) { return 1.0f; });
}

Tensor tanh(const Tensor& a) {
  return unary_elementwise(
      a, [](float x) { return std::tanh(x); },
      [](float, float y) { return 1.0f - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_elementwise(
      a, [](float x) { return 1.0f / (1.0f + std::exp(-x)); },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      a, [](float x) { return x > 0.0f ? x : 0.0f; },
      [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor log(const Tensor& a) {
  return unary_elementwise(
      a, [](float x) { return std::log(std::max(x, 1e-12f)); },
      [](float x, float) { return 1.0f / std::max(x, 1e-12f); });
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  auto out = make_node({m, n});
  const float* av = a.node()->value.data();
  const float* bv = b.node()->value.data();
  float* cv = out->value.data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const float aip = av[i * k + p];
      const float* brow = bv + p * n;
      float* crow = cv + i * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  TensorNode* an = a.node().get();
  TensorNode* bn = b.node().get();
  return finish(out, {a, b}, [an, bn, m, k, n](TensorNode* o) {
    return [an, bn, o, m, k, n]() {
      const float* g = o->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();  // dA += dC * B^T
        for (int i = 0; i < m; ++i) {
          for (int p = 0; p < k; ++p) {
            float acc = 0.0f;
            const float* grow = g + i * n;
            const float* brow = bn->value.data() + p * n;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            an->grad[i * k + p] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();  // dB += A^T * dC
        for (int i = 0; i < m; ++i) {
          const float* arow = an->value.data() + i * k;
          const float* grow = g + i * n;
          for (int p = 0; p < k; ++p) {
            const float aip = arow[p];
            float* brow = bn->grad.data() + p * n;
            for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
          }
        }
      }
    };
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[1]) {
    throw std::invalid_argument("matmul_nt: incompatible shapes " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  auto out = make_node({m, n});
  const float* av = a.node()->value.data();
  const float* bv = b.node()->value.data();
  for (int i = 0; i < m; ++i) {
    const float* arow = av + i * k;
    for (int j = 0; j < n; ++j) {
      const float* brow = bv + j * k;
      float acc = 0.0f;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out->value[i * n + j] = acc;
    }
  }
  TensorNode* an = a.node().get();
  TensorNode* bn = b.node().get();
  return finish(out, {a, b}, [an, bn, m, k, n](TensorNode* o) {
    return [an, bn, o, m, k, n]() {
      const float* g = o->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();  // dA += dC * B
        for (int i = 0; i < m; ++i) {
          const float* grow = g + i * n;
          float* arow = an->grad.data() + i * k;
          for (int j = 0; j < n; ++j) {
            const float gij = grow[j];
            const float* brow = bn->value.data() + j * k;
            for (int p = 0; p < k; ++p) arow[p] += gij * brow[p];
          }
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();  // dB += dC^T * A
        for (int i = 0; i < m; ++i) {
          const float* grow = g + i * n;
          const float* arow = an->value.data() + i * k;
          for (int j = 0; j < n; ++j) {
            const float gij = grow[j];
            float* brow = bn->grad.data() + j * k;
            for (int p = 0; p < k; ++p) brow[p] += gij * arow[p];
          }
        }
      }
    };
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.shape()[0] != weight.shape()[1]) {
    throw std::invalid_argument("linear: weight " + shape_str(weight.shape()) +
                                " and bias " + shape_str(bias.shape()) + " disagree");
  }
  const int din = weight.shape()[0], dout = weight.shape()[1];
  if (x.cols() != din) {
    throw std::invalid_argument("linear: input " + shape_str(x.shape()) +
                                " does not match weight " + shape_str(weight.shape()));
  }
  const int m = x.rows();
  auto out = make_node(x.rank() == 1 ? Shape{dout} : Shape{m, dout});
  const float* xv = x.node()->value.data();
  const float* wv = weight.node()->value.data();
  const float* bv = bias.node()->value.data();
  for (int i = 0; i < m; ++i) {
    float* orow = out->value.data() + i * dout;
    for (int j = 0; j < dout; ++j) orow[j] = bv[j];
    const float* xrow = xv + i * din;
    for (int p = 0; p < din; ++p) {
      const float xp = xrow[p];
      const float* wrow = wv + p * dout;
      for (int j = 0; j < dout; ++j) orow[j] += xp * wrow[j];
    }
  }
  TensorNode* xn = x.node().get();
  TensorNode* wn = weight.node().get();
  TensorNode* bn = bias.node().get();
  return finish(out, {x, weight, bias}, [xn, wn, bn, m, din, dout](TensorNode* o) {
    return [xn, wn, bn, o, m, din, dout]() {
      const float* g = o->grad.data();
      if (xn->requires_grad) {
        xn->ensure_grad();  // dx += g * W^T
        for (int i = 0; i < m; ++i) {
          const float* grow = g + i * dout;
          float* xrow = xn->grad.data() + i * din;
          for (int p = 0; p < din; ++p) {
            const float* wrow = wn->value.data() + p * dout;
            float acc = 0.0f;
            for (int j = 0; j < dout; ++j) acc += grow[j] * wrow[j];
            xrow[p] += acc;
          }
        }
      }
      if (wn->requires_grad) {
        wn->ensure_grad();  // dW += x^T * g
        for (int i = 0; i < m; ++i) {
          const float* xrow = xn->value.data() + i * din;
          const float* grow = g + i * dout;
          for (int p = 0; p < din; ++p) {
            const float xp = xrow[p];
            float* wrow = wn->grad.data() + p * dout;
            for (int j = 0; j < dout; ++j) wrow[j] += xp * grow[j];
          }
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int i = 0; i < m; ++i) {
          const float* grow = g + i * dout;
          for (int j = 0; j < dout; ++j) bn->grad[j] += grow[j];
        }
      }
    };
  });
}

// ---- attention / normalization ----

Tensor masked_softmax(const Tensor& logits, const Tensor& mask) {
  const int n = logits.cols();
  const int m = logits.rows();
  const bool mask_broadcast = mask.rank() == 1;
  if (mask_broadcast) {
    if (mask.shape()[0] != n) {
      throw std::invalid_argument("masked_softmax: mask " + shape_str(mask.shape()) +
                                  " does not cover logits " + shape_str(logits.shape()));
    }
  } else {
    check_same_shape("masked_softmax", logits, mask);
  }
  auto out = make_node(logits.shape());
  const float* lv = logits.node()->value.data();
  const float* mv = mask.node()->value.data();
  for (int i = 0; i < m; ++i) {
    const float* lrow = lv + i * n;
    const float* mrow = mask_broadcast ? mv : mv + i * n;
    float* orow = out->value.data() + i * n;
    float maxv = -std::numeric_limits<float>::infinity();
    bool any = false;
    for (int j = 0; j < n; ++j) {
      if (mrow[j] > kMaskBlocked / 2) {
        any = true;
        maxv = std::max(maxv, lrow[j] + mrow[j]);
      }
    }
    if (!any) {
      throw std::invalid_argument("masked_softmax: fully masked row " + std::to_string(i));
    }
    float total = 0.0f;
    for (int j = 0; j < n; ++j) {
      const float e = mrow[j] > kMaskBlocked / 2 ? std::exp(lrow[j] + mrow[j] - maxv) : 0.0f;
      orow[j] = e;
      total += e;
    }
    const float inv = 1.0f / total;
    for (int j = 0; j < n; ++j) {
      // Blocked positions are exactly zero by contract.
      orow[j] = mrow[j] > kMaskBlocked / 2 ? orow[j] * inv : 0.0f;
    }
  }
  TensorNode* ln = logits.node().get();
  return finish(out, {logits}, [ln, m, n](TensorNode* o) {
    return [ln, o, m, n]() {
      if (!ln->requires_grad) return;
      ln->ensure_grad();
      for (int i = 0; i < m; ++i) {
        const float* p = o->value.data() + i * n;
        const float* g = o->grad.data() + i * n;
        float dot = 0.0f;
        for (int j = 0; j < n; ++j) dot += p[j] * g[j];
        float* lg = ln->grad.data() + i * n;
        for (int j = 0; j < n; ++j) lg[j] += p[j] * (g[j] - dot);
      }
    };
  });
}

Tensor softmax(const Tensor& logits) {
  return masked_softmax(logits, Tensor::zeros({logits.cols()}));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const int n = x.cols();
  const int m = x.rows();
  if (gamma.rank() != 1 || beta.rank() != 1 || gamma.shape()[0] != n || beta.shape()[0] != n) {
    throw std::invalid_argument("layer_norm: gamma/beta must be rank-1 of extent " + std::to_string(n));
  }
  auto out = make_node(x.shape());
  const float* xv = x.node()->value.data();
  const float* gv = gamma.node()->value.data();
  const float* bv = beta.node()->value.data();
  std::vector<float> mean(m), inv_std(m);
  for (int i = 0; i < m; ++i) {
    const float* xrow = xv + i * n;
    float mu = 0.0f;
    for (int j = 0; j < n; ++j) mu += xrow[j];
    mu /= static_cast<float>(n);
    float var = 0.0f;
    for (int j = 0; j < n; ++j) var += (xrow[j] - mu) * (xrow[j] - mu);
    var /= static_cast<float>(n);
    const float is = 1.0f / std::sqrt(var + eps);
    mean[i] = mu;
    inv_std[i] = is;
    float* orow = out->value.data() + i * n;
    for (int j = 0; j < n; ++j) orow[j] = gv[j] * (xrow[j] - mu) * is + bv[j];
  }
  TensorNode* xn = x.node().get();
  TensorNode* gn = gamma.node().get();
  TensorNode* bn = beta.node().get();
  return finish(out, {x, gamma, beta},
                [xn, gn, bn, m, n, mean, inv_std](TensorNode* o) {
    return [xn, gn, bn, o, m, n, mean, inv_std]() {
      for (int i = 0; i < m; ++i) {
        const float* xrow = xn->value.data() + i * n;
        const float* g = o->grad.data() + i * n;
        const float mu = mean[i];
        const float is = inv_std[i];
        if (gn->requires_grad || bn->requires_grad) {
          if (gn->requires_grad) gn->ensure_grad();
          if (bn->requires_grad) bn->ensure_grad();
          for (int j = 0; j < n; ++j) {
            const float xhat = (xrow[j] - mu) * is;
            if (gn->requires_grad) gn->grad[j] += g[j] * xhat;
            if (bn->requires_grad) bn->grad[j] += g[j];
          }
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          float sum_dxhat = 0.0f, sum_dxhat_xhat = 0.0f;
          for (int j = 0; j < n; ++j) {
            const float dxhat = g[j] * gn->value[j];
            const float xhat = (xrow[j] - mu) * is;
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
          }
          float* xg = xn->grad.data() + i * n;
          const float invn = 1.0f / static_cast<float>(n);
          for (int j = 0; j < n; ++j) {
            const float dxhat = g[j] * gn->value[j];
            const float xhat = (xrow[j] - mu) * is;
            xg[j] += is * (dxhat - invn * sum_dxhat - xhat * invn * sum_dxhat_xhat);
          }
        }
      }
    };
  });
}

// ---- reductions ----

Tensor mean_over_rows(const Tensor& x) {
  if (x.rows() == 0) throw std::invalid_argument("mean_over_rows: empty axis");
  const int m = x.rows(), n = x.cols();
  auto out = make_node({n});
  const float* xv = x.node()->value.data();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out->value[j] += xv[i * n + j];
  }
  const float invm = 1.0f / static_cast<float>(m);
  for (int j = 0; j < n; ++j) out->value[j] *= invm;
  TensorNode* xn = x.node().get();
  return finish(out, {x}, [xn, m, n, invm](TensorNode* o) {
    return [xn, o, m, n, invm]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) xn->grad[i * n + j] += o->grad[j] * invm;
      }
    };
  });
}

Tensor sum(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("sum: empty tensor");
  auto out = make_node({1});
  for (float v : x.node()->value) out->value[0] += v;
  TensorNode* xn = x.node().get();
  return finish(out, {x}, [xn](TensorNode* o) {
    return [xn, o]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += o->grad[0];
    };
  });
}

// ---- losses ----

Tensor cross_entropy(const Tensor& logits, int target) {
  if (logits.rank() != 1) {
    throw std::invalid_argument("cross_entropy: logits must be rank-1, got " + shape_str(logits.shape()));
  }
  const int n = logits.shape()[0];
  if (target < 0 || target >= n) {
    throw std::invalid_argument("cross_entropy: target " + std::to_string(target) +
                                " out of range [0, " + std::to_string(n) + ")");
  }
  const float* lv = logits.node()->value.data();
  float maxv = lv[0];
  for (int j = 1; j < n; ++j) maxv = std::max(maxv, lv[j]);
  float total = 0.0f;
  for (int j = 0; j < n; ++j) total += std::exp(lv[j] - maxv);
  auto out = make_node({1});
  out->value[0] = std::log(total) - (lv[target] - maxv);
  TensorNode* ln = logits.node().get();
  return finish(out, {logits}, [ln, n, target, maxv, total](TensorNode* o) {
    return [ln, o, n, target, maxv, total]() {
      if (!ln->requires_grad) return;
      ln->ensure_grad();
      const float g = o->grad[0];
      for (int j = 0; j < n; ++j) {
        const float p = std::exp(ln->value[j] - maxv) / total;
        ln->grad[j] += g * (p - (j == target ? 1.0f : 0.0f));
      }
    };
  });
}

Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || static_cast<size_t>(logits.rows()) != targets.size()) {
    throw std::invalid_argument("cross_entropy_rows: logits " + shape_str(logits.shape()) +
                                " vs " + std::to_string(targets.size()) + " targets");
  }
  const int m = logits.rows(), n = logits.cols();
  std::vector<int> tgt(targets.begin(), targets.end());
  for (int t : tgt) {
    if (t < 0 || t >= n) {
      throw std::invalid_argument("cross_entropy_rows: target " + std::to_string(t) +
                                  " out of range [0, " + std::to_string(n) + ")");
    }
  }
  auto out = make_node({1});
  const float* lv = logits.node()->value.data();
  std::vector<float> maxs(m), totals(m);
  for (int i = 0; i < m; ++i) {
    const float* row = lv + i * n;
    float maxv = row[0];
    for (int j = 1; j < n; ++j) maxv = std::max(maxv, row[j]);
    float total = 0.0f;
    for (int j = 0; j < n; ++j) total += std::exp(row[j] - maxv);
    maxs[i] = maxv;
    totals[i] = total;
    out->value[0] += std::log(total) - (row[tgt[i]] - maxv);
  }
  out->value[0] /= static_cast<float>(m);
  TensorNode* ln = logits.node().get();
  return finish(out, {logits}, [ln, m, n, tgt, maxs, totals](TensorNode* o) {
    return [ln, o, m, n, tgt, maxs, totals]() {
      if (!ln->requires_grad) return;
      ln->ensure_grad();
      const float g = o->grad[0] / static_cast<float>(m);
      for (int i = 0; i < m; ++i) {
        const float* row = ln->value.data() + i * n;
        float* grow = ln->grad.data() + i * n;
        for (int j = 0; j < n; ++j) {
          const float p = std::exp(row[j] - maxs[i]) / totals[i];
          grow[j] += g * (p - (j == tgt[i] ? 1.0f : 0.0f));
        }
      }
    };
  });
}

Tensor binary_cross_entropy(const Tensor& p, float target) {
  if (p.size() != 1) {
    throw std::invalid_argument("binary_cross_entropy: probability must be a scalar");
  }
  if (target < 0.0f || target > 1.0f) {
    throw std::invalid_argument("binary_cross_entropy: target " + std::to_string(target) +
                                " outside [0, 1]");
  }
  constexpr float kEps = 1e-7f;
  float pv = p.node()->value[0];
  if (pv < kEps || pv > 1.0f - kEps) {
    g_bce_clamps.fetch_add(1);
    debug_log("binary_cross_entropy: clamped probability " + std::to_string(pv));
    pv = std::min(std::max(pv, kEps), 1.0f - kEps);
  }
  auto out = make_node({1});
  out->value[0] = -(target * std::log(pv) + (1.0f - target) * std::log(1.0f - pv));
  TensorNode* pn = p.node().get();
  return finish(out, {p}, [pn, pv, target](TensorNode* o) {
    return [pn, o, pv, target]() {
      if (!pn->requires_grad) return;
      pn->ensure_grad();
      pn->grad[0] += o->grad[0] * (-(target / pv) + (1.0f - target) / (1.0f - pv));
    };
  });
}

// ---- structure ----

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) {
    throw std::invalid_argument("embedding: table must be rank-2, got " + shape_str(table.shape()));
  }
  const int v = table.shape()[0], d = table.shape()[1];
  const int len = static_cast<int>(ids.size());
  if (len == 0) throw std::invalid_argument("embedding: empty id list");
  std::vector<int> idx(ids.begin(), ids.end());
  for (int id : idx) {
    if (id < 0 || id >= v) {
      throw std::invalid_argument("embedding: id " + std::to_string(id) +
                                  " out of range [0, " + std::to_string(v) + ")");
    }
  }
  auto out = make_node({len, d});
  const float* tv = table.node()->value.data();
  for (int i = 0; i < len; ++i) {
    std::copy(tv + idx[i] * d, tv + (idx[i] + 1) * d, out->value.data() + i * d);
  }
  TensorNode* tn = table.node().get();
  return finish(out, {table}, [tn, idx, d](TensorNode* o) {
    return [tn, o, idx, d]() {
      if (!tn->requires_grad) return;
      tn->ensure_grad();
      for (size_t i = 0; i < idx.size(); ++i) {
        const float* g = o->grad.data() + i * d;
        float* t = tn->grad.data() + idx[i] * d;
        for (int j = 0; j < d; ++j) t[j] += g[j];
      }
    };
  });
}

Tensor select_row(const Tensor& x, int row) {
  if (x.rank() != 2 || row < 0 || row >= x.rows()) {
    throw std::invalid_argument("select_row: row " + std::to_string(row) + " of " + shape_str(x.shape()));
  }
  const int n = x.cols();
  auto out = make_node({n});
  std::copy(x.node()->value.data() + row * n, x.node()->value.data() + (row + 1) * n,
            out->value.data());
  TensorNode* xn = x.node().get();
  return finish(out, {x}, [xn, row, n](TensorNode* o) {
    return [xn, o, row, n]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int j = 0; j < n; ++j) xn->grad[row * n + j] += o->grad[j];
    };
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int n = parts[0].cols();
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != n) {
      throw std::invalid_argument("concat_rows: column mismatch " + shape_str(p.shape()));
    }
    total += p.rows();
  }
  auto out = make_node({total, n});
  int at = 0;
  for (const Tensor& p : parts) {
    std::copy(p.node()->value.begin(), p.node()->value.end(), out->value.data() + at * n);
    at += p.rows();
  }
  std::vector<Tensor> held(parts.begin(), parts.end());
  bool needs = false;
  for (const Tensor& p : held) needs = needs || p.node()->requires_grad;
  if (!grad_enabled() || !needs) return Tensor(std::move(out));
  out->requires_grad = true;
  for (const Tensor& p : held) out->parents.push_back(p.node());
  TensorNode* on = out.get();
  out->backprop = [on, held, n]() {
    int at = 0;
    for (const Tensor& p : held) {
      TensorNode* pn = p.node().get();
      const int rows = p.rows();
      if (pn->requires_grad) {
        pn->ensure_grad();
        for (int i = 0; i < rows * n; ++i) pn->grad[i] += on->grad[at * n + i];
      }
      at += rows;
    }
  };
  return Tensor(std::move(out));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int m = parts[0].rows();
  const bool rank1 = parts[0].rank() == 1;
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != m || (p.rank() == 1) != rank1) {
      throw std::invalid_argument("concat_cols: row mismatch " + shape_str(p.shape()));
    }
    total += p.cols();
  }
  auto out = make_node(rank1 ? Shape{total} : Shape{m, total});
  int at = 0;
  for (const Tensor& p : parts) {
    const int n = p.cols();
    for (int i = 0; i < m; ++i) {
      std::copy(p.node()->value.data() + i * n, p.node()->value.data() + (i + 1) * n,
                out->value.data() + i * total + at);
    }
    at += n;
  }
  std::vector<Tensor> held(parts.begin(), parts.end());
  bool needs = false;
  for (const Tensor& p : held) needs = needs || p.node()->requires_grad;
  if (!grad_enabled() || !needs) return Tensor(std::move(out));
  out->requires_grad = true;
  for (const Tensor& p : held) out->parents.push_back(p.node());
  TensorNode* on = out.get();
  out->backprop = [on, held, m, total]() {
    int at = 0;
    for (const Tensor& p : held) {
      TensorNode* pn = p.node().get();
      const int n = p.cols();
      if (pn->requires_grad) {
        pn->ensure_grad();
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) pn->grad[i * n + j] += on->grad[i * total + at + j];
        }
      }
      at += n;
    }
  };
  return Tensor(std::move(out));
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
  const int n = x.cols();
  if (c0 < 0 || c1 > n || c0 >= c1) {
    throw std::invalid_argument("slice_cols: [" + std::to_string(c0) + ", " + std::to_string(c1) +
                                ") of " + shape_str(x.shape()));
  }
  const int m = x.rows();
  const int w = c1 - c0;
  auto out = make_node(x.rank() == 1 ? Shape{w} : Shape{m, w});
  for (int i = 0; i < m; ++i) {
    std::copy(x.node()->value.data() + i * n + c0, x.node()->value.data() + i * n + c1,
              out->value.data() + i * w);
  }
  TensorNode* xn = x.node().get();
  return finish(out, {x}, [xn, m, n, c0, w](TensorNode* o) {
    return [xn, o, m, n, c0, w]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < w; ++j) xn->grad[i * n + c0 + j] += o->grad[i * w + j];
      }
    };
  });
}

Tensor tile_rows(const Tensor& x, int m) {
  if (x.rank() != 1 || m <= 0) {
    throw std::invalid_argument("tile_rows: need rank-1 input and positive count");
  }
  const int n = x.shape()[0];
  auto out = make_node({m, n});
  for (int i = 0; i < m; ++i) {
    std::copy(x.node()->value.begin(), x.node()->value.end(), out->value.data() + i * n);
  }
  TensorNode* xn = x.node().get();
  return finish(out, {x}, [xn, m, n](TensorNode* o) {
    return [xn, o, m, n]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) xn->grad[j] += o->grad[i * n + j];
      }
    };
  });
}

Tensor flatten(const Tensor& x) {
  auto out = make_node({static_cast<int>(x.size())});
  out->value = x.node()->value;
  TensorNode* xn = x.node().get();
  return finish(out, {x}, [xn](TensorNode* o) {
    return [xn, o]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += o->grad[i];
    };
  });
}

Tensor add_row_broadcast(const Tensor& x, const Tensor& v) {
  const int n = x.cols();
  if (v.rank() != 1 || v.shape()[0] != n) {
    throw std::invalid_argument("add_row_broadcast: " + shape_str(x.shape()) + " vs " +
                                shape_str(v.shape()));
  }
  const int m = x.rows();
  auto out = make_node(x.shape());
  const float* xv = x.node()->value.data();
  const float* vv = v.node()->value.data();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out->value[i * n + j] = xv[i * n + j] + vv[j];
  }
  TensorNode* xn = x.node().get();
  TensorNode* vn = v.node().get();
  return finish(out, {x, v}, [xn, vn, m, n](TensorNode* o) {
    return [xn, vn, o, m, n]() {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int i = 0; i < m * n; ++i) xn->grad[i] += o->grad[i];
      }
      if (vn->requires_grad) {
        vn->ensure_grad();
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) vn->grad[j] += o->grad[i * n + j];
        }
      }
    };
  });
}

}  // namespace seqnav

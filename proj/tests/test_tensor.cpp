#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/optim.hpp"
#include "core/tensor.hpp"
#include "oracles.hpp"

using namespace seqnav;
using seqnav::testing::finite_difference_check;

namespace {

Tensor random_tensor(Shape shape, RngStream& rng, bool requires_grad = true) {
  std::vector<float> v(static_cast<size_t>(numel(shape)));
  for (float& x : v) x = static_cast<float>(rng.normal());
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("matmul identity and zero cases") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::from({2, 2}, {3, 4, 5, 6});
  Tensor c = matmul(eye, b);
  CHECK(c.values()[0] == 3.0f);
  CHECK(c.values()[1] == 4.0f);
  CHECK(c.values()[2] == 5.0f);
  CHECK(c.values()[3] == 6.0f);

  Tensor a = Tensor::from({1, 2}, {1, 2});
  Tensor z = Tensor::from({2, 1}, {0, 0});
  CHECK(matmul(a, z).values()[0] == 0.0f);
}

TEST_CASE("matmul rejects shape mismatch with both shapes reported") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2 x 3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences") {
  RngStream rng(42);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Tensor r = random_tensor({3, 2}, rng, false);
  auto loss = [&]() { return scale(sum(mul(matmul(a, b), r)), 0.25f); };
  auto fd = finite_difference_check({a, b}, loss);
  CHECK(fd.max_rel_err < 1e-4);
}

TEST_CASE("masked_softmax examples and contract") {
  Tensor logits = Tensor::from({2}, {0, 0});
  Tensor mask = Tensor::zeros({2});
  Tensor p = masked_softmax(logits, mask);
  CHECK(p.values()[0] == doctest::Approx(0.5));
  CHECK(p.values()[1] == doctest::Approx(0.5));

  Tensor blocked = Tensor::from({2}, {0.0f, kMaskBlocked});
  Tensor p2 = masked_softmax(Tensor::from({2}, {5, 9}), blocked);
  CHECK(p2.values()[0] == 1.0f);
  CHECK(p2.values()[1] == 0.0f);  // exactly zero

  RngStream rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor l = random_tensor({3, 6}, rng);
    std::vector<float> m(6, 0.0f);
    for (int j = 1; j < 6; ++j) {
      if (rng.uniform() < 0.4) m[j] = kMaskBlocked;
    }
    Tensor probs = masked_softmax(l, Tensor::from({6}, std::vector<float>(m)));
    for (int i = 0; i < 3; ++i) {
      float row_sum = 0.0f;
      for (int j = 0; j < 6; ++j) {
        const float v = probs.values()[i * 6 + j];
        CHECK(v >= 0.0f);
        if (m[j] <= kMaskBlocked) CHECK(v == 0.0f);
        row_sum += v;
      }
      CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("masked_softmax rejects a fully masked row") {
  Tensor logits = Tensor::from({2}, {1, 2});
  Tensor mask = Tensor::from({2}, {kMaskBlocked, kMaskBlocked});
  CHECK_THROWS_AS(masked_softmax(logits, mask), std::invalid_argument);
}

TEST_CASE("masked_softmax blocked positions get exactly zero gradient") {
  RngStream rng(3);
  Tensor logits = random_tensor({2, 4}, rng);
  Tensor mask = Tensor::from({4}, {0.0f, kMaskBlocked, 0.0f, kMaskBlocked});
  Tensor r = random_tensor({2, 4}, rng, false);
  sum(mul(masked_softmax(logits, mask), r)).backward();
  auto g = logits.grad();
  for (int i = 0; i < 2; ++i) {
    CHECK(g[i * 4 + 1] == 0.0f);
    CHECK(g[i * 4 + 3] == 0.0f);
  }
  auto fd = finite_difference_check({logits}, [&]() {
    return scale(sum(mul(masked_softmax(logits, mask), r)), 0.5f);
  });
  CHECK(fd.max_rel_err < 1e-4);
}

TEST_CASE("linear examples and gradient") {
  RngStream rng(11);
  Tensor x = random_tensor({5, 3}, rng);
  Tensor zero_w = Tensor::zeros({3, 2}, true);
  Tensor b = Tensor::from({2}, {0.5f, -1.5f}, true);
  Tensor out = linear(x, zero_w, b);
  for (int i = 0; i < 5; ++i) {
    CHECK(out.values()[i * 2 + 0] == 0.5f);
    CHECK(out.values()[i * 2 + 1] == -1.5f);
  }

  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor zb = Tensor::zeros({3});
  Tensor same = linear(x, eye, zb);
  for (int i = 0; i < 15; ++i) CHECK(same.values()[i] == x.values()[i]);

  Tensor w = random_tensor({3, 2}, rng);
  Tensor r = random_tensor({5, 2}, rng, false);
  auto fd = finite_difference_check(
      {x, w, b}, [&]() { return scale(sum(mul(linear(x, w, b), r)), 0.1f); });
  CHECK(fd.max_rel_err < 1e-4);

  CHECK_THROWS_AS(linear(Tensor::zeros({4}), w, b), std::invalid_argument);
}

TEST_CASE("elementwise ops: values and derivatives") {
  CHECK(tanh(Tensor::scalar(0.0f)).item() == 0.0f);
  CHECK(sigmoid(Tensor::scalar(0.0f)).item() == 0.5f);

  Tensor x = Tensor::from({1}, {1.0f}, true);
  tanh(x).backward();
  const float expected = 1.0f - std::tanh(1.0f) * std::tanh(1.0f);
  CHECK(x.grad()[0] == doctest::Approx(expected).epsilon(1e-6));

  auto fd = finite_difference_check({x}, [&]() { return tanh(x); }, 1e-3f);
  CHECK(fd.max_rel_err < 1e-4);

  RngStream rng(5);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor b = random_tensor({3, 3}, rng);
  Tensor r = random_tensor({3, 3}, rng, false);
  for (auto op : {0, 1, 2, 3, 4, 5}) {
    auto loss = [&]() -> Tensor {
      switch (op) {
        case 0: return scale(sum(mul(add(a, b), r)), 0.2f);
        case 1: return scale(sum(mul(sub(a, b), r)), 0.2f);
        case 2: return scale(sum(mul(mul(a, b), r)), 0.2f);
        case 3: return scale(sum(mul(tanh(a), r)), 0.2f);
        case 4: return scale(sum(mul(sigmoid(a), r)), 0.2f);
        default: return scale(sum(mul(relu(a), r)), 0.2f);
      }
    };
    auto res = finite_difference_check({a, b}, loss);
    CHECK(res.max_rel_err < 1e-4);
  }
  CHECK_THROWS_AS(add(a, Tensor::zeros({2, 3})), std::invalid_argument);
}

TEST_CASE("reduce: mean_over_rows and sum") {
  Tensor x = Tensor::from({2, 2}, {1, 3, 3, 5}, true);
  Tensor m = mean_over_rows(x);
  CHECK(m.values()[0] == 2.0f);
  CHECK(m.values()[1] == 4.0f);

  Tensor single = Tensor::from({1, 3}, {7, 8, 9});
  Tensor ms = mean_over_rows(single);
  CHECK(ms.values()[0] == 7.0f);
  CHECK(ms.values()[2] == 9.0f);

  sum(m).backward();
  for (float g : x.grad()) CHECK(g == 0.5f);  // 1/m per element
}

TEST_CASE("losses: cross entropy and bce") {
  Tensor logits = Tensor::from({2}, {0, 0}, true);
  CHECK(cross_entropy(logits, 0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-4));
  CHECK(binary_cross_entropy(Tensor::scalar(0.5f), 1.0f).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-4));

  RngStream rng(13);
  Tensor l5 = random_tensor({5}, rng);
  auto fd = finite_difference_check({l5}, [&]() { return scale(cross_entropy(l5, 3), 0.25f); });
  CHECK(fd.max_rel_err < 1e-4);

  Tensor p = Tensor::from({1}, {0.3f}, true);
  auto fd2 = finite_difference_check({p}, [&]() { return binary_cross_entropy(p, 0.8f); });
  CHECK(fd2.max_rel_err < 1e-4);

  Tensor rows = random_tensor({4, 3}, rng);
  std::vector<int> targets{0, 2, 1, 2};
  auto fd3 = finite_difference_check({rows}, [&]() {
    return scale(cross_entropy_rows(rows, targets), 0.25f);
  });
  CHECK(fd3.max_rel_err < 1e-4);

  CHECK_THROWS_AS(cross_entropy(l5, 7), std::invalid_argument);
  CHECK_THROWS_AS(binary_cross_entropy(Tensor::scalar(0.5f), 1.5f), std::invalid_argument);
}

TEST_CASE("bce clamps out-of-range probabilities and counts it") {
  const uint64_t before = bce_clamp_count();
  Tensor p = Tensor::from({1}, {1.0f}, true);
  Tensor loss = binary_cross_entropy(p, 1.0f);
  CHECK(std::isfinite(loss.item()));
  CHECK(bce_clamp_count() == before + 1);
}

TEST_CASE("backward: ones for sum, zero when detached, composite chain") {
  Tensor w = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  sum(w).backward();
  for (float g : w.grad()) CHECK(g == 1.0f);

  Tensor v = Tensor::from({3}, {1, 2, 3}, true);
  sum(v.detach()).backward();
  for (float g : v.grad()) CHECK(g == 0.0f);

  RngStream rng(17);
  Tensor x = random_tensor({4}, rng);
  Tensor weight = random_tensor({4, 3}, rng);
  Tensor bias = random_tensor({3}, rng);
  auto fd = finite_difference_check({x, weight, bias}, [&]() {
    return scale(sum(tanh(linear(x, weight, bias))), 0.3f);
  });
  CHECK(fd.max_rel_err < 1e-4);

  CHECK_THROWS_AS(Tensor::zeros({2}, true).backward(), std::invalid_argument);
}

TEST_CASE("backward accumulates across calls and is deterministic") {
  RngStream rng(19);
  Tensor w = random_tensor({3, 3}, rng);
  auto build = [&]() { return sum(tanh(matmul(w, w))); };

  w.zero_grad();
  build().backward();
  std::vector<float> once(w.grad().begin(), w.grad().end());
  build().backward();
  for (size_t i = 0; i < once.size(); ++i) {
    CHECK(w.grad()[i] == doctest::Approx(2.0f * once[i]).epsilon(1e-5));
  }

  w.zero_grad();
  build().backward();
  std::vector<float> again(w.grad().begin(), w.grad().end());
  CHECK(once == again);  // bit-identical
}

TEST_CASE("structure ops gradient check") {
  RngStream rng(23);
  Tensor table = random_tensor({6, 4}, rng);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor v = random_tensor({4}, rng);
  std::vector<int> ids{1, 4, 1};
  auto fd = finite_difference_check({table, x, v}, [&]() {
    Tensor e = embedding(table, ids);
    Tensor joined = concat_rows(std::vector<Tensor>{e, x, tile_rows(v, 2)});
    Tensor sliced = slice_cols(add_row_broadcast(joined, v), 1, 3);
    return scale(sum(mul(flatten(sliced), flatten(sliced))), 0.03f);
  });
  CHECK(fd.max_rel_err < 1e-4);

  Tensor g = random_tensor({2, 3}, rng);
  Tensor b2 = random_tensor({3}, rng);
  Tensor gamma = random_tensor({3}, rng);
  Tensor rr = random_tensor({2, 3}, rng, false);
  auto fd2 = finite_difference_check({g, gamma, b2}, [&]() {
    return scale(sum(mul(layer_norm(g, gamma, b2), rr)), 0.2f);
  });
  CHECK(fd2.max_rel_err < 1e-4);
}

TEST_CASE("randomized finite-difference sweep over op combinations") {
  RngStream rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const int m = 2 + static_cast<int>(rng.uniform_int(3));
    const int k = 2 + static_cast<int>(rng.uniform_int(3));
    const int n = 2 + static_cast<int>(rng.uniform_int(3));
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);
    Tensor gamma = Tensor::full({n}, 1.0f);
    Tensor beta = Tensor::zeros({n});
    auto fd = finite_difference_check({a, b}, [&]() {
      Tensor h = layer_norm(matmul(a, b), gamma, beta);
      return scale(sum(mul(sigmoid(h), tanh(h))), 0.2f);
    });
    // Six ops deep; float32 rounding accumulates, so the composite bound is
    // the looser end-to-end one.
    CHECK(fd.max_rel_err < 1e-3);
  }
}

TEST_CASE("adamw: trivial cases and descent") {
  RngStream rng(31);
  SUBCASE("lr zero leaves parameters unchanged") {
    Tensor w = random_tensor({4}, rng);
    std::vector<float> before(w.values().begin(), w.values().end());
    AdamW opt({w}, {.lr = 0.0f, .weight_decay = 0.01f});
    sum(mul(w, w)).backward();
    CHECK(opt.step());
    for (size_t i = 0; i < before.size(); ++i) CHECK(w.values()[i] == before[i]);
  }
  SUBCASE("zero gradient and zero decay leave parameters unchanged") {
    Tensor w = random_tensor({4}, rng);
    std::vector<float> before(w.values().begin(), w.values().end());
    AdamW opt({w}, {.lr = 0.1f, .weight_decay = 0.0f});
    w.zero_grad();
    CHECK(opt.step());
    for (size_t i = 0; i < before.size(); ++i) CHECK(w.values()[i] == before[i]);
  }
  SUBCASE("one step on w^2 from w=1 decreases |w|") {
    Tensor w = Tensor::from({1}, {1.0f}, true);
    AdamW opt({w}, {.lr = 0.01f, .weight_decay = 0.0f});
    mul(w, w).backward();
    CHECK(opt.step());
    CHECK(std::abs(w.values()[0]) < 1.0f);
  }
  SUBCASE("non-finite gradient skips the step and counts it") {
    Tensor w = Tensor::from({1}, {1.0f}, true);
    AdamW opt({w}, {});
    w.grad();
    w.node()->grad[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(opt.step());
    CHECK(opt.skipped_steps() == 1);
    CHECK(w.values()[0] == 1.0f);
  }
}

TEST_CASE("clip_grad_norm scales gradients above the threshold") {
  Tensor w = Tensor::from({2}, {0.0f, 0.0f}, true);
  w.grad();
  w.node()->grad = {3.0f, 4.0f};
  const float norm = clip_grad_norm({w}, 1.0f);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(w.grad()[0] == doctest::Approx(0.6));
  CHECK(w.grad()[1] == doctest::Approx(0.8));
}

TEST_CASE("rng streams are reproducible and unbiased helpers work") {
  RngStream a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream c(99);
  for (int i = 0; i < 100; ++i) {
    const uint64_t v = c.uniform_int(7);
    CHECK(v < 7);
  }
  RngStream d(1), e(2);
  CHECK(d.next_u64() != e.next_u64());
}

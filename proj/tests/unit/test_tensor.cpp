// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>

#include "doctest.h"
#include "mere/errors.hpp"
#include "mere/gradcheck.hpp"
#include "mere/ops.hpp"
#include "mere/optimizer.hpp"
#include "mere/params.hpp"
#include "support.hpp"

using namespace mere;
using test::random_tensor;

namespace {

// Frozen oracle values (high-precision evaluation).
constexpr double kCrossEntropy123Gold0 = 2.407605964444380304;
constexpr double kLn36 = 3.583518938456110;
constexpr double kAdamWFirstStep = 0.99890000001999999960;

double backward_grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double tol = 1e-6) {
  GradCheckOptions opt;
  opt.tolerance = tol;
  const auto report = finite_diff_check(f, inputs, opt);
  INFO("worst " << report.worst << " rel " << report.max_rel_error);
  CHECK(report.passed);
  return report.max_rel_error;
}

}  // namespace

TEST_CASE("matmul values") {
  const Tensor id = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor a = Tensor::from({2, 2}, {3, -1, 0.5, 7});
  CHECK(matmul(id, a).data()[3] == 7);
  const Tensor b = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor c = matmul(b, Tensor::from({2, 1}, {0, 1}));
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.value(0) == 2);
  CHECK(c.value(1) == 4);
  CHECK_THROWS_AS(matmul(b, Tensor::zeros({3, 1})), DimensionError);
}

TEST_CASE("matmul gradient") {
  Rng rng(3);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  backward_grad_check([&] { return sum(matmul(a, b)); }, {a, b});
  Tensor c = random_tensor({2, 4}, rng);
  backward_grad_check([&] { return sum(tanh(matmul_nt(a, c))); }, {a, c});
}

TEST_CASE("softmax rows") {
  const Tensor s = softmax_rows(Tensor::from({3}, {2, 2, 2}));
  for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  const Tensor t = softmax_rows(Tensor::from({2}, {0, std::log(2.0)}));
  CHECK(t.value(0) == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(t.value(1) == doctest::Approx(2.0 / 3).epsilon(1e-14));
  const Tensor big = softmax_rows(Tensor::from({2}, {1000, 0}));
  CHECK(std::isfinite(big.value(0)));
  CHECK(big.value(0) == doctest::Approx(1.0));
  CHECK(big.value(1) < 1e-300);

  const auto oracle = oracle::softmax({1, 2, 3});
  CHECK(oracle[0] == doctest::Approx(0.09003057317038046).epsilon(1e-15));
  CHECK(oracle[2] == doctest::Approx(0.6652409557748219).epsilon(1e-15));
  const Tensor ours = softmax_rows(Tensor::from({3}, {1, 2, 3}));
  CHECK(oracle::compare("softmax", test::to_vector(ours), oracle, 1e-15).passed);

  const double inf = std::numeric_limits<double>::infinity();
  const Tensor masked = softmax_rows(Tensor::from({3}, {-inf, 1, 1}));
  CHECK(masked.value(0) == 0.0);
  CHECK(masked.value(1) == 0.5);
  CHECK_THROWS_AS(softmax_rows(Tensor::from({2}, {std::nan(""), 1})), NumericalError);
}

TEST_CASE("softmax rows sum to one and are permutation equivariant") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor({4, 6}, rng, 3.0);
    const Tensor p = softmax_rows(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 6; ++c) total += p.at(r, c);
      CHECK(std::fabs(total - 1.0) < 1e-12);
    }
    std::vector<double> rev(x.data().rbegin(), x.data().rend());
    const Tensor q = softmax_rows(Tensor::from({4, 6}, rev));
    for (std::size_t i = 0; i < 24; ++i) CHECK(std::fabs(q.value(23 - i) - p.value(i)) < 1e-15);
  }
}

TEST_CASE("layer norm") {
  const Tensor g = Tensor::from({4}, {1, 1, 1, 1}), b = Tensor::zeros({4});
  const Tensor flat = layer_norm(Tensor::from({4}, {5, 5, 5, 5}), g, b);
  for (double v : flat.data()) CHECK(v == 0.0);
  const Tensor pm = layer_norm(Tensor::from({2}, {1, -1}), Tensor::from({2}, {1, 1}), Tensor::zeros({2}));
  CHECK(pm.value(0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(pm.value(1) == doctest::Approx(-1.0).epsilon(1e-5));

  Rng rng(5);
  Tensor x = random_tensor({2, 8}, rng), gain = random_tensor({8}, rng), bias = random_tensor({8}, rng);
  Tensor w = random_tensor({2, 8}, rng);
  const auto want = oracle::layer_norm(test::to_matrix(x), test::to_vector(gain), test::to_vector(bias));
  CHECK(oracle::compare("layer_norm", test::to_matrix(layer_norm(x, gain, bias)), want, 1e-13).passed);
  // A weighted sum keeps the row-mean gradient direction from cancelling.
  backward_grad_check([&] { return sum(tanh(layer_norm(add(x, w), gain, bias))); }, {x, gain, bias});
}

TEST_CASE("activations") {
  const Tensor r = relu(Tensor::from({3}, {-1, 0, 2}));
  CHECK(r.value(0) == 0);
  CHECK(r.value(1) == 0);
  CHECK(r.value(2) == 2);
  CHECK(tanh(Tensor::scalar(0.0)).item() == 0.0);

  Tensor x = Tensor::scalar(0.5);
  GradCheckOptions opt;
  opt.tolerance = 1e-8;
  opt.step = 1e-4;
  CHECK(finite_diff_check([&] { return tanh(x); }, std::span<Tensor>(&x, 1), opt).passed);

  Rng rng(2);
  // GELU has a stationary point near -0.75, so keep inputs where its slope is
  // well away from zero.
  Tensor y = Tensor::from({5}, {-2.5, -0.2, 0.1, 0.9, 2.7});
  backward_grad_check([&] { return sum(gelu(y)); }, {y});
  for (double v : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    CHECK(gelu(Tensor::scalar(v)).item() == doctest::Approx(oracle::gelu(v)).epsilon(1e-15));
  }
}

TEST_CASE("cross entropy") {
  CHECK(cross_entropy(Tensor::from({3}, {1, 2, 3}), 0).item() == doctest::Approx(kCrossEntropy123Gold0).epsilon(1e-15));
  CHECK(oracle::cross_entropy({1, 2, 3}, 0) == doctest::Approx(kCrossEntropy123Gold0).epsilon(1e-15));
  CHECK(cross_entropy(Tensor::zeros({36}), 5).item() == doctest::Approx(kLn36).epsilon(1e-15));
  CHECK(cross_entropy(Tensor::from({3}, {0, 60, 0}), 1).item() < 1e-20);

  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> mask{0, -inf, 0};
  CHECK(cross_entropy(Tensor::from({3}, {1, 50, 1}), 0, mask).item() == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(cross_entropy(Tensor::from({3}, {1, 2, 3}), 1, mask), DataError);

  Rng rng(8);
  Tensor logits = random_tensor({7}, rng);
  backward_grad_check([&] { return cross_entropy(logits, 3); }, {logits});
  Tensor small = random_tensor({3}, rng);
  backward_grad_check([&] { return cross_entropy(small, 2, mask); }, {small});
}

TEST_CASE("structural op gradients") {
  Rng rng(4);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({2, 4}, rng), bias = random_tensor({4}, rng);
  Tensor s = Tensor::scalar(0.7);
  const std::size_t ids[] = {2, 0, 2};
  backward_grad_check(
      [&] {
        const Tensor rows[] = {a, b};
        const Tensor cat = concat_rows(rows);  // [5 x 4]
        const Tensor cols[] = {slice_cols(cat, 1, 2), slice_rows(cat, 0, 5)};
        const Tensor wide = concat_cols(cols);  // [5 x 6]
        const Tensor x = matmul(transpose(wide), slice_cols(cat, 0, 3));
        const Tensor picked = gather_rows(a, ids);
        Tensor y = mul_scalar(add_bias(picked, bias), s);
        y = add(y, broadcast_rows(reshape(slice_rows(b, 1, 1), {4}), 3));
        return add(sum(tanh(x)), add(sum(scale(tanh(y), 0.5)), element(picked, 5)));
      },
      {a, b, bias, s});
}

TEST_CASE("inference records nothing") {
  Tensor a = Tensor::from({1}, {1.0}, true);
  const Tensor b = tanh(a);
  CHECK(active_tape() == nullptr);
  CHECK_FALSE(b.requires_grad());
}

TEST_CASE("finite difference check on a square") {
  Tensor x = Tensor::scalar(3.0);
  GradCheckOptions opt;
  opt.tolerance = 1e-7;
  const auto r = finite_diff_check([&] { return mul_scalar(x, x); }, std::span<Tensor>(&x, 1), opt);
  CHECK(r.passed);
  CHECK(x.grad()[0] == 6.0);
  const auto fd = oracle::finite_difference({3.0}, 1e-5, [](const oracle::Vector& v) { return v[0] * v[0]; });
  CHECK(fd[0] == doctest::Approx(6.0).epsilon(1e-7));
}

TEST_CASE("adamw") {
  SUBCASE("single step matches oracle") {
    ParamStore store;
    Tensor p = store.add_constant("p", {1}, 1.0);
    store.zero_grad();
    p.grad_buffer()[0] = 0.5;
    AdamW opt(AdamWConfig{1e-3, 0.1, 0.9, 0.999, 1e-8});
    opt.step(store);
    CHECK(oracle::adamw_first_step(1.0, 0.5, {}) == doctest::Approx(kAdamWFirstStep).epsilon(1e-15));
    CHECK(p.value(0) == doctest::Approx(kAdamWFirstStep).epsilon(1e-15));
  }
  SUBCASE("zero gradient decays only") {
    ParamStore store;
    Tensor p = store.add_constant("p", {3}, 2.0);
    store.zero_grad();
    AdamW opt(AdamWConfig{0.01, 0.2, 0.9, 0.999, 1e-8});
    opt.step(store);
    for (double v : p.data()) CHECK(v == doctest::Approx(2.0 * (1 - 0.01 * 0.2)).epsilon(1e-15));
  }
  SUBCASE("frozen parameter untouched") {
    ParamStore store;
    Tensor live = store.add_constant("live", {2}, 1.0);
    Tensor frozen = store.add_constant("frozen", {2}, 1.0);
    store.zero_grad();
    frozen.grad_buffer()[0] = 3.0;
    store.set_frozen("frozen", true);
    live.grad_buffer()[1] = 1.0;
    AdamW opt;
    for (int i = 0; i < 3; ++i) opt.step(store);
    CHECK(frozen.value(0) == 1.0);
    CHECK(frozen.value(1) == 1.0);
    CHECK(live.value(1) < 1.0);
    CHECK(opt.moments().count("frozen") == 0);
  }
  SUBCASE("missing gradient is an error") {
    ParamStore store;
    store.add_constant("p", {1}, 1.0);
    AdamW opt;
    CHECK_THROWS_AS(opt.step(store), ConfigError);
  }
  SUBCASE("clipping") {
    ParamStore store;
    Tensor p = store.add_zeros("p", {2});
    store.zero_grad();
    p.grad_buffer()[0] = 3.0;
    p.grad_buffer()[1] = 4.0;
    CHECK(clip_grad_norm(store, 1.0) == doctest::Approx(5.0));
    CHECK(grad_norm(store) == doctest::Approx(1.0));
  }
}

TEST_CASE("deterministic parameters after training steps") {
  auto run = [] {
    ParamStore store;
    Rng rng(9);
    Tensor w = store.add_normal("w", {4, 3}, 0.5, rng);
    Tensor x = random_tensor({5, 4}, rng);
    AdamW opt;
    for (int step = 0; step < 10; ++step) {
      store.zero_grad();
      Tape tape;
      TapeScope scope(tape);
      Tensor loss = cross_entropy(reshape(slice_rows(tanh(matmul(x, w)), 0, 1), {3}), 1);
      tape.backward(loss);
      opt.step(store);
    }
    return std::vector<double>(w.data().begin(), w.data().end());
  };
  CHECK(run() == run());
}

TEST_CASE("shape errors name the shapes") {
  try {
    add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
  }
}

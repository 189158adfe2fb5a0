#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "hrt/ops.hpp"
#include "hrt/optimizer.hpp"
#include "hrt/rng.hpp"
#include "hrt/tensor.hpp"

using namespace hrt;
using namespace hrt::num;

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-4;

double rel_err(double a, double b) {
  double denom = std::max({1e-3, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) / denom;
}

Tensor rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_product(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return tensor_new(std::move(shape), std::move(v));
}

// Away from zero so relu/abs kinks cannot straddle a finite-difference step.
Tensor rand_tensor_off_zero(Shape shape, Rng& rng) {
  Tensor t = rand_tensor(std::move(shape), rng);
  for (double& x : t.values) x = (x < 0 ? -1.0 : 1.0) * (0.1 + 0.9 * std::fabs(x));
  return t;
}

using LossFn = std::function<Tensor(std::vector<Tensor>&)>;  // tracked inputs -> tracked scalar

// Central finite differences on every element of every input, against one
// reverse sweep.
void check_gradients(const LossFn& fn, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Tensor> tracked;
  for (const Tensor& t : inputs) tracked.push_back(tape.leaf(t));
  Tensor loss = fn(tracked);
  REQUIRE(loss.size() == 1);
  GradientMap grads = tape.backward(loss);

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto it = grads.find(tracked[i].node);
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      double analytic = it == grads.end() ? 0.0 : it->second.values[k];
      auto eval = [&](double delta) {
        std::vector<Tensor> shifted = inputs;
        shifted[i].values[k] += delta;
        Tape t2;
        std::vector<Tensor> tr;
        for (const Tensor& t : shifted) tr.push_back(t2.leaf(t));
        return fn(tr).scalar();
      };
      double fd = (eval(kFdStep) - eval(-kFdStep)) / (2.0 * kFdStep);
      INFO("input ", i, " element ", k, " analytic ", analytic, " fd ", fd);
      CHECK(rel_err(analytic, fd) <= kFdTol);
    }
  }
}

// Fixed random projection turning any output into a scalar loss.
Tensor project(const Tensor& y, std::uint64_t salt) {
  Rng rng(salt, "proj");
  Tensor w = rand_tensor(y.shape, rng);
  return num::sum(mul(y, w));
}

}  // namespace

TEST_CASE("tensor_new validates shape against value count") {
  CHECK_NOTHROW(tensor_new({2, 3}, std::vector<double>(6, 0.0)));
  CHECK_THROWS_AS(tensor_new({2, 3}, std::vector<double>(5, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(tensor_new({}, std::vector<double>(2, 0.0)), std::invalid_argument);
  Tensor s = tensor_new({1}, {4.0});
  CHECK(s.scalar() == 4.0);
  CHECK_THROWS_AS(tensor_new({2}, {1.0, 2.0}).scalar(), std::invalid_argument);
}

TEST_CASE("matmul values against a naive triple loop") {
  Rng rng(11, "matmul");
  for (int trial = 0; trial < 5; ++trial) {
    std::size_t m = 1 + rng.uniform_int(4), k = 1 + rng.uniform_int(4),
                 n = 1 + rng.uniform_int(4);
    Tensor a = rand_tensor({m, k}, rng), b = rand_tensor({k, n}, rng);
    Tensor c = matmul(a, b);
    REQUIRE(c.shape == Shape{m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
        CHECK(c.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
      }
  }
}

TEST_CASE("matmul treats a 1-D left operand as a row") {
  Tensor v = tensor_new({2}, {1.0, 2.0});
  Tensor m = tensor_new({2, 2}, {1.0, 0.0, 0.0, 3.0});
  Tensor r = matmul(v, m);
  CHECK(r.shape == Shape{2});
  CHECK(r.values[0] == 1.0);
  CHECK(r.values[1] == 6.0);
}

TEST_CASE("finite differences: matmul, transpose, linear") {
  Rng rng(21, "fd");
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t m = 1 + rng.uniform_int(4), k = 1 + rng.uniform_int(4),
                 n = 1 + rng.uniform_int(4);
    check_gradients(
        [&](std::vector<Tensor>& in) {
          return project(matmul(in[0], in[1]), 100 + trial);
        },
        {rand_tensor({m, k}, rng), rand_tensor({k, n}, rng)});
    check_gradients(
        [&](std::vector<Tensor>& in) {
          return project(matmul(transpose(in[0]), in[1]), 200 + trial);
        },
        {rand_tensor({k, m}, rng), rand_tensor({k, n}, rng)});
    check_gradients(
        [&](std::vector<Tensor>& in) {
          return project(linear(in[0], in[1], in[2]), 300 + trial);
        },
        {rand_tensor({m, k}, rng), rand_tensor({k, n}, rng), rand_tensor({n}, rng)});
  }
}

TEST_CASE("finite differences: elementwise ops") {
  Rng rng(22, "fd");
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t m = 1 + rng.uniform_int(4), n = 1 + rng.uniform_int(4);
    Shape shape{m, n};
    check_gradients(
        [&](std::vector<Tensor>& in) {
          Tensor y = add(mul(in[0], in[1]), sub(in[0], scale(in[1], 0.5)));
          return project(y, 400 + trial);
        },
        {rand_tensor(shape, rng), rand_tensor(shape, rng)});
    check_gradients(
        [&](std::vector<Tensor>& in) {
          return project(num::tanh(num::exp(scale(in[0], 0.5))), 500 + trial);
        },
        {rand_tensor(shape, rng)});
    check_gradients(
        [&](std::vector<Tensor>& in) { return project(relu(in[0]), 600 + trial); },
        {rand_tensor_off_zero(shape, rng)});
  }
}

TEST_CASE("finite differences: softmax, layer_norm, structural ops") {
  Rng rng(23, "fd");
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t m = 1 + rng.uniform_int(4), n = 2 + rng.uniform_int(3);
    check_gradients(
        [&](std::vector<Tensor>& in) { return project(softmax(in[0], 1), 700 + trial); },
        {rand_tensor({m, n}, rng, -2.0, 2.0)});
    check_gradients(
        [&](std::vector<Tensor>& in) { return project(softmax(in[0], 0), 750 + trial); },
        {rand_tensor({m, n}, rng, -2.0, 2.0)});
    check_gradients(
        [&](std::vector<Tensor>& in) {
          return project(layer_norm(in[0], in[1], in[2], 1e-5), 800 + trial);
        },
        {rand_tensor({m, n}, rng), rand_tensor({n}, rng), rand_tensor({n}, rng)});
    check_gradients(
        [&](std::vector<Tensor>& in) {
          Tensor h = hcat({in[0], in[1]});
          Tensor v = vcat({h, h});
          return project(take_rows(v, {1, 0, 1}), 900 + trial);
        },
        {rand_tensor({2, n}, rng), rand_tensor({2, m}, rng)});
    check_gradients(
        [&](std::vector<Tensor>& in) {
          return project(take_cols(in[0], {0, n - 1, 0}), 950 + trial);
        },
        {rand_tensor({m, n}, rng)});
    check_gradients(
        [&](std::vector<Tensor>& in) {
          return project(reshape(in[0], {n, m}), 960 + trial);
        },
        {rand_tensor({m, n}, rng)});
  }
}

TEST_CASE("softmax rows sum to one and are shift-invariant") {
  Rng rng(31, "softmax");
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t m = 1 + rng.uniform_int(6), n = 1 + rng.uniform_int(6);
    Tensor x = rand_tensor({m, n}, rng, -30.0, 30.0);
    Tensor y = softmax(x, 1);
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(y.at(i, j) >= 0.0);
        s += y.at(i, j);
      }
      CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
    double c = rng.uniform(-100.0, 100.0);
    Tensor xs = x;
    for (double& v : xs.values) v += c;
    Tensor ys = softmax(xs, 1);
    for (std::size_t k = 0; k < y.size(); ++k)
      CHECK(std::fabs(y.values[k] - ys.values[k]) <= 1e-12);
  }
}

TEST_CASE("layer_norm standardizes each row before the affine") {
  Rng rng(32, "ln");
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t m = 1 + rng.uniform_int(6), n = 2 + rng.uniform_int(6);
    Tensor x = rand_tensor({m, n}, rng, -5.0, 5.0);
    Tensor gain = full({n}, 1.0), bias = zeros({n});
    Tensor y = layer_norm(x, gain, bias, 1e-12);
    for (std::size_t i = 0; i < m; ++i) {
      double mean = 0.0, var = 0.0;
      for (std::size_t j = 0; j < n; ++j) mean += y.at(i, j);
      mean /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) var += (y.at(i, j) - mean) * (y.at(i, j) - mean);
      var /= static_cast<double>(n);
      CHECK(std::fabs(mean) <= 1e-9);
      CHECK(std::fabs(var - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("layer_norm hand case") {
  // Row [1, 3]: mean 2, population stddev 1 -> standardized [-1, 1].
  Tensor x = tensor_new({1, 2}, {1.0, 3.0});
  Tensor y = layer_norm(x, full({2}, 1.0), zeros({2}), 0.0);
  CHECK(y.values[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(y.values[1] == doctest::Approx(1.0).epsilon(1e-12));
  Tensor z = layer_norm(x, full({2}, 2.0), full({2}, 0.5), 0.0);
  CHECK(z.values[0] == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(z.values[1] == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("binary ops reject shape mismatches; mixed tapes are an error") {
  Tensor a = tensor_new({2}, {1.0, 2.0});
  Tensor b = tensor_new({3}, {1.0, 2.0, 3.0});
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  Tape t1, t2;
  Tensor ta = t1.leaf(a), tb = t2.leaf(a);
  CHECK_THROWS(add(ta, tb));
}

TEST_CASE("backward requires a tracked scalar and consumes the tape") {
  Tape tape;
  Tensor x = tape.leaf(tensor_new({2}, {1.0, 2.0}));
  Tensor y = num::sum(mul(x, x));
  CHECK_THROWS(tape.backward(mul(x, x)));  // non-scalar

  GradientMap g = tape.backward(y);
  CHECK(g.at(x.node).values[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(g.at(x.node).values[1] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(tape.consumed());
  CHECK_THROWS(tape.backward(y));  // second sweep

  Tensor plain = tensor_new({1}, {1.0});
  CHECK_THROWS(num::backward(plain));  // untracked loss
}

TEST_CASE("gradients accumulate across fan-out") {
  Tape tape;
  Tensor x = tape.leaf(tensor_new({1}, {3.0}));
  Tensor y = add(mul(x, x), scale(x, 2.0));  // x^2 + 2x -> dy/dx = 2x + 2 = 8
  GradientMap g = tape.backward(y);
  CHECK(g.at(x.node).values[0] == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("adam first step matches the closed form") {
  // With fresh accumulators, step 1 reduces to lr * g / (|g| + eps).
  Tensor p = tensor_new({2}, {1.0, -2.0});
  std::vector<double> g = {0.3, -0.7};
  OptimizerState st;
  st.lr = 1e-2;
  adam_step({&p}, {tensor_new({2}, g)}, st);
  for (std::size_t k = 0; k < 2; ++k) {
    double expect = (k == 0 ? 1.0 : -2.0) - st.lr * g[k] / (std::fabs(g[k]) + st.eps);
    CHECK(p.values[k] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(st.step == 1);
}

TEST_CASE("adam second step bias correction") {
  Tensor p = tensor_new({1}, {0.0});
  OptimizerState st;
  st.lr = 0.1;
  double g1 = 0.5, g2 = -0.25;
  adam_step({&p}, {tensor_new({1}, {g1})}, st);
  adam_step({&p}, {tensor_new({1}, {g2})}, st);

  double m = st.beta1 * (1 - st.beta1) * g1 + (1 - st.beta1) * g2;
  double v = st.beta2 * (1 - st.beta2) * g1 * g1 + (1 - st.beta2) * g2 * g2;
  double mhat = m / (1 - st.beta1 * st.beta1);
  double vhat = v / (1 - st.beta2 * st.beta2);
  double expect = -st.lr * g1 / (std::fabs(g1) + st.eps) - st.lr * mhat / (std::sqrt(vhat) + st.eps);
  CHECK(p.values[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  Tensor p = tensor_new({3}, {1.0, 2.0, 3.0});
  OptimizerState st;
  adam_step({&p}, {zeros({3})}, st);
  CHECK(p.values == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("adam rejects misaligned gradients") {
  Tensor p = tensor_new({2}, {0.0, 0.0});
  OptimizerState st;
  CHECK_THROWS(adam_step({&p}, {zeros({3})}, st));
}

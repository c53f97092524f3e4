#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "leap/core/gradcheck.hpp"
#include "leap/core/random.hpp"
#include "leap/core/tensor.hpp"

using leap::Tensor;

using D = Tensor<double>;

TEST_CASE("add is elementwise") {
  auto a = D::from({2}, {1, 2});
  auto b = D::from({2}, {3, 4});
  auto c = leap::add(a, b);
  CHECK(c.data() == std::vector<double>{4, 6});
}

TEST_CASE("multiply by zeros annihilates") {
  leap::Rng rng(7);
  auto x = rng.randn<double>({3, 4});
  auto z = leap::mul(x, leap::zeros_like(x));
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("concatenate along axis 1") {
  auto a = D::zeros({2, 3});
  auto b = D::zeros({2, 5});
  auto c = leap::concat<double>({a, b}, 1);
  CHECK(c.shape() == std::vector<int>{2, 8});
}

TEST_CASE("shape mismatch names both shapes") {
  auto a = D::zeros({2, 3});
  auto b = D::zeros({3, 2});
  CHECK_THROWS_WITH_AS(leap::add(a, b),
                       doctest::Contains("[2,3]"), leap::Error);
}

TEST_CASE("d(x*x)/dx = 2x") {
  auto x = D::scalar(3.0, true);
  auto y = leap::mul(x, x);
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("gradient of a constant w.r.t. x is zero") {
  auto x = D::scalar(3.0, true);
  auto c = D::scalar(5.0);
  auto y = leap::mul(c, c);
  y.backward();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("matrix-product composite matches finite differences") {
  leap::Rng rng(42);
  auto a = rng.randn<double>({4, 4});
  auto b = rng.randn<double>({4, 4});
  double err = leap::grad_check<double>(
      [&](D& x) {
        auto y = leap::matmul(leap::matmul(x, b), leap::tanh(x));
        return leap::sum(leap::mul(y, y));
      },
      a, 1e-6);
  CHECK(err < 1e-5);
}

TEST_CASE("grad_check trivial cases") {
  leap::Rng rng(1);
  auto x = rng.randn<double>({6});

  SUBCASE("sum(sigmoid(x))") {
    double err = leap::grad_check<double>(
        [](D& v) { return leap::sum(leap::sigmoid(v)); }, x);
    CHECK(err < 1e-5);
  }
  SUBCASE("sum(x) has gradient of ones") {
    double err =
        leap::grad_check<double>([](D& v) { return leap::sum(v); }, x);
    CHECK(err < 1e-7);
  }
  SUBCASE("dead relu region is flat on both routes") {
    auto neg = D::from({3}, {-1.0, -2.0, -0.5}, true);
    auto y = leap::sum(leap::relu(neg));
    y.backward();
    for (double g : neg.grad()) CHECK(g == 0.0);
    double err = leap::grad_check<double>(
        [](D& v) { return leap::sum(leap::relu(v)); }, neg);
    CHECK(err < 1e-7);
  }
}

TEST_CASE("grad_check rejects non-positive step") {
  auto x = D::scalar(1.0);
  CHECK_THROWS_AS(
      leap::grad_check<double>([](D& v) { return leap::sum(v); }, x, 0.0),
      leap::Error);
}

// every forward op, 20 random instances each
TEST_CASE("finite-difference sweep over the op suite") {
  leap::Rng rng(2024);
  auto check = [&](const char* name, auto make_loss, std::vector<int> shape,
                   double lo = -2.0, double hi = 2.0) {
    for (int rep = 0; rep < 20; ++rep) {
      auto x = rng.rand_uniform<double>(shape, lo, hi);
      double err = leap::grad_check<double>(make_loss, x, 1e-6);
      INFO(name << " rep " << rep);
      CHECK(err < 1e-5);
    }
  };
  leap::Rng crng(55);
  auto other = crng.randn<double>({3, 4});
  auto w = crng.rand_uniform<double>({3, 3, 2, 3}, -1, 1);
  auto bias = crng.randn<double>({3});

  check("add", [&](D& x) { return leap::sum_sq(leap::add(x, other)); }, {3, 4});
  check("mul", [&](D& x) { return leap::sum_sq(leap::mul(x, other)); }, {3, 4});
  check("scale+add_scalar",
        [&](D& x) { return leap::sum_sq(leap::add_scalar(leap::scale(x, 1.7), 0.3)); },
        {3, 4});
  check("matmul", [&](D& x) { return leap::sum_sq(leap::matmul(x, other)); },
        {5, 3});
  check("linear",
        [&](D& x) {
          // x is used both as the input vector and the weight matrix
          auto vec = leap::reshape(leap::slice(x, 0, 0, 1), {4});
          return leap::sum_sq(leap::linear(vec, leap::reshape(x, {3, 4}), bias));
        },
        {3, 4});
  check("conv2d",
        [&](D& x) { return leap::sum_sq(leap::conv2d(x, w, bias, 2, 1)); },
        {6, 6, 2});
  check("conv2d_transpose",
        [&](D& x) {
          return leap::sum_sq(leap::conv2d_transpose(x, w, bias, 2, 1));
        },
        {4, 4, 2});
  check("sigmoid", [&](D& x) { return leap::sum_sq(leap::sigmoid(x)); }, {10});
  check("tanh", [&](D& x) { return leap::sum_sq(leap::tanh(x)); }, {10});
  check("relu+abs",
        [&](D& x) { return leap::sum(leap::mul(leap::relu(x), leap::abs(x))); },
        {10}, 0.05, 2.0);
  check("exp", [&](D& x) { return leap::sum_sq(leap::exp(x)); }, {10});
  check("log", [&](D& x) { return leap::sum_sq(leap::log(x)); }, {10}, 0.2, 3.0);
  check("reshape+slice+concat",
        [&](D& x) {
          auto r = leap::reshape(x, {4, 3});
          auto s1 = leap::slice(r, 0, 0, 2);
          auto s2 = leap::slice(r, 0, 2, 2);
          return leap::sum_sq(leap::concat<double>({s1, s2, s1}, 1));
        },
        {12});
  check("mean", [&](D& x) { return leap::mean(leap::mul(x, x)); }, {7});
  check("clamp (interior)",
        [&](D& x) { return leap::sum_sq(leap::clamp(x, -10, 10)); }, {8});
}

TEST_CASE("conv gradients also flow to weights and bias") {
  leap::Rng rng(9);
  auto x = rng.randn<double>({5, 5, 2});
  for (int rep = 0; rep < 5; ++rep) {
    auto wt = rng.rand_uniform<double>({3, 3, 2, 2}, -1, 1);
    double err = leap::grad_check<double>(
        [&](D& v) {
          auto bias = leap::reshape(leap::slice(leap::reshape(v, {36}), 0, 0, 2), {2});
          return leap::sum_sq(leap::conv2d(x, v, bias, 1, 1));
        },
        wt, 1e-6);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("backward is linear in the loss") {
  leap::Rng rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    auto x = rng.randn<double>({6});
    double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    auto run = [&](auto loss_fn) {
      auto xi = D::from(x.shape(), x.data(), true);
      auto l = loss_fn(xi);
      l.backward();
      return xi.grad();
    };
    auto f = [](D& v) { return leap::sum(leap::sigmoid(v)); };
    auto g = [](D& v) { return leap::sum_sq(leap::tanh(v)); };
    auto gf = run(f);
    auto gg = run(g);
    auto gboth = run([&](D& v) {
      return leap::add(leap::scale(f(v), a), leap::scale(g(v), b));
    });
    for (size_t i = 0; i < gboth.size(); ++i)
      CHECK(gboth[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-10));
  }
}

TEST_CASE("repeated backward after reset is bitwise identical") {
  leap::Rng rng(3);
  auto x = rng.randn<double>({8});
  x.set_requires_grad(true);
  auto loss = leap::sum_sq(leap::sigmoid(leap::mul(x, x)));
  loss.backward();
  auto first = x.grad();
  x.zero_grad();
  loss.zero_grad();
  loss.backward();
  CHECK(x.grad() == first);
}

TEST_CASE("backward rejects non-scalar loss") {
  auto x = D::from({2}, {1, 2}, true);
  auto y = leap::mul(x, x);
  CHECK_THROWS_AS(y.backward(), leap::Error);
}

TEST_CASE("no-grad scope records no graph") {
  auto x = D::scalar(2.0, true);
  leap::NoGradGuard ng;
  auto y = leap::mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

#include <doctest.h>

#include <cmath>
#include <sstream>

#include "../support/gradcheck.hpp"
#include "../support/op_cases.hpp"
#include "prognosis/adam.hpp"
#include "prognosis/checkpoint.hpp"
#include "prognosis/error.hpp"

using namespace prognosis;
using namespace prognosis::testing;

TEST_CASE("every operation matches central differences") {
  auto cases = op_cases();
  for (const auto& c : loss_cases()) cases.push_back(c);
  for (const auto& c : cases) {
    CAPTURE(c.name);
    for (std::uint64_t trial = 0; trial < 8; ++trial) {
      Rng rng(derive_seed(17, trial));
      OpTrial t = c.make(rng);
      const auto r = grad_check(t.graph, t.loss, t.point, t.tol, 24, trial);
      CAPTURE(r.worst);
      CHECK(r.max_rel < t.tol);
      CHECK(r.checked > 0);
    }
  }
}

TEST_CASE("affine on a hand-computed example") {
  Graph g;
  auto x = g.input("x", Tensor::vector({1.0, 2.0}));
  auto w = g.parameter("w", Tensor({2, 2}, {1.0, 0.0, 0.5, -1.0}));
  auto b = g.parameter("b", Tensor::vector({0.1, 0.2}));
  const auto& y = g.value(g.affine(x, w, b));
  CHECK(y[0] == doctest::Approx(1.1));
  CHECK(y[1] == doctest::Approx(-1.3));
}

TEST_CASE("conv2d agrees with a direct loop") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 1 + rng.below(3), o = 1 + rng.below(3), k = 1 + 2 * rng.below(2);
    const std::size_t stride = 1 + rng.below(2), pad = rng.below(2), hgt = k + rng.below(5), wid = k + rng.below(5);
    Tensor x = random_tensor(rng, {c, hgt, wid}), w = random_tensor(rng, {o, c, k, k}), b = random_tensor(rng, {o});
    Graph g;
    const Tensor& y = g.value(g.conv2d(g.input("x", x), g.parameter("w", w), g.parameter("b", b), stride, pad));
    const std::size_t oh = (hgt + 2 * pad - k) / stride + 1, ow = (wid + 2 * pad - k) / stride + 1;
    REQUIRE(y.shape() == Shape{o, oh, ow});
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b[oc];
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t di = 0; di < k; ++di)
              for (std::size_t dj = 0; dj < k; ++dj) {
                const long r = static_cast<long>(i * stride + di) - static_cast<long>(pad);
                const long q = static_cast<long>(j * stride + dj) - static_cast<long>(pad);
                if (r < 0 || q < 0 || r >= static_cast<long>(hgt) || q >= static_cast<long>(wid)) continue;
                acc += w[((oc * c + ic) * k + di) * k + dj] * x[(ic * hgt + r) * wid + q];
              }
          CHECK(y[(oc * oh + i) * ow + j] == doctest::Approx(acc).epsilon(1e-12));
        }
  }
}

TEST_CASE("max pooling keeps the window maximum") {
  Graph g;
  Tensor x({1, 2, 4}, {1, 5, 2, 0, 3, 4, 9, 8});
  const Tensor& y = g.value(g.max_pool2d(g.input("x", x), 2, 2));
  CHECK(y.shape() == Shape{1, 1, 2});
  CHECK(y[0] == 5);
  CHECK(y[1] == 9);
}

TEST_CASE("softmax rows sum to one and sigmoid stays inside (0, 1)") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Graph g;
    Tensor x = random_tensor(rng, {3, 4}, -30, 30);
    auto xi = g.input("x", x);
    const Tensor& s = g.value(g.softmax(xi, 1));
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 4; ++c) total += s[r * 4 + c];
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
    for (double v : g.value(g.sigmoid(xi)).values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("evaluate replays bit-identically and honours feeds") {
  Rng rng(9);
  OpTrial t = op_cases().front().make(rng);
  t.graph.mark_output("loss", t.loss);
  const auto a = t.graph.evaluate();
  const auto b = t.graph.evaluate();
  CHECK(a.at("loss") == b.at("loss"));
  NamedTensors feeds = t.point;
  feeds["x"][0] += 1.0;
  const auto c = t.graph.evaluate(feeds);
  CHECK(c.at("loss").item() != a.at("loss").item());
  CHECK_THROWS_AS(t.graph.evaluate({{"nope", Tensor::scalar(1)}}), Error);
}

TEST_CASE("parameters the loss does not reach get zero gradients") {
  Graph g;
  auto a = g.parameter("a", Tensor::vector({1.0, 2.0}));
  g.parameter("unused", Tensor::vector({3.0}));
  const auto grads = g.backward(g.sum(a));
  CHECK(grads.at("unused")[0] == 0.0);
  CHECK(grads.at("a")[1] == 1.0);
}

TEST_CASE("shape mismatches are rejected") {
  Graph g;
  auto a = g.input("a", Tensor({2}));
  auto b = g.input("b", Tensor({3}));
  CHECK_THROWS_AS(g.add(a, b), ShapeError);
  CHECK_THROWS_AS(g.matmul(g.input("m", Tensor({2, 3})), g.input("n", Tensor({2, 3}))), ShapeError);
  CHECK_THROWS_AS(g.backward(a), Error);
}

TEST_CASE("adam first step moves each parameter by the learning rate") {
  NamedTensors params{{"w", Tensor::vector({1.0, -2.0})}};
  NamedTensors grads{{"w", Tensor::vector({0.3, -4.0})}};
  AdamState state(AdamOptions{0.01});
  adam_step(params, grads, state);
  CHECK(params["w"][0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(params["w"][1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
  grads["w"][0] = std::nan("");
  CHECK_THROWS_AS(adam_step(params, grads, state), Error);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Rng rng(11);
  NamedTensors t{{"a", random_tensor(rng, {2, 3, 1})}, {"b.bias", random_tensor(rng, {4})}};
  std::stringstream buf;
  write_checkpoint(buf, t);
  CHECK(read_checkpoint(buf) == t);
  std::stringstream bad("MILX1234");
  CHECK_THROWS_AS(read_checkpoint(bad), Error);
}

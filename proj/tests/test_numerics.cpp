// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "idg/grad_check.hpp"
#include "idg/rng.hpp"
#include "idg/tape.hpp"
#include "idg/tensor.hpp"

using namespace idg;

namespace {

// Independent triple-loop reference for matmul.
Tensor<double> matmul_oracle(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> c({a.shape[0], b.shape[1]});
  for (std::size_t i = 0; i < a.shape[0]; ++i)
    for (std::size_t k = 0; k < a.shape[1]; ++k)
      for (std::size_t j = 0; j < b.shape[1]; ++j)
        c.at(i, j) += a.at(i, k) * b.at(k, j);
  return c;
}

}  // namespace

TEST_CASE("matmul identity and worked example") {
  Tensor<double> i2 = Tensor<double>::identity(2);
  Tensor<double> m({2, 2}, {1, 2, 3, 4});
  CHECK(max_abs_diff(matmul(i2, m), m) == 0.0);

  Tensor<double> col({2, 1}, {2, 3});
  CHECK(max_abs_diff(matmul(i2, col), col) == 0.0);

  // [DERIVED: triple-loop reference oracle]
  Tensor<double> b({2, 2}, {5, 6, 7, 8});
  Tensor<double> expect({2, 2}, {19, 22, 43, 50});
  CHECK(max_abs_diff(matmul(m, b), expect) == 0.0);
  CHECK(max_abs_diff(matmul(m, b), matmul_oracle(m, b)) == 0.0);
}

TEST_CASE("matmul against oracle on random shapes, all transpose modes") {
  Rng rng(101);
  for (int it = 0; it < 50; ++it) {
    std::size_t m = 1 + rng.uniform_int(6), k = 1 + rng.uniform_int(6),
                n = 1 + rng.uniform_int(6);
    Tensor<double> a = Tensor<double>::randn({m, k}, rng);
    Tensor<double> b = Tensor<double>::randn({k, n}, rng);
    CHECK(max_abs_diff(matmul(a, b), matmul_oracle(a, b)) < 1e-12);
    CHECK(max_abs_diff(matmul(transpose(a), b, true, false),
                       matmul_oracle(a, b)) < 1e-12);
    CHECK(max_abs_diff(matmul(a, transpose(b), false, true),
                       matmul_oracle(a, b)) < 1e-12);
    CHECK(max_abs_diff(matmul(transpose(a), transpose(b), true, true),
                       matmul_oracle(a, b)) < 1e-12);
  }
}

TEST_CASE("matmul associativity on random triples") {
  Rng rng(7);
  for (int it = 0; it < 20; ++it) {
    Tensor<double> a = Tensor<double>::randn({3, 4}, rng);
    Tensor<double> b = Tensor<double>::randn({4, 5}, rng);
    Tensor<double> c = Tensor<double>::randn({5, 2}, rng);
    Tensor<double> lhs = matmul(matmul(a, b), c);
    Tensor<double> rhs = matmul(a, matmul(b, c));
    double scale_ref = 0.0;
    for (double v : lhs.data) scale_ref = std::max(scale_ref, std::abs(v));
    CHECK(max_abs_diff(lhs, rhs) < 1e-10 * std::max(1.0, scale_ref));
  }
}

TEST_CASE("matmul shape errors name both operands") {
  Tensor<double> a({2, 3});
  Tensor<double> b({2, 3});
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       doctest::Contains("[2x3]"), std::invalid_argument);
}

TEST_CASE("elementwise operations") {
  Tensor<double> a({1, 2}, {-1, 2});
  CHECK(abs(a).data == std::vector<double>{1, 2});
  Tensor<double> x({1, 2}, {3, 5});
  Tensor<double> y({1, 2}, {1, 2});
  CHECK(sub(x, y).data == std::vector<double>{2, 3});
  Tensor<double> z = Tensor<double>::zeros({1, 2});
  CHECK(mul(a, z).data == std::vector<double>{0, 0});
  CHECK(add(x, y).data == std::vector<double>{4, 7});
  CHECK(scale(x, 2.0).data == std::vector<double>{6, 10});
  CHECK_THROWS_AS(add(a, Tensor<double>({2, 2})), std::invalid_argument);
}

TEST_CASE("reshape round-trips bitwise") {
  Rng rng(3);
  Tensor<double> t = Tensor<double>::randn({4, 6}, rng);
  Tensor<double> rt = reshape(reshape(t, {3, 8}), {4, 6});
  CHECK(rt.data == t.data);
  CHECK(rt.shape == t.shape);
  CHECK_THROWS_AS(reshape(t, {5, 5}), std::invalid_argument);
}

TEST_CASE("rng determinism and distribution sanity") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng base(9);
  Rng c1 = base.split(1), c2 = base.split(2);
  CHECK(c1.next_u64() != c2.next_u64());
  // split() leaves the parent stream untouched.
  Rng base2(9);
  base2.split(1);
  CHECK(base.next_u64() == base2.next_u64());

  Rng r(5);
  double mean = 0, var = 0;
  const int n = 20000;
  std::vector<double> xs(n);
  for (auto& x : xs) x = r.normal();
  for (double x : xs) mean += x;
  mean /= n;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= n;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("finite_diff_check basics") {
  // f(x) = sum(x^2): gradient 2x.
  Differentiable f;
  f.value = [](const std::vector<Tensor<double>>& p) {
    double s = 0;
    for (double v : p[0].data) s += v * v;
    return s;
  };
  f.gradients = [](const std::vector<Tensor<double>>& p) {
    Tensor<double> g = p[0];
    for (auto& v : g.data) v *= 2;
    return std::vector<Tensor<double>>{g};
  };
  Tensor<double> x({1, 3}, {3.0, -1.0, 0.5});
  CHECK(finite_diff_check(f, {x}, 1e-6) < 1e-8);

  Differentiable c;
  c.value = [](const std::vector<Tensor<double>>&) { return 4.0; };
  c.gradients = [](const std::vector<Tensor<double>>& p) {
    return std::vector<Tensor<double>>{Tensor<double>::zeros(p[0].shape)};
  };
  CHECK(finite_diff_check(c, {x}, 1e-6) < 1e-8);

  CHECK_THROWS_AS(finite_diff_check(f, {x}, 1e-2), std::invalid_argument);
}

TEST_CASE("tape primitives pass finite-difference checks") {
  Rng rng(77);
  auto check_unary = [&](const char* name, auto build) {
    Tensor<double> x0 = Tensor<double>::randn({3, 4}, rng, 0.7);
    if (std::string(name) == "log")
      for (auto& v : x0.data) v = std::abs(v) + 0.5;
    Rng read_rng(5);
    Tensor<double> read = Tensor<double>::randn({3, 4}, read_rng);
    Differentiable f;
    auto eval = [&](const std::vector<Tensor<double>>& p,
                    std::vector<Tensor<double>>* g) {
      Tape<double> t;
      Var x = t.input(p[0], true);
      Var r = t.sum(t.mul(build(t, x), t.constant(read)));
      if (g) {
        t.backward(r);
        *g = {t.grad(x)};
      }
      return t.val(r).data[0];
    };
    f.value = [&](const std::vector<Tensor<double>>& p) {
      return eval(p, nullptr);
    };
    f.gradients = [&](const std::vector<Tensor<double>>& p) {
      std::vector<Tensor<double>> g;
      eval(p, &g);
      return g;
    };
    INFO(name);
    CHECK(finite_diff_check(f, {x0}, 1e-6, {name}) < 1e-7);
  };

  check_unary("sigmoid", [](Tape<double>& t, Var x) { return t.sigmoid(x); });
  check_unary("exp", [](Tape<double>& t, Var x) { return t.exp(x); });
  check_unary("log", [](Tape<double>& t, Var x) { return t.log(x); });
  check_unary("softmax", [](Tape<double>& t, Var x) { return t.softmax_rows(x); });
  check_unary("neg", [](Tape<double>& t, Var x) { return t.neg(x); });
  check_unary("transpose", [](Tape<double>& t, Var x) {
    return t.transpose(t.transpose(x));
  });
}

TEST_CASE("tape layer_norm and conv gradcheck") {
  Rng rng(88);
  Tensor<double> x0 = Tensor<double>::randn({3, 16}, rng);  // 3 ch, 4x4
  Tensor<double> w0 = Tensor<double>::randn({2, 27}, rng, 0.3);
  Tensor<double> b0 = Tensor<double>::randn({1, 2}, rng, 0.1);
  Tensor<double> read = Tensor<double>::randn({4, 2}, rng);
  auto eval = [&](const std::vector<Tensor<double>>& p,
                  std::vector<Tensor<double>>* g) {
    Tape<double> t;
    Var x = t.input(p[0], true);
    Var w = t.input(p[1], true);
    Var b = t.input(p[2], true);
    Var y = t.conv3x3s2(x, w, b, 3, 4, 4);  // -> 4 tokens x 2 channels
    Var r = t.sum(t.mul(y, t.constant(read)));
    if (g) {
      t.backward(r);
      *g = {t.grad(x), t.grad(w), t.grad(b)};
    }
    return t.val(r).data[0];
  };
  Differentiable f;
  f.value = [&](const std::vector<Tensor<double>>& p) { return eval(p, nullptr); };
  f.gradients = [&](const std::vector<Tensor<double>>& p) {
    std::vector<Tensor<double>> g;
    eval(p, &g);
    return g;
  };
  CHECK(finite_diff_check(f, {x0, w0, b0}, 1e-6, {"x", "w", "b"}) < 1e-8);

  Tensor<double> lx = Tensor<double>::randn({4, 6}, rng);
  Tensor<double> lg = Tensor<double>::full({1, 6}, 1.0);
  Tensor<double> lb = Tensor<double>::zeros({1, 6});
  Tensor<double> lr = Tensor<double>::randn({4, 6}, rng);
  auto leval = [&](const std::vector<Tensor<double>>& p,
                   std::vector<Tensor<double>>* g) {
    Tape<double> t;
    Var x = t.input(p[0], true);
    Var gn = t.input(p[1], true);
    Var bs = t.input(p[2], true);
    Var r = t.sum(t.mul(t.layer_norm(x, gn, bs), t.constant(lr)));
    if (g) {
      t.backward(r);
      *g = {t.grad(x), t.grad(gn), t.grad(bs)};
    }
    return t.val(r).data[0];
  };
  Differentiable fl;
  fl.value = [&](const std::vector<Tensor<double>>& p) { return leval(p, nullptr); };
  fl.gradients = [&](const std::vector<Tensor<double>>& p) {
    std::vector<Tensor<double>> g;
    leval(p, &g);
    return g;
  };
  CHECK(finite_diff_check(fl, {lx, lg, lb}, 1e-6, {"x", "gain", "bias"}) < 1e-7);
}

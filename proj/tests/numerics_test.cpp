#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "stpt/num/adam.hpp"
#include "stpt/num/ops.hpp"
#include "stpt/num/rng.hpp"
#include "stpt/num/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace stpt;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double sd = 1.0) {
  Arr v(shape_numel(shape));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.gauss(0.0, sd);
  return Tensor::from_array(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("matmul identity and basis selection") {
  auto I2 = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  auto A = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  auto C = matmul(I2, A);
  CHECK(C.at(0, 0) == 1);
  CHECK(C.at(0, 1) == 2);
  CHECK(C.at(1, 0) == 3);
  CHECK(C.at(1, 1) == 4);

  auto e = Tensor::from_values({2, 1}, {0, 1});
  auto picked = matmul(I2, e);
  CHECK(picked.at(0, 0) == 0);
  CHECK(picked.at(1, 0) == 1);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(11);
  auto A = random_tensor({3, 4}, rng, false);
  auto B = random_tensor({4, 2}, rng, false);
  auto C = matmul(A, B);
  // Independent element-wise oracle.
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += A.at(i, k) * B.at(k, j);
      CHECK(std::abs(C.at(i, j) - acc) < 1e-12);
    }
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  auto A = Tensor::zeros({3, 4});
  auto B = Tensor::zeros({5, 2});
  CHECK_THROWS_WITH_AS(matmul(A, B), doctest::Contains("[3x4]"), std::invalid_argument);
}

TEST_CASE("softmax basics") {
  auto y = softmax(Tensor::from_values({2}, {0, 0}));
  CHECK(y.at(0) == doctest::Approx(0.5).epsilon(1e-12));

  auto y2 = softmax(Tensor::from_values({2}, {std::log(2.0), 0.0}));
  CHECK(y2.at(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(y2.at(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // No overflow at extreme logits.
  auto y3 = softmax(Tensor::from_values({2}, {1000.0, 0.0}));
  CHECK(y3.at(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y3.at(1) < 1e-300);
  CHECK(std::isfinite(y3.at(0)));

  CHECK_THROWS_AS(softmax(Tensor::from_values({2}, {std::nan(""), 0.0})), std::runtime_error);
}

TEST_CASE("softmax sums to one and is shift invariant") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({3, 7}, rng, false, 3.0);
    auto y = softmax(x);
    for (int r = 0; r < 3; ++r) {
      double s = 0.0;
      for (int c = 0; c < 7; ++c) s += y.at(r, c);
      CHECK(std::abs(s - 1.0) < 1e-10);
    }
    auto shifted = softmax(add_scalar(x, 17.25));
    for (Eigen::Index i = 0; i < y.array().size(); ++i) {
      CHECK(std::abs(y.array()[i] - shifted.array()[i]) < 1e-10);
    }
  }
}

TEST_CASE("kl divergence identities and oracle") {
  auto p = Tensor::from_values({2}, {0.5, 0.5});
  auto lq = log_softmax(Tensor::from_values({2}, {0.0, 0.0}));
  CHECK(kl_divergence(p, lq).scalar_value() == doctest::Approx(0.0).epsilon(1e-15));

  auto p2 = Tensor::from_values({2}, {1.0, 0.0});
  CHECK(kl_divergence(p2, lq).scalar_value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Direct-summation oracle over n=5.
  Rng rng(7);
  Arr pa(5), qa(5);
  for (int i = 0; i < 5; ++i) pa[i] = rng.uniform(0.1, 1.0);
  for (int i = 0; i < 5; ++i) qa[i] = rng.uniform(0.1, 1.0);
  pa /= pa.sum();
  qa /= qa.sum();
  double expected = 0.0;
  for (int i = 0; i < 5; ++i) expected += pa[i] * (std::log(pa[i]) - std::log(qa[i]));
  auto pt = Tensor::from_array({5}, pa);
  auto lqt = Tensor::from_array({5}, qa.log());
  CHECK(kl_divergence(pt, lqt).scalar_value() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(kl_divergence(pt, lqt).scalar_value() >= -1e-12);

  // self-KL is zero
  auto self_kl = kl_divergence(pt, Tensor::from_array({5}, pa.log()));
  CHECK(std::abs(self_kl.scalar_value()) < 1e-12);

  CHECK_THROWS_AS(kl_divergence(Tensor::from_values({2}, {0.9, 0.3}), lq), std::invalid_argument);
}

TEST_CASE("cross entropy values") {
  auto uniform4 = Tensor::zeros({4});
  CHECK(cross_entropy(uniform4, 2).scalar_value() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  auto confident = Tensor::from_values({2}, {10.0, -10.0});
  CHECK(cross_entropy(confident, 0).scalar_value() < 1e-8);

  CHECK_THROWS_AS(cross_entropy(uniform4, 4), std::out_of_range);
  CHECK_THROWS_AS(cross_entropy(uniform4, -1), std::out_of_range);

  // log-softmax oracle over random logits, all targets
  Rng rng(3);
  auto logits = random_tensor({6}, rng, false, 2.0);
  double mx = logits.array().maxCoeff();
  double lse = mx + std::log((logits.array() - mx).exp().sum());
  for (int t = 0; t < 6; ++t) {
    double expected = -(logits.at(t) - lse);
    CHECK(cross_entropy(logits, t).scalar_value() == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("layer norm moments") {
  auto gain = Tensor::full({4}, 1.0);
  auto bias = Tensor::zeros({4});

  auto constant = Tensor::full({4}, 3.7);
  auto y = layer_norm(constant, gain, bias);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(y.at(i)) < 1e-9);

  auto pm = layer_norm(Tensor::from_values({2}, {1.0, -1.0}), Tensor::full({2}, 1.0), Tensor::zeros({2}));
  CHECK(pm.at(0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(pm.at(1) == doctest::Approx(-1.0).epsilon(1e-5));

  Rng rng(9);
  auto x = random_tensor({5, 16}, rng, false, 2.0);
  auto out = layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}));
  for (int r = 0; r < 5; ++r) {
    double m = 0.0, v = 0.0;
    for (int c = 0; c < 16; ++c) m += out.at(r, c);
    m /= 16;
    for (int c = 0; c < 16; ++c) v += (out.at(r, c) - m) * (out.at(r, c) - m);
    v /= 16;
    CHECK(std::abs(m) < 1e-10);
    CHECK(std::abs(v - 1.0) < 1e-6);
  }

  CHECK_THROWS_AS(layer_norm(Tensor::zeros({1}), Tensor::zeros({1}), Tensor::zeros({1})),
                  std::invalid_argument);
}

TEST_CASE("backward analytic cases") {
  // loss = x^2 at x=3 -> grad 6
  auto x = Tensor::scalar(3.0, true);
  auto loss = mul(x, x);
  backward(loss);
  CHECK(x.grad_array()[0] == doctest::Approx(6.0).epsilon(1e-12));

  // softmax-CE grad = softmax - one_hot
  auto logits = Tensor::from_values({3}, {0.3, -0.7, 1.1}, true);
  auto ce = cross_entropy(logits, 1);
  backward(ce);
  auto sm = softmax(logits.detach());
  for (int i = 0; i < 3; ++i) {
    double expected = sm.at(i) - (i == 1 ? 1.0 : 0.0);
    CHECK(logits.grad_array()[i] == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("backward twice on a consumed graph is a usage error") {
  auto x = Tensor::scalar(2.0, true);
  auto loss = mul(x, x);
  backward(loss);
  CHECK_THROWS_WITH_AS(backward(loss), doctest::Contains("consumed"), std::runtime_error);
}

TEST_CASE("backward requires a recorded graph") {
  auto plain = Tensor::scalar(1.0, false);
  CHECK_THROWS_AS(backward(plain), std::runtime_error);
  auto vec = Tensor::zeros({3}, true);
  CHECK_THROWS_AS(backward(mul(vec, vec)), std::invalid_argument);  // non-scalar
}

TEST_CASE("no-grad mode records nothing") {
  auto x = Tensor::scalar(2.0, true);
  Tensor y;
  {
    NoGradGuard ng;
    y = mul(x, x);
  }
  CHECK(!y.requires_grad());
  CHECK(y.is_leaf());
}

TEST_CASE("finite differences agree for every primitive") {
  Rng rng(21);
  const double tol = 1e-4;

  SUBCASE("elementwise, matmul, reductions") {
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({3, 4}, rng);
    auto w = random_tensor({4, 5}, rng);
    auto r = random_tensor({5}, rng);
    auto chk = testing::gradcheck(
        [&] {
          auto h = mul(add(a, b), sub(a, scale(b, 0.3)));
          auto z = add_rowwise(matmul(h, w), r);
          return mean(mul(z, z));
        },
        {{"a", a}, {"b", b}, {"w", w}, {"r", r}});
    CAPTURE(chk.worst);
    CHECK(chk.max_rel_err < tol);
  }

  SUBCASE("softmax, log_softmax, gelu, sqrt, div") {
    auto x = random_tensor({2, 6}, rng);
    auto chk = testing::gradcheck(
        [&] {
          auto s = softmax(x);
          auto l = log_softmax(gelu(x));
          auto denom = add_scalar(stpt::sqrt(sum(mul(s, s))), 0.5);
          return div(sum(mul(s, l)), denom);
        },
        {{"x", x}});
    CAPTURE(chk.worst);
    CHECK(chk.max_rel_err < tol);
  }

  SUBCASE("layer_norm") {
    auto x = random_tensor({3, 8}, rng);
    auto g = random_tensor({8}, rng);
    auto b = random_tensor({8}, rng);
    auto chk = testing::gradcheck(
        [&] {
          auto y = layer_norm(x, g, b);
          return mean(mul(y, y));
        },
        {{"x", x}, {"g", g}, {"b", b}});
    CAPTURE(chk.worst);
    CHECK(chk.max_rel_err < tol);
  }

  SUBCASE("kl divergence both arguments") {
    // p sits behind a softmax so perturbations stay on the simplex.
    auto z = random_tensor({5}, rng);
    auto q = random_tensor({5}, rng);
    auto chk = testing::gradcheck([&] { return kl_divergence(softmax(z), log_softmax(q)); },
                                  {{"z", z}, {"q", q}});
    CAPTURE(chk.worst);
    CHECK(chk.max_rel_err < tol);

    auto Z = random_tensor({2, 3}, rng);
    auto Q = random_tensor({2, 3}, rng);
    auto chk2 = testing::gradcheck(
        [&] { return kl_divergence_rows_sum(softmax(Z), log_softmax(Q)); }, {{"Z", Z}, {"Q", Q}});
    CHECK(chk2.max_rel_err < tol);
  }

  SUBCASE("cross entropy rows") {
    auto logits = random_tensor({4, 5}, rng);
    std::vector<int> tgt{1, 0, 4, 2};
    auto chk = testing::gradcheck(
        [&] { return cross_entropy_rows(logits, tgt, Reduction::Mean); }, {{"logits", logits}});
    CHECK(chk.max_rel_err < tol);
  }

  SUBCASE("embedding, gather, concat, slice, select") {
    auto table = random_tensor({6, 4}, rng);
    std::vector<int> ids{0, 3, 3, 5};
    std::vector<std::int64_t> rows{1, 2};
    auto chk = testing::gradcheck(
        [&] {
          auto e = embedding(table, ids);
          auto g = gather_rows(e, rows);
          auto parts = concat({slice_rows(e, 0, 2), g}, 0);
          auto cols = concat_cols({slice_cols(parts, 0, 2), slice_cols(parts, 2, 4)});
          auto row = select_row(cols, 1);
          return add(sum(mul(cols, cols)), sum(mul(row, row)));
        },
        {{"table", table}});
    CHECK(chk.max_rel_err < tol);
  }

  SUBCASE("transpose and reshape") {
    auto x = random_tensor({3, 4}, rng);
    auto chk = testing::gradcheck(
        [&] {
          auto t = transpose(x);
          auto r = reshape(t, {2, 6});
          return sum(mul(r, r));
        },
        {{"x", x}});
    CHECK(chk.max_rel_err < tol);
  }

  SUBCASE("unfold and mask rows") {
    auto x = random_tensor({9, 3}, rng);
    auto fill = random_tensor({3}, rng);
    std::vector<std::int64_t> masked{1, 4, 5};
    auto chk = testing::gradcheck(
        [&] {
          auto u = unfold_rows(mask_rows(x, masked, fill), 3, 2);
          return mean(mul(u, u));
        },
        {{"x", x}, {"fill", fill}});
    CHECK(chk.max_rel_err < tol);
  }

  SUBCASE("cosine rows") {
    auto u = random_tensor({6}, rng);
    auto V = random_tensor({4, 6}, rng);
    auto chk = testing::gradcheck(
        [&] { return mean(mul(cosine_rows(u, V), cosine_rows(u, V))); }, {{"u", u}, {"V", V}});
    CHECK(chk.max_rel_err < tol);
  }
}

TEST_CASE("unfold length formula and masking semantics") {
  auto x = Tensor::from_values({8, 1}, {0, 1, 2, 3, 4, 5, 6, 7});
  auto u = unfold_rows(x, 2, 2);
  CHECK(u.rows() == 4);
  CHECK(u.at(1, 0) == 2);
  CHECK(u.at(1, 1) == 3);
  CHECK_THROWS_AS(unfold_rows(Tensor::zeros({1, 1}), 2, 2), std::invalid_argument);

  Rng rng(2);
  auto z = random_tensor({5, 3}, rng, false);
  auto fill = Tensor::from_values({3}, {9, 9, 9});
  auto masked = mask_rows(z, {0, 4}, fill);
  CHECK(masked.at(0, 1) == 9);
  CHECK(masked.at(4, 2) == 9);
  // untouched rows are bit-identical
  for (int r = 1; r < 4; ++r) {
    for (int c = 0; c < 3; ++c) {
      CHECK(std::memcmp(&masked.array()[r * 3 + c], &z.array()[r * 3 + c], sizeof(double)) == 0);
    }
  }
}

TEST_CASE("adam behavior") {
  SUBCASE("zero grad leaves parameters unchanged") {
    auto p = Tensor::from_values({3}, {1.0, -2.0, 0.5}, true);
    AdamOptimizer opt({{"p", p}}, {});
    auto loss = sum(mul(p, scale(p, 0.0)));  // gradient is exactly zero
    backward(loss);
    Arr before = p.array();
    opt.step();
    for (int i = 0; i < 3; ++i) CHECK(p.array()[i] == before[i]);
  }

  SUBCASE("first step displacement is about lr") {
    auto p = Tensor::scalar(1.0, true);
    AdamConfig cfg;
    cfg.lr = 0.01;
    AdamOptimizer opt({{"p", p}}, cfg);
    auto loss = scale(p, 0.5);  // grad = 0.5
    backward(loss);
    opt.step();
    // step 1: mhat = g, vhat = g^2, delta = lr*g/(|g|+eps) ~ lr
    CHECK(std::abs((1.0 - p.scalar_value()) - 0.01) < 1e-6);
  }

  SUBCASE("converges on a quadratic") {
    auto p = Tensor::scalar(1.0, true);
    AdamConfig cfg;
    cfg.lr = 0.1;
    AdamOptimizer opt({{"p", p}}, cfg);
    for (int i = 0; i < 100; ++i) {
      auto loss = mul(p, p);
      backward(loss);
      opt.step();
    }
    CHECK(std::abs(p.scalar_value()) < 0.05);
  }

  SUBCASE("missing grad is a usage error") {
    auto p = Tensor::scalar(1.0, true);
    AdamOptimizer opt({{"p", p}}, {});
    CHECK_THROWS_AS(opt.apply("p", p), std::runtime_error);
  }
}

TEST_CASE("cosine similarity") {
  std::vector<double> u{1, 2, 3}, v{1, 2, 3}, nv{-1, -2, -3}, e1{1, 0, 0}, e2{0, 1, 0};
  CHECK(cosine_similarity(u, v) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity(u, nv) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(cosine_similarity(e1, e2) == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<double> z{0, 0, 0};
  CHECK_THROWS_AS(cosine_similarity(u, z), std::invalid_argument);
}

TEST_CASE("replay determinism is bit exact") {
  Rng rng(33);
  auto a = random_tensor({4, 4}, rng);
  auto b = random_tensor({4, 4}, rng);
  auto run = [&] {
    auto y = softmax(matmul(gelu(a), transpose(b)));
    return mean(mul(y, y));
  };
  auto l1 = run();
  auto l2 = run();
  double v1 = l1.scalar_value(), v2 = l2.scalar_value();
  CHECK(std::memcmp(&v1, &v2, sizeof(double)) == 0);
}

TEST_CASE("rng streams are deterministic and well distributed") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());

  Rng r(7);
  double acc = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) acc += r.gauss();
  CHECK(std::abs(acc / n) < 0.01);

  Rng pr(9);
  double psum = 0.0;
  for (int i = 0; i < 100000; ++i) psum += pr.poisson(3.0);
  CHECK(psum / 100000.0 == doctest::Approx(3.0).epsilon(0.02));

  CHECK(Rng::derive(1, 0) != Rng::derive(1, 1));
  CHECK(Rng::derive(1, 0) == Rng::derive(1, 0));
}

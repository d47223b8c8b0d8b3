#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "ulmv/gradcheck.hpp"
#include "ulmv/init.hpp"
#include "ulmv/tape.hpp"

using namespace ulmv;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data) v = dist(rng);
  return t;
}

// Keeps values away from the ReLU kink so central differences stay valid.
Tensor<double> random_tensor_away_from_zero(Shape shape, std::mt19937_64& rng) {
  Tensor<double> t = random_tensor(std::move(shape), rng);
  for (double& v : t.data)
    if (std::abs(v) < 0.05) v = v < 0 ? v - 0.05 : v + 0.05;
  return t;
}

// Runs forward+backward via `build`, then verifies analytic gradients of all
// params against central differences.
template <typename BuildFn>
GradCheckReport check_gradients(std::vector<Parameter<double>*> params, BuildFn&& build,
                                int samples = 100, uint64_t seed = 42) {
  for (Parameter<double>* p : params) p->grad.fill(0.0);
  {
    Tape<double> tape;
    tape.backward(build(tape));
  }
  auto loss_fn = [&] {
    Tape<double> tape(false);
    return tape.val(build(tape))[0];
  };
  GradCheckOptions opt;
  opt.sample_count = samples;
  opt.seed = seed;
  return finite_difference_check(loss_fn, params, opt);
}

}  // namespace

TEST_CASE("matmul identity") {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  auto eye = tape.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  auto c = tape.matmul(a, eye);
  CHECK(tape.val(c).data == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("relu definition") {
  Tape<double> tape;
  auto y = tape.relu(tape.constant(Tensor<double>({3}, {-1, 0, 2})));
  CHECK(tape.val(y).data == std::vector<double>{0, 0, 2});
}

TEST_CASE("softmax symmetry") {
  Tape<double> tape;
  auto y = tape.softmax_last(tape.constant(Tensor<double>({2}, {0, 0})));
  CHECK(tape.val(y)[0] == doctest::Approx(0.5));
  CHECK(tape.val(y)[1] == doctest::Approx(0.5));
}

TEST_CASE("masked_softmax hand values") {
  Tape<double> tape;
  auto scores = tape.constant(Tensor<double>({2}, {1.0, 2.0}));

  SUBCASE("both keys present") {
    auto y = tape.masked_softmax(scores, Tensor<double>({2}, {1, 1}), -1e9);
    CHECK(tape.val(y)[0] == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(tape.val(y)[1] == doctest::Approx(0.7311).epsilon(1e-4));
  }
  SUBCASE("single unmasked key is exact") {
    auto y = tape.masked_softmax(scores, Tensor<double>({2}, {1, 0}), -1e9);
    CHECK(tape.val(y)[0] == 1.0);
    CHECK(tape.val(y)[1] == 0.0);
  }
  SUBCASE("symmetry among unmasked") {
    auto s = tape.constant(Tensor<double>({3}, {5, 5, 5}));
    auto y = tape.masked_softmax(s, Tensor<double>({3}, {1, 1, 0}), -1e9);
    CHECK(tape.val(y)[0] == 0.5);
    CHECK(tape.val(y)[1] == 0.5);
    CHECK(tape.val(y)[2] == 0.0);
  }
  SUBCASE("all keys masked is an error") {
    CHECK_THROWS_AS(tape.masked_softmax(scores, Tensor<double>({2}, {0, 0}), -1e9), ShapeError);
  }
}

TEST_CASE("masked_softmax with all-ones mask is bitwise softmax") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor<double> x = random_tensor({4, 7}, rng, -30.0, 30.0);
    Tape<double> tape;
    auto a = tape.constant(x);
    auto plain = tape.softmax_last(a);
    auto masked = tape.masked_softmax(a, Tensor<double>::full({7}, 1.0), -1e9);
    CHECK(tape.val(plain).data == tape.val(masked).data);
  }
}

TEST_CASE("masked_softmax exactly ignores masked-score content") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor<double> mask(Shape{6});
    std::uniform_int_distribution<int> bit(0, 1);
    int unmasked = 0;
    for (int j = 0; j < 6; ++j) {
      mask[j] = bit(rng);
      unmasked += mask[j] != 0;
    }
    if (unmasked == 0) mask[0] = 1;

    Tensor<double> x = random_tensor({3, 6}, rng, -5.0, 5.0);
    Tensor<double> x2 = x;
    std::uniform_real_distribution<double> wild(-1e6, 1e6);
    for (int r = 0; r < 3; ++r)
      for (int j = 0; j < 6; ++j)
        if (mask[j] == 0.0) x2.at2(r, j) = wild(rng);

    Tape<double> tape;
    auto y1 = tape.masked_softmax(tape.constant(x), mask, -1e9);
    auto y2 = tape.masked_softmax(tape.constant(x2), mask, -1e9);
    CHECK(tape.val(y1).data == tape.val(y2).data);  // exact, not approximate
  }
}

TEST_CASE("masked_softmax rows sum to one") {
  std::mt19937_64 rng(3);
  Tensor<double> x = random_tensor({5, 9}, rng, -20.0, 20.0);
  Tensor<double> mask(Shape{9});
  for (int j = 0; j < 9; ++j) mask[j] = j % 3 == 0 ? 1.0 : (j % 3 == 1 ? 0.0 : 1.0);
  Tape<double> tape;
  auto y = tape.masked_softmax(tape.constant(x), mask, -1e9);
  for (int r = 0; r < 5; ++r) {
    double sum = 0;
    for (int j = 0; j < 9; ++j) sum += tape.val(y).at2(r, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("masked_softmax per-query mask (causal)") {
  std::mt19937_64 rng(4);
  Tensor<double> x = random_tensor({4, 4}, rng);
  Tensor<double> causal(Shape{4, 4});
  for (int q = 0; q < 4; ++q)
    for (int k = 0; k <= q; ++k) causal.at2(q, k) = 1.0;
  Tape<double> tape;
  auto y = tape.masked_softmax(tape.constant(x), causal, -1e9);
  for (int q = 0; q < 4; ++q)
    for (int k = q + 1; k < 4; ++k) CHECK(tape.val(y).at2(q, k) == 0.0);
}

TEST_CASE("finite_difference_check on x^2") {
  ParameterStore<double> store;
  Parameter<double>* x = store.create("x", Tensor<double>({1, 1}, {3.0}));
  auto report = check_gradients({x}, [&](Tape<double>& t) {
    auto xi = t.use(x);
    return t.mean_all(t.matmul(xi, xi));  // f(x) = x*x
  });
  CHECK(x->grad[0] == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(report.max_rel_error <= 1e-9);  // central difference is exact for quadratics
}

TEST_CASE("finite_difference_check on constant sum(softmax)") {
  std::mt19937_64 rng(5);
  ParameterStore<double> store;
  Parameter<double>* x = store.create("x", random_tensor({6}, rng));
  auto report = check_gradients({x}, [&](Tape<double>& t) {
    return t.scale(t.mean_all(t.softmax_last(t.use(x))), 6.0);
  });
  CHECK(report.max_abs_error <= 1e-8);  // gradient is identically zero
  for (double g : x->grad.data) CHECK(std::abs(g) <= 1e-12);
}

TEST_CASE("gradcheck: every primitive kind at 1e-4") {
  std::mt19937_64 rng(7);

  SUBCASE("matmul") {
    ParameterStore<double> store;
    auto* a = store.create("a", random_tensor({3, 4}, rng));
    auto* b = store.create("b", random_tensor({4, 5}, rng));
    CHECK(check_gradients({a, b}, [&](Tape<double>& t) {
            return t.mean_all(t.relu(t.matmul(t.use(a), t.use(b))));
          }).pass(1e-4));
  }
  SUBCASE("matmul transposed") {
    ParameterStore<double> store;
    auto* a = store.create("a", random_tensor({3, 4}, rng));
    auto* b = store.create("b", random_tensor({5, 4}, rng));
    CHECK(check_gradients({a, b}, [&](Tape<double>& t) {
            return t.mean_all(t.gelu(t.matmul(t.use(a), t.use(b), true)));
          }).pass(1e-4));
  }
  SUBCASE("linear") {
    ParameterStore<double> store;
    auto* x = store.create("x", random_tensor({4, 6}, rng));
    auto* w = store.create("w", random_tensor({6, 3}, rng));
    auto* b = store.create("b", random_tensor({3}, rng));
    CHECK(check_gradients({x, w, b}, [&](Tape<double>& t) {
            return t.mean_all(t.gelu(t.linear(t.use(x), t.use(w), t.use(b))));
          }).pass(1e-4));
  }
  SUBCASE("conv2d stride 1") {
    ParameterStore<double> store;
    auto* x = store.create("x", random_tensor({2, 8, 8}, rng));
    auto* w = store.create("w", random_tensor({3, 2, 3, 3}, rng, -0.4, 0.4));
    auto* b = store.create("b", random_tensor({3}, rng));
    CHECK(check_gradients({x, w, b}, [&](Tape<double>& t) {
            return t.mean_all(t.gelu(t.conv2d(t.use(x), t.use(w), t.use(b), 1)));
          }).pass(1e-4));
  }
  SUBCASE("conv2d stride 2") {
    ParameterStore<double> store;
    auto* x = store.create("x", random_tensor({2, 9, 9}, rng));
    auto* w = store.create("w", random_tensor({4, 2, 3, 3}, rng, -0.4, 0.4));
    auto* b = store.create("b", random_tensor({4}, rng));
    CHECK(check_gradients({x, w, b}, [&](Tape<double>& t) {
            return t.mean_all(t.gelu(t.conv2d(t.use(x), t.use(w), t.use(b), 2)));
          }).pass(1e-4));
  }
  SUBCASE("relu") {
    ParameterStore<double> store;
    auto* x = store.create("x", random_tensor_away_from_zero({40}, rng));
    CHECK(check_gradients({x}, [&](Tape<double>& t) { return t.mean_all(t.relu(t.use(x))); }).pass(1e-4));
  }
  SUBCASE("gelu") {
    ParameterStore<double> store;
    auto* x = store.create("x", random_tensor({40}, rng, -2.0, 2.0));
    CHECK(check_gradients({x}, [&](Tape<double>& t) { return t.mean_all(t.gelu(t.use(x))); }).pass(1e-4));
  }
  SUBCASE("softmax_last_axis") {
    ParameterStore<double> store;
    auto* x = store.create("x", random_tensor({4, 6}, rng, -2.0, 2.0));
    auto* pick = store.create("pick", random_tensor({6, 2}, rng));
    CHECK(check_gradients({x, pick}, [&](Tape<double>& t) {
            return t.mean_all(t.matmul(t.softmax_last(t.use(x)), t.use(pick)));
          }).pass(1e-4));
  }
  SUBCASE("masked_softmax") {
    ParameterStore<double> store;
    auto* x = store.create("x", random_tensor({4, 6}, rng, -2.0, 2.0));
    auto* pick = store.create("pick", random_tensor({6, 2}, rng));
    Tensor<double> mask({6}, {1, 0, 1, 1, 0, 1});
    auto report = check_gradients({x, pick}, [&](Tape<double>& t) {
      return t.mean_all(t.matmul(t.masked_softmax(t.use(x), mask, -1e9), t.use(pick)));
    });
    CHECK(report.pass(1e-4));
    // masked columns receive exactly zero gradient
    for (int r = 0; r < 4; ++r) {
      CHECK(x->grad.at2(r, 1) == 0.0);
      CHECK(x->grad.at2(r, 4) == 0.0);
    }
  }
  SUBCASE("layer_norm") {
    ParameterStore<double> store;
    auto* x = store.create("x", random_tensor({3, 8}, rng));
    auto* g = store.create("g", random_tensor({8}, rng, 0.5, 1.5));
    auto* b = store.create("b", random_tensor({8}, rng));
    auto* pick = store.create("pick", random_tensor({8, 2}, rng));
    CHECK(check_gradients({x, g, b, pick}, [&](Tape<double>& t) {
            return t.mean_all(t.matmul(t.layer_norm(t.use(x), t.use(g), t.use(b)), t.use(pick)));
          }).pass(1e-4));
  }
  SUBCASE("embedding_lookup with repeated ids") {
    ParameterStore<double> store;
    auto* table = store.create("table", random_tensor({5, 4}, rng));
    CHECK(check_gradients({table}, [&](Tape<double>& t) {
            return t.mean_all(t.gelu(t.embedding(t.use(table), {0, 3, 3, 1, 3})));
          }).pass(1e-4));
  }
  SUBCASE("add and scale") {
    ParameterStore<double> store;
    auto* a = store.create("a", random_tensor({12}, rng));
    auto* b = store.create("b", random_tensor({12}, rng));
    CHECK(check_gradients({a, b}, [&](Tape<double>& t) {
            return t.mean_all(t.gelu(t.add_op(t.scale(t.use(a), 1.7), t.use(b))));
          }).pass(1e-4));
  }
  SUBCASE("mean variants") {
    ParameterStore<double> store;
    auto* a = store.create("a", random_tensor({4, 6}, rng));
    CHECK(check_gradients({a}, [&](Tape<double>& t) {
            auto rows = t.mean_rows(t.use(a));   // [6]
            auto cols = t.mean_cols(t.use(a));   // [4]
            return t.add_op(t.mean_all(t.gelu(rows)),
                            t.add_op(t.mean_all(t.gelu(cols)), t.mean_all(t.use(a))));
          }).pass(1e-4));
  }
  SUBCASE("concat rows and cols, row select") {
    ParameterStore<double> store;
    auto* a = store.create("a", random_tensor({2, 3}, rng));
    auto* b = store.create("b", random_tensor({3}, rng));
    auto* c = store.create("c", random_tensor({3, 2}, rng));
    CHECK(check_gradients({a, b, c}, [&](Tape<double>& t) {
            auto stacked = t.concat_rows({t.use(a), t.use(b)});       // [3 x 3]
            auto wide = t.concat_cols({stacked, t.use(c)});           // [3 x 5]
            return t.mean_all(t.gelu(t.row(wide, 1)));
          }).pass(1e-4));
  }
  SUBCASE("weighted_nll through softmax") {
    ParameterStore<double> store;
    auto* logits = store.create("logits", random_tensor({6, 3}, rng));
    std::vector<int> labels{0, 2, -1, 1, -1, 2};
    std::vector<double> weights{1.0, 0.5, 0.0, 2.0, 0.0, 1.5};
    std::vector<uint8_t> include{1, 1, 0, 1, 0, 1};
    CHECK(check_gradients({logits}, [&](Tape<double>& t) {
            return t.weighted_nll(t.softmax_last(t.use(logits)), labels, weights, include);
          }).pass(1e-4));
  }
}

TEST_CASE("shape errors carry the op name and shapes") {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
  auto b = tape.constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  CHECK_THROWS_WITH_AS(tape.matmul(a, b), doctest::Contains("matmul"), ShapeError);
  CHECK_THROWS_AS(tape.add_op(a, b), ShapeError);
  CHECK_THROWS_AS(tape.backward(a), ShapeError);  // non-scalar root
}

TEST_CASE("non-finite propagation raises a numeric fault") {
  Tape<double> tape;
  auto inf = tape.constant(Tensor<double>({1, 2}, {1e308, -1e308}));
  auto x = tape.scale(inf, 10.0);  // overflows to inf
  CHECK_THROWS_AS(tape.softmax_last(tape.scale(x, std::numeric_limits<double>::infinity())), NumericFault);
}

TEST_CASE("gradcheck reports non-finite probes as numeric faults") {
  ParameterStore<double> store;
  Parameter<double>* x = store.create("x", Tensor<double>({1}, {700.0}));
  {
    Tape<double> tape;
    auto y = tape.mean_all(tape.use(x));
    tape.backward(y);
  }
  auto exploding = [&] {
    const double v = x->value[0];
    return std::exp(v * v);  // inf near 700^2
  };
  CHECK_THROWS_AS(finite_difference_check(exploding, std::vector<Parameter<double>*>{x}), NumericFault);
}

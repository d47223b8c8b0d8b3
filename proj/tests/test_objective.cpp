#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "ulmv/objective.hpp"
#include "ulmv/optim.hpp"

using namespace ulmv;

TEST_CASE("weighted masked cross-entropy") {
  SUBCASE("all labels missing yields exactly zero") {
    Tape<double> tape;
    auto probs = tape.constant(Tensor<double>({2, 2}, {0.3, 0.7, 0.9, 0.1}));
    LossBatch<double> batch;
    batch.push(std::nullopt, {1.0, 1.0});
    batch.push(std::nullopt, {1.0, 1.0});
    CHECK(tape.val(weighted_masked_ce(tape, probs, batch))[0] == 0.0);
  }
  SUBCASE("perfect prediction is zero loss") {
    Tape<double> tape;
    auto probs = tape.constant(Tensor<double>({1, 2}, {0.0, 1.0}));
    LossBatch<double> batch;
    batch.push(1, {1.0, 1.0});
    CHECK(tape.val(weighted_masked_ce(tape, probs, batch))[0] == 0.0);
  }
  SUBCASE("p[y] = 0.5 gives ln 2") {
    Tape<double> tape;
    auto probs = tape.constant(Tensor<double>({1, 2}, {0.5, 0.5}));
    LossBatch<double> batch;
    batch.push(0, {1.0, 1.0});
    CHECK(tape.val(weighted_masked_ce(tape, probs, batch))[0] ==
          doctest::Approx(std::log(2.0)).epsilon(1e-6));
  }
  SUBCASE("ignored positions change neither value nor gradient, exactly") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Tensor<double> logits_a(Shape{4, 3});
    for (double& v : logits_a.data) v = gauss(rng);
    Tensor<double> logits_b = logits_a;
    for (int64_t c = 0; c < 3; ++c) {
      logits_b.at2(1, c) = gauss(rng) * 10.0;  // rows 1 and 3 are ignored
      logits_b.at2(3, c) = gauss(rng) * 10.0;
    }
    LossBatch<double> batch;
    const std::vector<double> w{1.0, 1.0, 1.0};
    batch.push(0, w);
    batch.push(std::nullopt, w);
    batch.push(2, w);
    batch.push(std::nullopt, w);

    auto run = [&](const Tensor<double>& logits) {
      ParameterStore<double> store;
      Parameter<double>* p = store.create("logits", logits);
      Tape<double> tape;
      auto loss = weighted_masked_ce(tape, tape.softmax_last(tape.use(p)), batch);
      tape.backward(loss);
      return std::pair<double, Tensor<double>>(tape.val(loss)[0], p->grad);
    };
    const auto [loss_a, grad_a] = run(logits_a);
    const auto [loss_b, grad_b] = run(logits_b);
    CHECK(loss_a == loss_b);  // bitwise
    for (int64_t c = 0; c < 3; ++c) {
      CHECK(grad_a.at2(0, c) == grad_b.at2(0, c));
      CHECK(grad_a.at2(2, c) == grad_b.at2(2, c));
      CHECK(grad_a.at2(1, c) == 0.0);
      CHECK(grad_a.at2(3, c) == 0.0);
      CHECK(grad_b.at2(1, c) == 0.0);
      CHECK(grad_b.at2(3, c) == 0.0);
    }
  }
  SUBCASE("probability clamp keeps the loss finite") {
    Tape<double> tape;
    auto probs = tape.constant(Tensor<double>({1, 2}, {1.0, 0.0}));
    LossBatch<double> batch;
    batch.push(1, {1.0, 1.0});
    const double loss = tape.val(weighted_masked_ce(tape, probs, batch))[0];
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(-std::log(1e-12)));
  }
}

TEST_CASE("class weights") {
  SUBCASE("balanced labels weigh 1") {
    const auto w = class_weights({0, 1, 0, 1}, 2);
    CHECK(w[0] == doctest::Approx(1.0));
    CHECK(w[1] == doctest::Approx(1.0));
  }
  SUBCASE("3:1 imbalance gives {0.5, 1.5}") {
    const auto w = class_weights({0, 0, 0, 1}, 2);
    CHECK(w[0] == doctest::Approx(0.5));
    CHECK(w[1] == doctest::Approx(1.5));
  }
  SUBCASE("absent class gets the maximum seen weight") {
    const auto w = class_weights({0, 0, 0, 1}, 3);
    CHECK(w[2] == doctest::Approx(w[1]));
    CHECK(w[1] > w[0]);
    double mean = (w[0] + w[1] + w[2]) / 3.0;
    CHECK(mean == doctest::Approx(1.0));
  }
  SUBCASE("empty labels are an error") { CHECK_THROWS_AS(class_weights({}, 2), ConfigError); }
}

TEST_CASE("adamw") {
  SUBCASE("zero gradient with zero decay is a fixed point") {
    ParameterStore<double> store;
    auto* p = store.create("p", Tensor<double>({3}, {1.0, -2.0, 0.5}));
    AdamWConfig<double> cfg;
    cfg.weight_decay = 0.0;
    AdamW<double> opt(store.all(), cfg);
    opt.step(0.1);
    CHECK(p->value.data == std::vector<double>{1.0, -2.0, 0.5});
  }
  SUBCASE("hand-computed single step") {
    ParameterStore<double> store;
    auto* p = store.create("p", Tensor<double>({1}, {1.0}));
    p->grad[0] = 1.0;
    AdamWConfig<double> cfg;
    cfg.weight_decay = 0.0;
    AdamW<double> opt(store.all(), cfg);
    opt.step(0.1);
    // bias-corrected mhat = 1, vhat = 1 -> p = 1 - 0.1/(1 + 1e-8)
    CHECK(p->value[0] == doctest::Approx(0.9).epsilon(1e-6));
  }
  SUBCASE("lr 0 with zero decay leaves parameters unchanged") {
    ParameterStore<double> store;
    auto* p = store.create("p", Tensor<double>({2}, {0.3, 0.7}));
    p->grad.fill(2.0);
    AdamWConfig<double> cfg;
    cfg.weight_decay = 0.0;
    AdamW<double> opt(store.all(), cfg);
    opt.step(0.0);
    CHECK(p->value.data == std::vector<double>{0.3, 0.7});
  }
  SUBCASE("non-finite gradient rejects the whole step") {
    ParameterStore<double> store;
    auto* p = store.create("p", Tensor<double>({2}, {1.0, 2.0}));
    p->grad[0] = std::numeric_limits<double>::quiet_NaN();
    AdamW<double> opt(store.all());
    CHECK_THROWS_AS(opt.step(0.1), NumericFault);
    CHECK(p->value.data == std::vector<double>{1.0, 2.0});
    CHECK(opt.step_count() == 0);
  }
  SUBCASE("identical inputs are bit-reproducible") {
    auto run = [] {
      ParameterStore<float> store;
      auto* p = store.create("p", Tensor<float>({4}, {0.1f, -0.2f, 0.3f, -0.4f}));
      AdamW<float> opt(store.all());
      for (int i = 0; i < 5; ++i) {
        for (int64_t j = 0; j < 4; ++j) p->grad[j] = 0.01f * static_cast<float>(i + j);
        opt.step(0.05f);
      }
      return p->value.data;
    };
    CHECK(run() == run());
  }
}

TEST_CASE("one-cycle schedule") {
  OneCycleShape shape;  // warmup 0.3, div 25, div_final 1e4
  const double max_lr = 1e-3;
  const int64_t total = 1000;

  CHECK(one_cycle_lr(0, max_lr, total, shape) == doctest::Approx(max_lr / 25.0));
  CHECK(one_cycle_lr(300, max_lr, total, shape) == doctest::Approx(max_lr));
  CHECK(one_cycle_lr(total, max_lr, total, shape) == doctest::Approx(max_lr / 1e4));
  CHECK_THROWS_AS(one_cycle_lr(-1, max_lr, total, shape), ConfigError);
  CHECK_THROWS_AS(one_cycle_lr(total + 1, max_lr, total, shape), ConfigError);

  SUBCASE("monotone up then down") {
    for (int64_t s = 1; s <= 300; ++s)
      CHECK(one_cycle_lr(s, max_lr, total, shape) >= one_cycle_lr(s - 1, max_lr, total, shape));
    for (int64_t s = 301; s <= total; ++s)
      CHECK(one_cycle_lr(s, max_lr, total, shape) <= one_cycle_lr(s - 1, max_lr, total, shape));
  }
  SUBCASE("bounded slope") {
    const double bound = 2.0 * max_lr / static_cast<double>(total) * M_PI;
    for (int64_t s = 0; s < total; ++s)
      CHECK(std::abs(one_cycle_lr(s + 1, max_lr, total, shape) - one_cycle_lr(s, max_lr, total, shape)) <=
            bound);
  }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "ulmv/gradcheck.hpp"
#include "ulmv/temporal_decoder.hpp"

using namespace ulmv;

namespace {

template <typename S>
Tensor<S> random_mat(int64_t r, int64_t c, std::mt19937_64& rng) {
  Tensor<S> t(Shape{r, c});
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (S& v : t.data) v = static_cast<S>(gauss(rng));
  return t;
}

}  // namespace

TEST_CASE("probabilities live on the simplex at every timepoint") {
  std::mt19937_64 rng(1);
  ParameterStore<float> store;
  TemporalDecoder<float> dec(store, 32, 4, 2, 8, 3, -1e9f, rng);
  Tape<float> tape(false);
  auto probs = tape.val(dec.predictions(tape, tape.constant(random_mat<float>(5, 32, rng))));
  CHECK(probs.shape == Shape{5, 3});
  for (int64_t t = 0; t < 5; ++t) {
    double sum = 0;
    for (int64_t c = 0; c < 3; ++c) {
      CHECK(probs.at2(t, c) >= 0.0f);
      sum += probs.at2(t, c);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("zero-initialized head yields uniform probabilities") {
  std::mt19937_64 rng(2);
  ParameterStore<float> store;
  TemporalDecoder<float> dec(store, 16, 2, 2, 4, 5, -1e9f, rng);
  store.find("dec.head.w")->value.fill(0.0f);
  store.find("dec.head.b")->value.fill(0.0f);
  Tape<float> tape(false);
  auto probs = tape.val(dec.predictions(tape, tape.constant(random_mat<float>(4, 16, rng))));
  for (float v : probs.data) CHECK(v == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("causality: future perturbations cannot change past predictions") {
  std::mt19937_64 rng(3);
  ParameterStore<float> store;
  TemporalDecoder<float> dec(store, 32, 4, 2, 8, 2, -1e9f, rng);
  std::uniform_real_distribution<float> wild(-50.f, 50.f);

  for (int rep = 0; rep < 30; ++rep) {
    const Tensor<float> base = random_mat<float>(6, 32, rng);
    std::uniform_int_distribution<int> cut_dist(0, 4);
    const int cut = cut_dist(rng);  // positions <= cut must be unaffected
    Tensor<float> perturbed = base;
    for (int64_t t = cut + 1; t < 6; ++t)
      for (int64_t j = 0; j < 32; ++j) perturbed.at2(t, j) = wild(rng);

    Tape<float> tape(false);
    auto a = tape.val(dec.predictions(tape, tape.constant(base)));
    auto b = tape.val(dec.predictions(tape, tape.constant(perturbed)));
    for (int64_t t = 0; t <= cut; ++t)
      for (int64_t c = 0; c < 2; ++c)
        CHECK(std::abs(a.at2(t, c) - b.at2(t, c)) <= 1e-6f);
  }
}

TEST_CASE("prefix decoding matches full decoding") {
  std::mt19937_64 rng(4);
  ParameterStore<float> store;
  TemporalDecoder<float> dec(store, 32, 4, 2, 8, 3, -1e9f, rng);

  const Tensor<float> full = random_mat<float>(7, 32, rng);
  Tape<float> tape(false);
  auto full_probs = tape.val(dec.predictions(tape, tape.constant(full)));
  for (int64_t l = 1; l <= 7; ++l) {
    Tensor<float> prefix(Shape{l, 32});
    for (int64_t t = 0; t < l; ++t)
      for (int64_t j = 0; j < 32; ++j) prefix.at2(t, j) = full.at2(t, j);
    auto probs = tape.val(dec.predictions(tape, tape.constant(prefix)));
    for (int64_t t = 0; t < l; ++t)
      for (int64_t c = 0; c < 3; ++c)
        CHECK(std::abs(probs.at2(t, c) - full_probs.at2(t, c)) <= 1e-6f);
  }
}

TEST_CASE("single-timepoint sequence works; over-long sequences are rejected") {
  std::mt19937_64 rng(5);
  ParameterStore<float> store;
  TemporalDecoder<float> dec(store, 16, 2, 1, 4, 2, -1e9f, rng);
  Tape<float> tape(false);
  CHECK(tape.val(dec.predictions(tape, tape.constant(random_mat<float>(1, 16, rng)))).shape == Shape{1, 2});
  CHECK_THROWS_WITH_AS(dec.logits(tape, tape.constant(random_mat<float>(5, 16, rng))),
                       doctest::Contains("positional"), ShapeError);
}

TEST_CASE("gradient check through the decoder at 1e-4 (64-bit)") {
  std::mt19937_64 rng(6);
  ParameterStore<double> store;
  TemporalDecoder<double> dec(store, 16, 2, 2, 6, 2, -1e9, rng);
  const Tensor<double> summaries = random_mat<double>(4, 16, rng);
  auto build = [&](Tape<double>& t) {
    return t.mean_all(t.gelu(dec.logits(t, t.constant(summaries))));
  };
  {
    Tape<double> tape;
    tape.backward(build(tape));
  }
  auto loss_fn = [&] {
    Tape<double> t(false);
    return t.val(build(t))[0];
  };
  GradCheckOptions opt;
  opt.sample_count = 200;
  opt.step = 1e-4;
  CHECK(finite_difference_check(loss_fn, store.all(), opt).max_rel_error <= 1e-4);
}

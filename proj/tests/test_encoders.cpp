#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "ulmv/encoders.hpp"
#include "ulmv/gradcheck.hpp"

using namespace ulmv;

namespace {

ViewSpec image_spec(int64_t feature_dim = 64) {
  ViewSpec spec;
  spec.name = "K";
  spec.kind = ViewKind::image;
  spec.image_shape = {1, 32, 32};
  spec.feature_dim = feature_dim;
  return spec;
}

ViewSpec tabular_spec(int64_t feature_dim = 64) {
  ViewSpec spec;
  spec.name = "T";
  spec.kind = ViewKind::tabular;
  spec.schema.columns = {{"a", false, {}},          {"b", true, {"x", "y", "z"}},
                         {"c", false, {}},          {"d", true, {"u", "v"}},
                         {"e", false, {}},          {"f", false, {}},
                         {"g", true, {"p", "q"}},   {"h", false, {}}};
  spec.feature_dim = feature_dim;
  return spec;
}

template <typename S>
Tensor<S> random_image(std::mt19937_64& rng, int64_t h = 32, int64_t w = 32) {
  Tensor<S> img(Shape{1, h, w});
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (S& v : img.data) v = static_cast<S>(gauss(rng));
  return img;
}

}  // namespace

TEST_CASE("image encoder: 1x32x32 through the default stack gives feature_dim") {
  std::mt19937_64 rng(1);
  ParameterStore<float> store;
  const ViewSpec spec = image_spec(64);
  ImageEncoder<float> enc(store, "enc.K", spec, rng);
  Tape<float> tape(false);
  auto out = enc.forward(tape, tape.constant(random_image<float>(rng)));
  CHECK(tape.val(out).shape == Shape{64});
  CHECK(all_finite(tape.val(out)));
}

TEST_CASE("image encoder: zero image with zeroed head gives a zero vector") {
  std::mt19937_64 rng(2);
  ParameterStore<float> store;
  ImageEncoder<float> enc(store, "enc.K", image_spec(16), rng);
  store.find("enc.K.fc.w")->value.fill(0.0f);
  store.find("enc.K.fc.b")->value.fill(0.0f);
  Tape<float> tape(false);
  auto out = enc.forward(tape, tape.constant(Tensor<float>(Shape{1, 32, 32})));
  for (float v : tape.val(out).data) CHECK(v == 0.0f);
}

TEST_CASE("image encoder is deterministic and rejects bad shapes") {
  std::mt19937_64 rng(3);
  ParameterStore<float> store;
  ImageEncoder<float> enc(store, "enc.K", image_spec(16), rng);
  const Tensor<float> img = random_image<float>(rng);
  Tape<float> t1(false), t2(false);
  auto a = enc.forward(t1, t1.constant(img));
  auto b = enc.forward(t2, t2.constant(img));
  CHECK(t1.val(a).data == t2.val(b).data);

  Tape<float> t3(false);
  CHECK_THROWS_WITH_AS(enc.forward(t3, t3.constant(Tensor<float>(Shape{1, 16, 16}))),
                       doctest::Contains("encode_image"), ShapeError);
}

TEST_CASE("tabular encoder: 8-column schema gives feature_dim and handles Missing codes") {
  std::mt19937_64 rng(4);
  ParameterStore<float> store;
  const ViewSpec spec = tabular_spec(64);
  TabularEncoder<float> enc(store, "enc.T", spec, 32, 2, 2, rng);

  // all-missing row: -1 for continuous, the reserved code for categoricals
  Tensor<float> row(Shape{8});
  for (size_t c = 0; c < spec.schema.columns.size(); ++c)
    row[static_cast<int64_t>(c)] =
        spec.schema.columns[c].categorical ? static_cast<float>(spec.schema.columns[c].missing_code()) : -1.0f;
  Tape<float> tape(false);
  auto out = enc.forward(tape, tape.constant(row));
  CHECK(tape.val(out).shape == Shape{64});
  CHECK(all_finite(tape.val(out)));

  SUBCASE("out-of-vocabulary code names the column") {
    row[1] = 99.0f;
    Tape<float> t(false);
    CHECK_THROWS_WITH_AS(enc.forward(t, t.constant(row)), doctest::Contains("b"), DataFormatError);
  }
}

TEST_CASE("encoders share weights across calls (same input, same output)") {
  std::mt19937_64 rng(5);
  ParameterStore<float> store;
  TabularEncoder<float> enc(store, "enc.T", tabular_spec(32), 16, 2, 1, rng);
  Tensor<float> row(Shape{8}, {0.3f, 1.0f, -0.7f, 0.0f, 2.2f, -1.0f, 1.0f, 0.05f});
  // encoding "at two timepoints" is two separate forward calls
  Tape<float> t1(false), t2(false);
  CHECK(t1.val(enc.forward(t1, t1.constant(row))).data == t2.val(enc.forward(t2, t2.constant(row))).data);
}

TEST_CASE("gradients flow through both encoders at 1e-4") {
  std::mt19937_64 rng(6);

  SUBCASE("image") {
    ParameterStore<double> store;
    ViewSpec spec = image_spec(8);
    spec.image_shape = {1, 12, 12};  // small probe, same architecture
    ImageEncoder<double> enc(store, "enc.K", spec, rng);
    const Tensor<double> img = random_image<double>(rng, 12, 12);
    auto build = [&](Tape<double>& t) { return t.mean_all(t.gelu(enc.forward(t, t.constant(img)))); };
    {
      Tape<double> tape;
      tape.backward(build(tape));
    }
    auto loss_fn = [&] {
      Tape<double> t(false);
      return t.val(build(t))[0];
    };
    GradCheckOptions opt;
    opt.sample_count = 150;
    opt.step = 1e-4;
    const auto report = finite_difference_check(loss_fn, store.all(), opt);
    CHECK(report.max_rel_error <= 1e-4);
  }
  SUBCASE("tabular") {
    ParameterStore<double> store;
    TabularEncoder<double> enc(store, "enc.T", tabular_spec(16), 8, 2, 2, rng);
    Tensor<double> row(Shape{8}, {0.3, 1.0, -0.7, 0.0, 2.2, -1.0, 1.0, 0.05});
    auto build = [&](Tape<double>& t) { return t.mean_all(t.gelu(enc.forward(t, t.constant(row)))); };
    {
      Tape<double> tape;
      tape.backward(build(tape));
    }
    auto loss_fn = [&] {
      Tape<double> t(false);
      return t.val(build(t))[0];
    };
    GradCheckOptions opt;
    opt.sample_count = 150;
    opt.step = 1e-4;
    const auto report = finite_difference_check(loss_fn, store.all(), opt);
    CHECK(report.max_rel_error <= 1e-4);
  }
}

#include <doctest.h>

#include <limits>

#include "dpnse/dataset.hpp"
#include "dpnse/errors.hpp"
#include "dpnse/train.hpp"
#include "net_checks.hpp"

using namespace dpnse;
using namespace dpnse::testing;

namespace {

std::vector<Sample> synthetic(std::size_t per_class, std::uint64_t seed) {
  std::vector<Sample> out;
  for (int c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < per_class; ++i) out.push_back({synth_sample(c, 64, seed, i).image, c});
  return out;
}

TrainSettings quick_settings() {
  TrainSettings s;
  s.epochs = 3;
  s.batch_size = 5;
  s.learning_rate = 0.05;
  s.seed = 4;
  return s;
}

bool same_state(const Model& a, const Model& b) {
  auto sa = a.state(), sb = b.state();
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (sa[i].name != sb[i].name || !bit_identical(sa[i].tensor, sb[i].tensor)) return false;
  return true;
}

}  // namespace

TEST_CASE("prepare_image brings any image to the model input") {
  DpnSeConfig cfg = toy_config();
  Image wide(40, 80, 3, 0.5);
  Image p = prepare_image(wide, cfg);
  CHECK(p.height == 32);
  CHECK(p.width == 32);
  CHECK(p.channels == 1);
  cfg.input_channels = 3;
  CHECK(prepare_image(Image(32, 32, 1, 0.25), cfg).channels == 3);
}

TEST_CASE("epochs = 0 leaves the initialization untouched") {
  const auto data = synthetic(2, 1);
  Model m(toy_config(), 3), ref(toy_config(), 3);
  TrainSettings s = quick_settings();
  s.epochs = 0;
  CHECK(train_model(m, data, s).empty());
  CHECK(same_state(m, ref));
}

TEST_CASE("training is reproducible and moves the parameters") {
  const auto data = synthetic(4, 2);
  Model a(toy_config(), 5), b(toy_config(), 5), init(toy_config(), 5);
  AugmentConfig aug;
  aug.seed = 6;
  std::vector<EpochLog> streamed;
  auto la = train_model(a, data, quick_settings(), &aug,
                        [&](const EpochLog& e) { streamed.push_back(e); });
  auto lb = train_model(b, data, quick_settings(), &aug);
  REQUIRE(la.size() == 3);
  REQUIRE(streamed.size() == 3);
  for (std::size_t i = 0; i < la.size(); ++i) {
    CHECK(la[i].epoch == i + 1);
    CHECK(la[i].loss == lb[i].loss);
    CHECK(la[i].accuracy == lb[i].accuracy);
    CHECK(streamed[i].loss == la[i].loss);
  }
  CHECK(same_state(a, b));
  CHECK_FALSE(same_state(a, init));
}

TEST_CASE("training fits a small synthetic set") {
  const auto data = synthetic(6, 3);
  Model m(toy_config(), 7);
  TrainSettings s = quick_settings();
  s.epochs = 15;
  s.batch_size = 8;
  auto log = train_model(m, data, s);
  CHECK(log.back().loss < log.front().loss);
  CHECK(accuracy_on(m, data) >= 0.75);
}

TEST_CASE("predict_batch returns distributions") {
  const auto data = synthetic(1, 4);
  Model m(toy_config(), 8);
  auto probs = predict_batch(m, data);
  REQUIRE(probs.size() == 4);
  for (const auto& row : probs) {
    double total = 0;
    for (double p : row) total += p;
    CHECK(total == doctest::Approx(1.0));
  }
  CHECK(predict_labels(m, data).size() == 4);
  CHECK_THROWS_AS(accuracy_on(m, {}), input_error);
}

TEST_CASE("training errors") {
  const auto data = synthetic(2, 5);
  Model m(toy_config(), 9);
  TrainSettings s = quick_settings();
  s.seed.reset();
  CHECK_THROWS_AS(train_model(m, data, s), config_error);

  // Without batch norm a huge step size overflows within a few updates.
  DpnSeConfig no_bn = toy_config();
  no_bn.batch_norm = false;
  Model diverging(no_bn, 9);
  s = quick_settings();
  s.epochs = 20;
  s.learning_rate = 1e150;
  CHECK_THROWS_AS(train_model(diverging, data, s), numerical_error);

  std::vector<Sample> poisoned = data;
  poisoned[3].image.pixels[10] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train_model(m, poisoned, quick_settings()), numerical_error);

  std::vector<Sample> bad = data;
  bad[0].label = 7;
  CHECK_THROWS_AS(train_model(m, bad, quick_settings()), config_error);
  CHECK_THROWS_AS(train_model(m, {}, quick_settings()), input_error);
}

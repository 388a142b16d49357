#include <doctest.h>

#include <cmath>
#include <sstream>
#include <thread>

#include "dpnse/errors.hpp"
#include "dpnse/serialize.hpp"
#include "net_checks.hpp"

using namespace dpnse;
using namespace dpnse::testing;

namespace {

SubstageSpec plain_spec(std::size_t in, std::size_t cr, std::size_t k) {
  SubstageSpec s;
  s.in_channels = in;
  s.residual_width = cr;
  s.dense_increment = k;
  s.bottleneck_width = 4;
  return s;
}

void zero_layer(ConvBn& l) { std::fill(l.weight.data().begin(), l.weight.data().end(), 0.0); }

}  // namespace

TEST_CASE("substage: zero bottleneck with k=0 is the identity") {
  for (bool bn : {false, true}) {
    SubstageSpec spec = plain_spec(5, 5, 0);
    spec.batch_norm = bn;
    SubstageParams p = make_substage(spec, 1, "s");
    zero_layer(p.reduce);
    zero_layer(p.grouped);
    zero_layer(p.expand);
    Rng rng(2);
    Tensor x = random_tensor({2, 5, 4, 4}, rng);
    Tensor y = dual_path_substage(x, p, Mode::train);
    REQUIRE(y.shape() == x.shape());
    CHECK(bit_identical(y, x));
  }
}

TEST_CASE("substage: channel recurrence") {
  Rng rng(3);
  SubstageParams p = make_substage(plain_spec(4, 4, 2), 3, "s");
  Tensor y = dual_path_substage(random_tensor({1, 4, 5, 5}, rng), p, Mode::train);
  CHECK(y.dim(1) == 6);

  Tensor x = random_tensor({1, 4, 5, 5}, rng);
  std::size_t in = 4;
  for (int i = 0; i < 3; ++i) {
    SubstageParams s = make_substage(plain_spec(in, 4, 2), 4, "s" + std::to_string(i));
    x = dual_path_substage(x, s, Mode::train);
    in = x.dim(1);
  }
  CHECK(in == 4 + 6);
}

TEST_CASE("substage: residual slice is added, dense slice is carried and extended") {
  SubstageSpec spec = plain_spec(6, 4, 3);
  spec.batch_norm = false;
  SubstageParams p = make_substage(spec, 5, "s");
  Rng rng(6);
  Tensor x = random_tensor({1, 6, 3, 3}, rng);
  Tensor y = dual_path_substage(x, p, Mode::inference);
  REQUIRE(y.dim(1) == 9);
  // Recompute the bottleneck by hand.
  Tensor h = relu(conv2d(x, p.reduce.weight, 1, 0));
  h = relu(conv2d(h, p.grouped.weight, 1, 1));
  h = conv2d(h, p.expand.weight, 1, 0);
  Tensor expect = concat_channels(
      add(slice_channels(x, 0, 4), slice_channels(h, 0, 4)),
      concat_channels(slice_channels(x, 4, 6), slice_channels(h, 4, 7)));
  CHECK(bit_identical(y, expect));
}

TEST_CASE("substage: bad input channels is a config error") {
  SubstageParams p = make_substage(plain_spec(4, 4, 2), 1, "s");
  CHECK_THROWS_AS(dual_path_substage(Tensor::zeros({1, 5, 4, 4}), p, Mode::train), config_error);
  SubstageSpec strided = plain_spec(4, 4, 2);
  strided.stride = 2;
  CHECK_THROWS_AS(make_substage(strided, 1, "s"), config_error);
}

TEST_CASE("se_block: zero weights halve the input exactly") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) CHECK(se_zero_weights_halve(seed));
}

TEST_CASE("se_block: saturated gate passes the input through") {
  Rng rng(7);
  Tensor x = random_tensor({2, 4, 3, 3}, rng);
  SeParams p{random_tensor({4, 2}, rng), random_tensor({2}, rng), Tensor::zeros({2, 4}),
             Tensor::full({4}, 20.0)};
  Tensor y = se_block(x, p);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(y.data()[i] - x.data()[i]) < 1e-8);
}

TEST_CASE("se_block: hand-computed 2-channel case") {
  // channel means 2.5 and -1.0
  Tensor x({1, 2, 2, 2}, {1, 2, 3, 4, -1, -1, -1, -1});
  SeParams p{Tensor({2, 1}, {1.0, 0.5}), Tensor({1}, {0.25}), Tensor({1, 2}, {2.0, -1.0}),
             Tensor({2}, {0.0, 0.5})};
  const double hidden = std::max(0.0, 2.5 * 1.0 + -1.0 * 0.5 + 0.25);  // 2.25
  const double z0 = 1.0 / (1.0 + std::exp(-(hidden * 2.0 + 0.0)));
  const double z1 = 1.0 / (1.0 + std::exp(-(hidden * -1.0 + 0.5)));
  Tensor y = se_block(x, p);
  const double expect[] = {z0, 2 * z0, 3 * z0, 4 * z0, -z1, -z1, -z1, -z1};
  for (std::size_t i = 0; i < 8; ++i) CHECK(y.data()[i] == doctest::Approx(expect[i]).epsilon(1e-14));
}

TEST_CASE("se_block: output is a per-channel scalar multiple of the input") {
  Rng rng(8);
  Tensor x = random_tensor({2, 6, 4, 4}, rng);
  SeParams p{random_tensor({6, 3}, rng), random_tensor({3}, rng), random_tensor({3, 6}, rng),
             random_tensor({6}, rng)};
  Tensor y = se_block(x, p);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 6; ++c) {
      const double ratio = y.at({n, c, 0, 0}) / x.at({n, c, 0, 0});
      CHECK(ratio > 0.0);
      CHECK(ratio < 1.0);
      for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t w = 0; w < 4; ++w)
          CHECK(y.at({n, c, h, w}) == doctest::Approx(ratio * x.at({n, c, h, w})).epsilon(1e-12));
    }
}

TEST_CASE("se gates rigged open reproduce the plain network bit-for-bit") {
  for (std::uint64_t seed : {1u, 2u, 3u}) CHECK(se_open_gate_equivalence(seed));
}

TEST_CASE("model: toy forward shape and determinism") {
  Model a(toy_config(), 11), b(toy_config(), 11);
  Rng rng(12);
  Tensor batch = random_batch(a.config(), 3, rng);
  Tensor la = a.forward(batch, Mode::train), lb = b.forward(batch, Mode::train);
  CHECK(la.shape() == Shape{3, 4});
  CHECK(bit_identical(la, lb));
  CHECK(bit_identical(a.forward(batch, Mode::inference), b.forward(batch)));
}

TEST_CASE("model: SE parameter count formula") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    DpnSeConfig cfg = random_stage_config(rng);
    cfg.se_enabled = true;
    DpnSeConfig plain = cfg;
    plain.se_enabled = false;
    std::size_t extra = 0;
    for (const auto& st : cfg.stages)
      for (std::size_t i = 1; i <= st.num_substages; ++i) {
        const std::size_t c = st.residual_width + i * st.dense_increment;
        const std::size_t h = std::max<std::size_t>(1, c / cfg.se_reduction);
        extra += c * h + h + h * c + c;
      }
    CHECK(Model(cfg, seed).parameter_count() == Model(plain, seed).parameter_count() + extra);
  }
}

TEST_CASE("model: channel accounting on random stage tables") {
  std::string detail;
  CHECK(channel_accounting_failures(99, 25, &detail) == 0);
  INFO(detail);
}

TEST_CASE("model: config and input errors") {
  DpnSeConfig cfg = toy_config();
  cfg.input_size = 4;  // stem output 2x2 is below the 3x3 pool window
  CHECK_THROWS_AS(Model(cfg, 1), config_error);
  cfg = toy_config();
  cfg.se_reduction = 0;
  CHECK_THROWS_AS(Model(cfg, 1), config_error);
  cfg = toy_config();
  cfg.stages[1].groups = 3;
  CHECK_THROWS_AS(Model(cfg, 1), config_error);

  Model m(toy_config(), 1);
  CHECK_THROWS_AS(m.forward(Tensor::zeros({1, 1, 16, 16})), input_error);
  CHECK_THROWS_AS(predict(m, Image(20, 20, 1)), input_error);
}

TEST_CASE("model: zeroed head predicts uniformly") {
  Model m(toy_config(), 5);
  std::fill(m.head_weight().data().begin(), m.head_weight().data().end(), 0.0);
  std::fill(m.head_bias().data().begin(), m.head_bias().data().end(), 0.0);
  Rng rng(6);
  Image img(32, 32, 1);
  for (auto& v : img.pixels) v = rng.uniform();
  for (double p : predict(m, img)) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("model: probabilities form a distribution, RGB converts to gray") {
  Model m(toy_config(), 6);
  Rng rng(7);
  Image rgb(32, 32, 3);
  for (auto& v : rgb.pixels) v = rng.uniform();
  auto p = predict(m, rgb);
  REQUIRE(p.size() == 4);
  double total = 0;
  for (double v : p) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p == predict(m, to_grayscale(rgb)));
}

TEST_CASE("model: state round-trips through the model file format") {
  Model a(toy_config(), 21);
  Rng rng(22);
  Tensor batch = random_batch(a.config(), 4, rng);
  a.forward(batch, Mode::train);  // moves the running statistics off identity
  std::stringstream buf;
  save_tensors(buf, a.state());
  buf.seekg(0);
  Model b(toy_config(), 99);
  CHECK_FALSE(bit_identical(a.forward(batch), b.forward(batch)));
  b.load_state(load_tensors(buf));
  CHECK(bit_identical(a.forward(batch), b.forward(batch)));

  auto state = a.state();
  state.pop_back();
  CHECK_THROWS_AS(b.load_state(state), config_error);
  DpnSeConfig wider = toy_config();
  wider.stages[2].residual_width = 9;
  Model c(wider, 1);
  CHECK_THROWS_AS(c.load_state(a.state()), config_error);
}

TEST_CASE("model: clone is independent") {
  Model a(toy_config(), 31);
  Model b = a.clone();
  a.head_bias().data()[0] = 5.0;
  CHECK(b.head_bias().data()[0] == 0.0);
}

TEST_CASE("model: concurrent inference matches serial inference") {
  Model m(toy_config(), 41);
  Rng rng(42);
  std::vector<Image> images;
  for (int i = 0; i < 8; ++i) {
    Image img(32, 32, 1);
    for (auto& v : img.pixels) v = rng.uniform();
    images.push_back(img);
  }
  std::vector<std::vector<double>> serial, threaded(images.size());
  for (const auto& img : images) serial.push_back(predict(m, img));
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < images.size(); ++i) {
    pool.emplace_back([&, i] { threaded[i] = predict(m, images[i]); });
  }
  for (auto& t : pool) t.join();
  CHECK(serial == threaded);
}

TEST_CASE("model: DPN-92 preset validates and has the expected structure") {
  DpnSeConfig cfg = dpn92_config();
  CHECK_NOTHROW(validate_config(cfg));
  const auto plan = spatial_plan(cfg);
  // unpadded 3x3/2 stem pool: 112 -> 55
  CHECK(plan == std::vector<std::size_t>{55, 55, 28, 14, 7});
  std::size_t final_channels = cfg.stages.back().residual_width +
                               cfg.stages.back().num_substages * cfg.stages.back().dense_increment;
  CHECK(final_channels == 2048 + 3 * 128);
}

TEST_CASE("gradcheck: full toy graph") {
  NamedGradcheck r = toy_graph_gradcheck(7, 5);
  INFO("worst tensor: " << r.worst << " rel error " << r.max_rel_error);
  CHECK(r.tensors > 60);
  CHECK(r.starved == 0);
  CHECK(r.max_rel_error <= 1e-4);
}

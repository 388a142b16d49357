#include <doctest.h>

#include <cmath>
#include <json.hpp>
#include <set>

#include "dpnse/errors.hpp"
#include "dpnse/lime.hpp"
#include "lime_checks.hpp"

using namespace dpnse;
using namespace dpnse::testing;

TEST_CASE("segment_grid") {
  SuperpixelMap one = segment_grid(Image(5, 7, 1), 1);
  CHECK(one.count == 1);
  for (auto l : one.labels) CHECK(l == 0);

  SuperpixelMap s = segment_grid(Image(224, 224, 1), 4);
  CHECK(s.count == 16);
  std::vector<std::size_t> area(16, 0);
  for (auto l : s.labels) ++area[l];
  for (auto a : area) CHECK(a == 56 * 56);
  CHECK(s.labels[0] == 0);
  CHECK(s.labels[55] == 0);
  CHECK(s.labels[56] == 1);
  CHECK(s.labels[56 * 224] == 4);

  SuperpixelMap r = segment_grid(Image(10, 10, 1), 3);
  CHECK(r.count == 9);
  std::vector<std::size_t> rows(3, 0), cols(3, 0);
  for (std::size_t y = 0; y < 10; ++y) ++rows[r.labels[y * 10] / 3];
  for (std::size_t x = 0; x < 10; ++x) ++cols[r.labels[x] % 3];
  CHECK(rows == std::vector<std::size_t>{3, 3, 4});
  CHECK(cols == std::vector<std::size_t>{3, 3, 4});
  std::set<std::size_t> ids(r.labels.begin(), r.labels.end());
  CHECK(ids.size() == 9);

  CHECK_THROWS_AS(segment_grid(Image(4, 10, 1), 5), input_error);
  CHECK_THROWS_AS(segment_grid(Image(4, 10, 1), 0), input_error);
}

TEST_CASE("kernel_weight") {
  std::vector<std::uint8_t> ones(64, 1), zeros(64, 0), half(64, 0);
  for (std::size_t i = 0; i < 32; ++i) half[i] = 1;
  CHECK(kernel_weight(ones, 0.25) == 1.0);
  CHECK(kernel_weight(zeros, 0.25) == doctest::Approx(std::exp(-16.0)).epsilon(1e-12));
  CHECK(kernel_weight(zeros, 0.25) == doctest::Approx(1.125e-7).epsilon(1e-3));
  CHECK(kernel_weight(half, 0.25) == doctest::Approx(std::exp(-4.0)).epsilon(1e-12));
  CHECK(kernel_weight(half, 0.25) == doctest::Approx(0.0183).epsilon(1e-2));
}

TEST_CASE("apply_mask") {
  Image img = probe_image(12, 3);
  SuperpixelMap seg = segment_grid(img, 3);
  std::vector<std::uint8_t> all(9, 1), none(9, 0);
  CHECK(apply_mask(img, seg, all) == img);

  double mean = 0;
  for (double v : img.pixels) mean += v;
  mean /= static_cast<double>(img.pixels.size());
  for (double v : apply_mask(img, seg, none).pixels) CHECK(v == doctest::Approx(mean).epsilon(1e-14));

  std::vector<std::uint8_t> one_off(9, 1);
  one_off[4] = 0;
  Image m = apply_mask(img, seg, one_off);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    if (m.pixels[i] != img.pixels[i]) {
      ++changed;
      CHECK(seg.labels[i] == 4);
    }
  }
  CHECK(changed == 16);

  Image rgb(6, 6, 3);
  for (std::size_t i = 0; i < rgb.pixels.size(); ++i) rgb.pixels[i] = (i % 3) * 0.25;
  Image filled = apply_mask(rgb, segment_grid(rgb, 2), std::vector<std::uint8_t>(4, 0));
  CHECK(filled == rgb);  // every channel is constant, so the mean fill changes nothing
}

TEST_CASE("explain: constant black box is degenerate") {
  Image img = probe_image(16, 4);
  ModelFn fn = [](const Image&) { return std::vector<double>{0.3, 0.7}; };
  LimeConfig cfg;
  cfg.grid = 4;
  cfg.n_samples = 50;
  Explanation e = explain(fn, img, 1, cfg);
  CHECK(e.degenerate);
  CHECK(e.intercept == 0.7);
  for (double c : e.coefficients) CHECK(c == 0.0);
  CHECK(e.top_k.empty());
  CHECK(e.samples.size() == 50);
  CHECK(e.samples[0].mask == std::vector<std::uint8_t>(16, 1));

  Image overlay = render_overlay(img, segment_grid(img, 4), e);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) CHECK(overlay.pixels[i * 3 + c] == img.pixels[i]);

  auto j = nlohmann::json::parse(explanation_json(e));
  CHECK(j["class"] == 1);
  CHECK(j["degenerate"] == true);
  CHECK(j["coefficients"].size() == 16);
}

TEST_CASE("explain: linear black box is recovered") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const LinearRecovery r = linear_recovery(seed);
    CHECK(r.max_coef_error < 1e-3);
    CHECK(r.intercept_error < 1e-3);
    CHECK(r.normal_residual < 1e-8);
  }
}

TEST_CASE("explain: single-tile indicator ranks that tile first") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const IndicatorResult r = single_tile_indicator(seed, (seed * 13) % 64);
    CHECK(r.top1);
    CHECK(r.normal_residual < 1e-8);
  }
}

TEST_CASE("explain: parallel evaluation gives the same explanation") {
  Image img = probe_image(32, 5);
  SuperpixelMap seg = segment_grid(img, 4);
  ModelFn fn = [&](const Image& p) {
    double s = 0;
    for (std::size_t i = 0; i < p.pixels.size(); i += 7) s += p.pixels[i] * p.pixels[i];
    return std::vector<double>{s, 1.0};
  };
  LimeConfig cfg;
  cfg.grid = 4;
  cfg.n_samples = 200;
  cfg.seed = 8;
  Explanation a = explain(fn, img, 0, cfg);
  cfg.jobs = 4;
  Explanation b = explain(fn, img, 0, cfg);
  CHECK(a.coefficients == b.coefficients);
  CHECK(a.intercept == b.intercept);
  CHECK(a.top_k == b.top_k);
}

TEST_CASE("explain: errors") {
  Image img = probe_image(16, 6);
  ModelFn fn = [](const Image&) { return std::vector<double>{1.0}; };
  LimeConfig cfg;
  cfg.grid = 4;
  cfg.n_samples = 10;
  CHECK_THROWS_AS(explain(fn, img, 2, cfg), input_error);
  cfg.grid = 17;
  CHECK_THROWS_AS(explain(fn, img, 0, cfg), input_error);
  ModelFn throwing = [](const Image&) -> std::vector<double> { throw io_error("boom"); };
  cfg.grid = 2;
  cfg.jobs = 3;
  CHECK_THROWS_AS(explain(throwing, img, 0, cfg), io_error);
}

TEST_CASE("render_overlay: a positive segment is tinted red only inside its tile") {
  Image img(8, 8, 1, 0.5);
  SuperpixelMap seg = segment_grid(img, 2);
  Explanation e;
  e.coefficients = {0.0, 2.0, 0.0, -1.0};
  e.top_k = {1};
  Image o = render_overlay(img, seg, e);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      const double r = o.at(y, x, 0), g = o.at(y, x, 1), b = o.at(y, x, 2);
      if (seg.labels[y * 8 + x] == 1) {
        CHECK(r == doctest::Approx(0.75));  // alpha 0.5 towards red
        CHECK(g == doctest::Approx(0.25));
        CHECK(b == doctest::Approx(0.25));
      } else {
        CHECK(r == 0.5);
        CHECK(g == 0.5);
        CHECK(b == 0.5);
      }
    }
  e.top_k = {1, 3};
  Image both = render_overlay(img, seg, e);
  CHECK(both.at(7, 7, 2) == doctest::Approx(0.5 * 0.75 + 0.25));  // alpha 0.25 towards blue
  CHECK(both.at(7, 7, 0) == doctest::Approx(0.5 * 0.75));
}

TEST_CASE("fit_weighted_ridge: residual and intercept") {
  Rng rng(9);
  std::vector<Perturbation> samples;
  for (int i = 0; i < 40; ++i) {
    Perturbation p;
    p.mask = {static_cast<std::uint8_t>(rng.below(2)), static_cast<std::uint8_t>(rng.below(2))};
    p.prediction = {2.0 + 3.0 * p.mask[0] - 1.0 * p.mask[1] + 0.01 * rng.normal()};
    p.weight = rng.uniform(0.1, 1.0);
    samples.push_back(p);
  }
  RidgeFit f = fit_weighted_ridge(samples, 0, 0.0);
  CHECK(f.normal_residual < 1e-10);
  CHECK(f.intercept == doctest::Approx(2.0).epsilon(0.02));
  CHECK(f.coefficients[0] == doctest::Approx(3.0).epsilon(0.02));
  CHECK(f.r2 > 0.99);
  // a large penalty shrinks the slopes, not the intercept
  RidgeFit heavy = fit_weighted_ridge(samples, 0, 1e6);
  CHECK(std::abs(heavy.coefficients[0]) < 1e-3);
  CHECK(heavy.intercept > 2.0);
}

#include "dpnse/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dpnse/errors.hpp"

namespace dpnse {

void validate_augment_config(const AugmentConfig& cfg) {
  if (cfg.target == 0) throw config_error("augment.target must be >= 1");
  if (!(cfg.flip_prob >= 0.0 && cfg.flip_prob <= 1.0)) {
    throw config_error("augment.flip_prob must be in [0,1]");
  }
  if (!(cfg.rotate_max_deg >= 0.0)) throw config_error("augment.rotate_max_deg must be >= 0");
  if (!(cfg.scale_lo > 0.0 && cfg.scale_lo <= cfg.scale_hi)) {
    throw config_error("augment scale range must satisfy 0 < lo <= hi");
  }
}

Image resize_bilinear(const Image& img, std::size_t height, std::size_t width) {
  if (img.empty()) throw input_error("resize: empty image");
  if (height == 0 || width == 0) throw input_error("resize: zero target size");
  Image out(height, width, img.channels);
  const double sy = static_cast<double>(img.height) / static_cast<double>(height);
  const double sx = static_cast<double>(img.width) / static_cast<double>(width);
  const double max_y = static_cast<double>(img.height - 1);
  const double max_x = static_cast<double>(img.width - 1);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy_src = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(fy_src);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double fy = fy_src - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx_src = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(fx_src);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double fx = fx_src - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double top = (1.0 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
        const double bottom = (1.0 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
        out.at(y, x, c) = std::clamp((1.0 - fy) * top + fy * bottom, 0.0, 1.0);
      }
    }
  }
  return out;
}

Image resize_narrow_side(const Image& img, std::size_t target) {
  if (img.empty()) throw input_error("resize_narrow_side: empty image");
  if (target == 0) throw input_error("resize_narrow_side: target must be >= 1");
  const std::size_t narrow = std::min(img.height, img.width);
  const double ratio = static_cast<double>(target) / static_cast<double>(narrow);
  auto other = [&](std::size_t side) -> std::size_t {
    if (side == narrow) return target;
    return std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(side) * ratio)));
  };
  const std::size_t h = img.height <= img.width ? target : other(img.height);
  const std::size_t w = img.height <= img.width ? other(img.width) : target;
  if (h == img.height && w == img.width) return img;
  return resize_bilinear(img, h, w);
}

Image crop(const Image& img, std::size_t size, CropWindow window) {
  if (img.height < size || img.width < size) {
    throw input_error("crop: image " + std::to_string(img.height) + "x" +
                      std::to_string(img.width) + " is smaller than " + std::to_string(size));
  }
  if (window.top + size > img.height || window.left + size > img.width) {
    throw input_error("crop: window outside the image");
  }
  Image out(size, size, img.channels);
  for (std::size_t y = 0; y < size; ++y) {
    const double* src = &img.pixels[((window.top + y) * img.width + window.left) * img.channels];
    std::copy_n(src, size * img.channels, &out.pixels[y * size * img.channels]);
  }
  return out;
}

Image random_crop(const Image& img, std::size_t size, Rng& rng, CropWindow* window) {
  if (img.height < size || img.width < size) {
    throw input_error("random_crop: image " + std::to_string(img.height) + "x" +
                      std::to_string(img.width) + " is smaller than " + std::to_string(size) +
                      "; resize first");
  }
  CropWindow w;
  w.top = static_cast<std::size_t>(rng.below(img.height - size + 1));
  w.left = static_cast<std::size_t>(rng.below(img.width - size + 1));
  if (window) *window = w;
  return crop(img, size, w);
}

Image center_crop(const Image& img, std::size_t size) {
  if (img.height < size || img.width < size) {
    throw input_error("center_crop: image smaller than " + std::to_string(size));
  }
  return crop(img, size, {(img.height - size) / 2, (img.width - size) / 2});
}

namespace {

// Exact values at multiples of 90 degrees so axis-aligned rotations are
// pure permutations.
void cos_sin_deg(double deg, double& c, double& s) {
  const double quarter = deg / 90.0;
  if (quarter == std::round(quarter)) {
    const long q = ((std::lround(quarter) % 4) + 4) % 4;
    constexpr double kc[] = {1.0, 0.0, -1.0, 0.0};
    constexpr double ks[] = {0.0, 1.0, 0.0, -1.0};
    c = kc[q];
    s = ks[q];
    return;
  }
  const double rad = deg * std::numbers::pi / 180.0;
  c = std::cos(rad);
  s = std::sin(rad);
}

double sample_zero_fill(const Image& img, double y, double x, std::size_t c) {
  const double fy0 = std::floor(y), fx0 = std::floor(x);
  const double fy = y - fy0, fx = x - fx0;
  const auto y0 = static_cast<long long>(fy0), x0 = static_cast<long long>(fx0);
  auto px = [&](long long yy, long long xx) -> double {
    if (yy < 0 || xx < 0 || yy >= static_cast<long long>(img.height) ||
        xx >= static_cast<long long>(img.width))
      return 0.0;
    return img.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), c);
  };
  double v = (1.0 - fy) * (1.0 - fx) * px(y0, x0);
  if (fx != 0.0) v += (1.0 - fy) * fx * px(y0, x0 + 1);
  if (fy != 0.0) {
    v += fy * (1.0 - fx) * px(y0 + 1, x0);
    if (fx != 0.0) v += fy * fx * px(y0 + 1, x0 + 1);
  }
  return std::clamp(v, 0.0, 1.0);
}

}  // namespace

Image affine_resample(const Image& img, const AffineParams& params) {
  if (img.empty()) throw input_error("affine: empty image");
  if (!(params.scale > 0.0)) throw input_error("affine: scale must be > 0");
  double cs = 1.0, sn = 0.0;
  cos_sin_deg(params.angle_deg, cs, sn);
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  Image out(img.height, img.width, img.channels);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double u = (static_cast<double>(x) - cx) / params.scale;
      const double v = (static_cast<double>(y) - cy) / params.scale;
      double dx = cs * u - sn * v;
      const double dy = sn * u + cs * v;
      if (params.flip) dx = -dx;
      for (std::size_t c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = sample_zero_fill(img, cy + dy, cx + dx, c);
      }
    }
  }
  return out;
}

Image random_affine(const Image& img, const AugmentConfig& cfg, Rng& rng, AffineParams* drawn) {
  if (img.height != img.width) throw input_error("random_affine: input must be square");
  AffineParams p;
  p.flip = rng.bernoulli(cfg.flip_prob);
  p.angle_deg = rng.uniform(-cfg.rotate_max_deg, cfg.rotate_max_deg);
  p.scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
  if (drawn) *drawn = p;
  return affine_resample(img, p);
}

Image augment(const Image& img, const AugmentConfig& cfg, std::uint64_t counter,
              AugmentTrace* trace) {
  validate_augment_config(cfg);
  Rng rng = Rng::stream(cfg.seed, counter);
  Image resized = resize_narrow_side(img, cfg.target);
  CropWindow window;
  Image cropped;
  if (cfg.center_crop) {
    window = {(resized.height - cfg.target) / 2, (resized.width - cfg.target) / 2};
    cropped = crop(resized, cfg.target, window);
  } else {
    cropped = random_crop(resized, cfg.target, rng, &window);
  }
  AffineParams affine;
  Image out = random_affine(cropped, cfg, rng, &affine);
  if (trace) *trace = {window, affine};
  return out;
}

}  // namespace dpnse

#pragma once

#include <cstddef>
#include <cstdint>

#include "dpnse/image.hpp"
#include "dpnse/rng.hpp"

namespace dpnse {

struct AugmentConfig {
  std::size_t target = 224;
  double flip_prob = 0.5;
  double rotate_max_deg = 10.0;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  std::uint64_t seed = 0;
  bool center_crop = false;  // take the central window instead of a random one
};

void validate_augment_config(const AugmentConfig& cfg);

/// Bilinear resize with half-pixel centers and edge clamping.
Image resize_bilinear(const Image& img, std::size_t height, std::size_t width);

/// Scales so that min(H, W) == target; the other side is
/// max(1, round(side * target / narrow)).
Image resize_narrow_side(const Image& img, std::size_t target);

struct CropWindow {
  std::size_t top = 0;
  std::size_t left = 0;
};

/// size x size window at offsets drawn uniformly from the valid range.
Image random_crop(const Image& img, std::size_t size, Rng& rng, CropWindow* window = nullptr);
Image center_crop(const Image& img, std::size_t size);
Image crop(const Image& img, std::size_t size, CropWindow window);

struct AffineParams {
  bool flip = false;
  double angle_deg = 0.0;  // counter-clockwise as displayed (y axis pointing down)
  double scale = 1.0;
};

/// Horizontal flip, then rotation, then isotropic scaling, all about the image
/// center, applied as one inverse-mapped bilinear resample; samples falling
/// outside the source read as 0.
Image affine_resample(const Image& img, const AffineParams& params);

/// Draws flip ~ Bernoulli(flip_prob), angle ~ U[-max, max], scale ~ U[lo, hi]
/// (always in that order) and resamples. The input must be square.
Image random_affine(const Image& img, const AugmentConfig& cfg, Rng& rng,
                    AffineParams* drawn = nullptr);

struct AugmentTrace {
  CropWindow window;
  AffineParams affine;
};

/// resize_narrow_side -> crop -> random_affine with the stream
/// Rng::stream(cfg.seed, counter). Output is exactly target x target.
Image augment(const Image& img, const AugmentConfig& cfg, std::uint64_t counter,
              AugmentTrace* trace = nullptr);

}  // namespace dpnse

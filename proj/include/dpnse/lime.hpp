#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dpnse/image.hpp"

namespace dpnse {

/// Segment id per pixel, row-major; ids cover [0, count).
struct SuperpixelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t count = 0;
  std::vector<std::size_t> labels;
};

/// g x g axis-aligned tiles; the last row/column of tiles absorbs remainders.
SuperpixelMap segment_grid(const Image& img, std::size_t g);

/// exp(-d^2 / sigma^2) with d the fraction of segments switched off.
double kernel_weight(std::span<const std::uint8_t> mask, double sigma);

/// Keeps segments whose mask bit is 1; the rest are filled with the image's
/// per-channel global mean.
Image apply_mask(const Image& img, const SuperpixelMap& segments,
                 std::span<const std::uint8_t> mask);

using ModelFn = std::function<std::vector<double>(const Image&)>;

struct LimeConfig {
  std::size_t grid = 8;
  std::size_t n_samples = 1000;
  double sigma = 0.25;
  double ridge_lambda = 1e-3;
  std::size_t top_k = 10;
  std::uint64_t seed = 0;
  int jobs = 1;  // parallel model evaluations; model_fn must then be thread-safe
};

struct Perturbation {
  std::vector<std::uint8_t> mask;
  std::vector<double> prediction;
  double weight = 1.0;
};

/// Weighted ridge fit of y on the mask bits with an unpenalized intercept.
struct RidgeFit {
  std::vector<double> coefficients;
  double intercept = 0.0;
  double r2 = 0.0;
  /// max |(X^T W X + L) b - X^T W y| over the augmented system, where X has a
  /// leading column of ones and L = diag(0, lambda, ..., lambda).
  double normal_residual = 0.0;
  bool degenerate = false;  // all targets identical
};

RidgeFit fit_weighted_ridge(std::span<const Perturbation> samples, std::size_t target_class,
                            double lambda);

struct Explanation {
  std::size_t target_class = 0;
  std::vector<double> coefficients;
  double intercept = 0.0;
  std::vector<std::size_t> top_k;  // nonzero coefficients by |value| descending
  double fit_r2 = 0.0;
  double normal_residual = 0.0;
  bool degenerate = false;
  std::vector<Perturbation> samples;
};

/// Draws cfg.n_samples masks up-front (the first is all ones, the rest have
/// Bernoulli(0.5) bits), evaluates model_fn on every perturbed image and fits
/// the weighted ridge surrogate for target_class.
Explanation explain(const ModelFn& model_fn, const Image& img, std::size_t target_class,
                    const LimeConfig& cfg);

/// Grayscale base promoted to RGB; top-k segments tinted red (positive) or
/// blue (negative) with alpha = 0.5 * |c| / max|c|.
Image render_overlay(const Image& img, const SuperpixelMap& segments, const Explanation& expl);

/// {"class", "intercept", "coefficients", "top_k", "r2", "degenerate"}
std::string explanation_json(const Explanation& expl);

}  // namespace dpnse

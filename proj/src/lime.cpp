#include "dpnse/lime.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <exception>
#include <json.hpp>
#include <numeric>

#include "dpnse/errors.hpp"
#include "dpnse/rng.hpp"

namespace dpnse {

SuperpixelMap segment_grid(const Image& img, std::size_t g) {
  if (img.empty()) throw input_error("segment_grid: empty image");
  if (g == 0 || g > std::min(img.height, img.width)) {
    throw input_error("segment_grid: grid " + std::to_string(g) + " does not fit a " +
                      std::to_string(img.height) + "x" + std::to_string(img.width) + " image");
  }
  SuperpixelMap map;
  map.height = img.height;
  map.width = img.width;
  map.count = g * g;
  map.labels.resize(img.height * img.width);
  const std::size_t th = img.height / g, tw = img.width / g;
  for (std::size_t y = 0; y < img.height; ++y) {
    const std::size_t ty = std::min(y / th, g - 1);
    for (std::size_t x = 0; x < img.width; ++x) {
      map.labels[y * img.width + x] = ty * g + std::min(x / tw, g - 1);
    }
  }
  return map;
}

double kernel_weight(std::span<const std::uint8_t> mask, double sigma) {
  if (!(sigma > 0.0)) throw input_error("kernel_weight: sigma must be > 0");
  if (mask.empty()) throw input_error("kernel_weight: empty mask");
  const auto ones = static_cast<double>(std::count(mask.begin(), mask.end(), 1));
  const double d = 1.0 - ones / static_cast<double>(mask.size());
  return std::exp(-(d * d) / (sigma * sigma));
}

Image apply_mask(const Image& img, const SuperpixelMap& segments,
                 std::span<const std::uint8_t> mask) {
  if (segments.height != img.height || segments.width != img.width) {
    throw input_error("apply_mask: segmentation does not match the image");
  }
  if (mask.size() != segments.count) throw input_error("apply_mask: mask length mismatch");
  std::vector<double> mean(img.channels, 0.0);
  const std::size_t npix = img.height * img.width;
  for (std::size_t i = 0; i < npix; ++i)
    for (std::size_t c = 0; c < img.channels; ++c) mean[c] += img.pixels[i * img.channels + c];
  for (auto& m : mean) m /= static_cast<double>(npix);
  Image out = img;
  for (std::size_t i = 0; i < npix; ++i) {
    if (mask[segments.labels[i]]) continue;
    for (std::size_t c = 0; c < img.channels; ++c) out.pixels[i * img.channels + c] = mean[c];
  }
  return out;
}

RidgeFit fit_weighted_ridge(std::span<const Perturbation> samples, std::size_t target_class,
                            double lambda) {
  if (samples.empty()) throw input_error("ridge: no samples");
  if (!(lambda >= 0.0)) throw input_error("ridge: lambda must be >= 0");
  const std::size_t k = samples[0].mask.size();
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto dim = static_cast<Eigen::Index>(k + 1);
  Eigen::MatrixXd x(n, dim);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    if (s.mask.size() != k) throw input_error("ridge: masks differ in length");
    if (target_class >= s.prediction.size()) throw input_error("ridge: target class out of range");
    x(i, 0) = 1.0;
    for (std::size_t j = 0; j < k; ++j) x(i, static_cast<Eigen::Index>(j + 1)) = s.mask[j];
    y(i) = s.prediction[target_class];
    w(i) = s.weight;
  }

  Eigen::MatrixXd a = x.transpose() * w.asDiagonal() * x;
  for (Eigen::Index j = 1; j < dim; ++j) a(j, j) += lambda;
  const Eigen::VectorXd b = x.transpose() * (w.array() * y.array()).matrix();

  RidgeFit fit;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(dim);
  const bool constant = (y.array() == y(0)).all();
  if (constant) {
    fit.degenerate = true;
    beta(0) = y(0);
  } else {
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    beta = ldlt.solve(b);
    beta += ldlt.solve(b - a * beta);  // one refinement step
  }
  fit.normal_residual = (a * beta - b).cwiseAbs().maxCoeff();
  fit.intercept = beta(0);
  fit.coefficients.assign(beta.data() + 1, beta.data() + dim);

  const double wsum = w.sum();
  const double ybar = w.dot(y) / wsum;
  const Eigen::VectorXd resid = y - x * beta;
  const double ss_res = (w.array() * resid.array().square()).sum();
  const double ss_tot = (w.array() * (y.array() - ybar).square()).sum();
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

Explanation explain(const ModelFn& model_fn, const Image& img, std::size_t target_class,
                    const LimeConfig& cfg) {
  if (cfg.n_samples == 0) throw input_error("explain: n_samples must be >= 1");
  if (cfg.top_k == 0) throw input_error("explain: top_k must be >= 1");
  const SuperpixelMap segments = segment_grid(img, cfg.grid);
  const std::size_t k = segments.count;

  // Masks and weights are fixed before any evaluation, so the result does not
  // depend on evaluation order.
  Rng rng(cfg.seed);
  std::vector<Perturbation> samples(cfg.n_samples);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& mask = samples[i].mask;
    mask.assign(k, 1);
    if (i > 0)
      for (auto& bit : mask) bit = rng.bernoulli(0.5) ? 1 : 0;
    samples[i].weight = kernel_weight(mask, cfg.sigma);
  }

  std::exception_ptr failure;
  const auto count = static_cast<long long>(samples.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, cfg.jobs)) if (cfg.jobs > 1)
  for (long long i = 0; i < count; ++i) {
    try {
      auto& s = samples[static_cast<std::size_t>(i)];
      s.prediction = model_fn(apply_mask(img, segments, s.mask));
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  for (const auto& s : samples) {
    if (target_class >= s.prediction.size()) {
      throw input_error("explain: target class " + std::to_string(target_class) +
                        " outside model output");
    }
  }

  const RidgeFit fit = fit_weighted_ridge(samples, target_class, cfg.ridge_lambda);
  Explanation expl;
  expl.target_class = target_class;
  expl.coefficients = fit.coefficients;
  expl.intercept = fit.intercept;
  expl.fit_r2 = fit.r2;
  expl.normal_residual = fit.normal_residual;
  expl.degenerate = fit.degenerate;

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(expl.coefficients[a]) > std::abs(expl.coefficients[b]);
  });
  for (std::size_t id : order) {
    if (expl.top_k.size() == cfg.top_k || expl.coefficients[id] == 0.0) break;
    expl.top_k.push_back(id);
  }
  expl.samples = std::move(samples);
  return expl;
}

Image render_overlay(const Image& img, const SuperpixelMap& segments, const Explanation& expl) {
  if (segments.height != img.height || segments.width != img.width) {
    throw input_error("render_overlay: segmentation does not match the image");
  }
  if (expl.coefficients.size() != segments.count) {
    throw input_error("render_overlay: explanation was computed for another segmentation");
  }
  const Image gray = to_grayscale(img);
  Image out(img.height, img.width, 3);
  for (std::size_t i = 0; i < img.height * img.width; ++i)
    for (std::size_t c = 0; c < 3; ++c) out.pixels[i * 3 + c] = gray.pixels[i];

  double max_abs = 0.0;
  for (double c : expl.coefficients) max_abs = std::max(max_abs, std::abs(c));
  if (max_abs == 0.0) return out;

  std::vector<double> alpha(segments.count, 0.0);
  for (std::size_t id : expl.top_k) alpha[id] = 0.5 * std::abs(expl.coefficients[id]) / max_abs;
  for (std::size_t i = 0; i < img.height * img.width; ++i) {
    const std::size_t id = segments.labels[i];
    const double a = alpha[id];
    if (a == 0.0) continue;
    const std::size_t tint = expl.coefficients[id] > 0.0 ? 0 : 2;  // red or blue
    for (std::size_t c = 0; c < 3; ++c) {
      const double target = c == tint ? 1.0 : 0.0;
      out.pixels[i * 3 + c] = (1.0 - a) * gray.pixels[i] + a * target;
    }
  }
  return out;
}

std::string explanation_json(const Explanation& expl) {
  nlohmann::json j;
  j["class"] = expl.target_class;
  j["intercept"] = expl.intercept;
  j["coefficients"] = expl.coefficients;
  j["top_k"] = expl.top_k;
  j["r2"] = expl.fit_r2;
  j["degenerate"] = expl.degenerate;
  return j.dump(2);
}

}  // namespace dpnse

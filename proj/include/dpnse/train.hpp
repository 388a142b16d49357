#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dpnse/augment.hpp"
#include "dpnse/image.hpp"
#include "dpnse/net.hpp"

namespace dpnse {

struct Sample {
  Image image;
  int label = 0;
};

enum class LrSchedule { constant, cosine };

struct TrainSettings {
  std::size_t epochs = 40;
  std::size_t batch_size = 16;
  double learning_rate = 0.05;
  double momentum = 0.9;
  // cosine: epoch e (1-based) of E uses lr * (1 + cos(pi * (e - 1) / E)) / 2
  LrSchedule schedule = LrSchedule::cosine;
  std::optional<std::uint64_t> seed;
  double train_fraction = 0.8;
  bool augment = false;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // sample-weighted mean cross-entropy over the epoch
  double accuracy = 0.0;  // train-mode accuracy over the epoch
};

/// Converts to the model's channel count and brings the image to
/// input_size x input_size (narrow-side resize, then central crop).
Image prepare_image(const Image& img, const DpnSeConfig& cfg);

/// Minibatch gradient descent with a per-epoch seeded shuffle. When
/// `augment` is given every draw goes through the augmentation pipeline with
/// counter (epoch - 1) * N + index. Throws numerical_error on a non-finite loss.
std::vector<EpochLog> train_model(Model& model, std::span<const Sample> samples,
                                  const TrainSettings& settings,
                                  const AugmentConfig* augment = nullptr,
                                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Inference-mode class probabilities, one row per sample.
std::vector<std::vector<double>> predict_batch(const Model& model, std::span<const Sample> samples);
std::vector<int> predict_labels(const Model& model, std::span<const Sample> samples);
double accuracy_on(const Model& model, std::span<const Sample> samples);

}  // namespace dpnse

#include "dpnse/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "dpnse/errors.hpp"
#include "dpnse/optim.hpp"
#include "dpnse/rng.hpp"

namespace dpnse {

Image prepare_image(const Image& img, const DpnSeConfig& cfg) {
  Image out = img;
  if (cfg.input_channels == 1 && out.channels == 3) out = to_grayscale(out);
  if (cfg.input_channels == 3 && out.channels == 1) {
    Image rgb(out.height, out.width, 3);
    for (std::size_t i = 0; i < out.height * out.width; ++i)
      for (std::size_t c = 0; c < 3; ++c) rgb.pixels[i * 3 + c] = out.pixels[i];
    out = std::move(rgb);
  }
  if (out.height != cfg.input_size || out.width != cfg.input_size) {
    out = center_crop(resize_narrow_side(out, cfg.input_size), cfg.input_size);
  }
  return out;
}

namespace {

int argmax(std::span<const double> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

std::vector<EpochLog> train_model(Model& model, std::span<const Sample> samples,
                                  const TrainSettings& settings, const AugmentConfig* augment,
                                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (!settings.seed) throw config_error("train.seed is required");
  if (settings.batch_size == 0) throw config_error("train.batch_size must be >= 1");
  if (!(settings.learning_rate > 0.0)) throw config_error("train.learning_rate must be > 0");
  if (samples.empty() && settings.epochs > 0) throw input_error("no training samples");
  const DpnSeConfig& cfg = model.config();
  for (const auto& s : samples) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= cfg.num_classes) {
      throw config_error("sample label " + std::to_string(s.label) + " outside the model's " +
                         std::to_string(cfg.num_classes) + " classes");
    }
  }
  std::vector<Image> prepared;
  prepared.reserve(samples.size());
  for (const auto& s : samples) prepared.push_back(prepare_image(s.image, cfg));

  AugmentConfig aug;
  if (augment) {
    aug = *augment;
    aug.target = cfg.input_size;
  }

  std::vector<Tensor> params = model.parameters();
  OptimState opt;
  opt.learning_rate = settings.learning_rate;
  opt.momentum = settings.momentum;

  std::vector<EpochLog> log;
  const std::size_t n = samples.size();
  for (std::size_t epoch = 1; epoch <= settings.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (settings.schedule == LrSchedule::cosine) {
      const double progress =
          static_cast<double>(epoch - 1) / static_cast<double>(settings.epochs);
      opt.learning_rate =
          settings.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }
    Rng rng = Rng::stream(*settings.seed, epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    // Batch boundaries; a trailing singleton joins the previous batch so that
    // batch statistics stay defined.
    std::vector<std::size_t> starts;
    for (std::size_t b = 0; b < n; b += settings.batch_size) starts.push_back(b);
    if (starts.size() > 1 && n - starts.back() < 2) starts.pop_back();
    starts.push_back(n);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t bi = 0; bi + 1 < starts.size(); ++bi) {
      std::vector<Image> images;
      std::vector<int> labels;
      for (std::size_t j = starts[bi]; j < starts[bi + 1]; ++j) {
        const std::size_t idx = order[j];
        if (augment) {
          images.push_back(dpnse::augment(prepared[idx], aug, (epoch - 1) * n + idx));
        } else {
          images.push_back(prepared[idx]);
        }
        labels.push_back(samples[idx].label);
      }
      Tensor logits = model.forward(images_to_batch(images), Mode::train);
      Tensor loss = cross_entropy(logits, labels);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw numerical_error("non-finite loss at epoch " + std::to_string(epoch) +
                              "; try a smaller train.learning_rate (currently " +
                              std::to_string(settings.learning_rate) + ")");
      }
      backward(loss);
      optim_step(params, opt);
      zero_grads(params);
      loss_sum += value * static_cast<double>(labels.size());
      const std::size_t classes = logits.dim(1);
      for (std::size_t r = 0; r < labels.size(); ++r) {
        if (argmax(logits.data().subspan(r * classes, classes)) == labels[r]) ++correct;
      }
    }
    EpochLog entry{epoch, loss_sum / static_cast<double>(n),
                   static_cast<double>(correct) / static_cast<double>(n)};
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return log;
}

std::vector<std::vector<double>> predict_batch(const Model& model,
                                               std::span<const Sample> samples) {
  NoGradGuard no_grad;
  constexpr std::size_t kChunk = 32;
  std::vector<std::vector<double>> out;
  for (std::size_t b = 0; b < samples.size(); b += kChunk) {
    std::vector<Image> images;
    for (std::size_t j = b; j < std::min(samples.size(), b + kChunk); ++j)
      images.push_back(prepare_image(samples[j].image, model.config()));
    Tensor probs = softmax(model.forward(images_to_batch(images)));
    const std::size_t classes = probs.dim(1);
    for (std::size_t r = 0; r < images.size(); ++r) {
      auto row = probs.data().subspan(r * classes, classes);
      out.emplace_back(row.begin(), row.end());
    }
  }
  return out;
}

std::vector<int> predict_labels(const Model& model, std::span<const Sample> samples) {
  std::vector<int> labels;
  for (const auto& row : predict_batch(model, samples)) labels.push_back(argmax(row));
  return labels;
}

double accuracy_on(const Model& model, std::span<const Sample> samples) {
  if (samples.empty()) throw input_error("accuracy_on: no samples");
  const auto pred = predict_labels(model, samples);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) correct += pred[i] == samples[i].label;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace dpnse

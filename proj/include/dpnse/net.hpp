#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpnse/image.hpp"
#include "dpnse/ops.hpp"
#include "dpnse/serialize.hpp"
#include "dpnse/tensor.hpp"

namespace dpnse {

struct StageConfig {
  std::size_t num_substages = 1;
  std::size_t residual_width = 8;    // C_r: channels on the additive path
  std::size_t dense_increment = 4;   // k: channels appended per substage
  std::size_t bottleneck_width = 8;
  std::size_t stride = 1;            // applied by the first substage
  std::size_t groups = 1;            // cardinality of the 3x3 bottleneck conv
};

struct StemConfig {
  std::size_t out_channels = 8;
  std::size_t kernel = 7;
  std::size_t stride = 2;
  std::size_t pool_kernel = 3;
  std::size_t pool_stride = 2;
};

struct DpnSeConfig {
  std::size_t input_channels = 1;
  std::size_t input_size = 32;
  StemConfig stem;
  std::vector<StageConfig> stages;
  bool se_enabled = true;
  std::size_t se_reduction = 4;
  std::size_t num_classes = 4;
  bool batch_norm = true;
  double bn_eps = 1e-5;
};

/// Small four-stage network used for desk-scale training.
DpnSeConfig toy_config();
/// Shape-only preset following the public DPN-92 stage table
/// (3/4/20/3 substages, 32-way grouped bottlenecks, SE reduction 16).
DpnSeConfig dpn92_config();

/// Throws config_error on any structural problem.
void validate_config(const DpnSeConfig& cfg);

/// Spatial extent after the stem and after each stage.
std::vector<std::size_t> spatial_plan(const DpnSeConfig& cfg);

/// SE hidden width: max(1, channels / reduction).
std::size_t se_hidden_width(std::size_t channels, std::size_t reduction);

enum class Mode { train, inference };

struct ConvBn {
  Tensor weight;
  std::optional<Tensor> gamma;
  std::optional<Tensor> beta;
  RunningStats stats;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t groups = 1;
  double eps = 1e-5;
};

/// Convolution followed by batch norm (when present). `update` non-null selects
/// batch statistics and records running moments into it.
Tensor apply_conv_bn(const ConvBn& layer, const Tensor& x, RunningStats* update);

struct SeParams {
  Tensor w1;  // [C, C/r]
  Tensor b1;  // [C/r]
  Tensor w2;  // [C/r, C]
  Tensor b2;  // [C]
};

/// Squeeze (global average pool), excite (relu then sigmoid gate), reweight
/// each channel by its gate.
Tensor se_block(const Tensor& x, const SeParams& p);

struct SubstageParams {
  std::size_t in_channels = 0;
  std::size_t residual_width = 0;
  std::size_t dense_increment = 0;
  ConvBn reduce;    // 1x1, in -> bottleneck
  ConvBn grouped;   // 3x3, stride, bottleneck -> bottleneck
  ConvBn expand;    // 1x1, bottleneck -> residual_width + dense_increment
  std::optional<ConvBn> projection;  // 1x1 strided, in -> residual_width
  std::optional<SeParams> se;

  std::size_t out_channels(std::size_t dense_in) const {
    return residual_width + dense_in + dense_increment;
  }
};

struct SubstageSpec {
  std::size_t in_channels;
  std::size_t residual_width;
  std::size_t dense_increment;
  std::size_t bottleneck_width;
  std::size_t stride = 1;
  std::size_t groups = 1;
  bool project = false;
  bool batch_norm = true;
  std::optional<std::size_t> se_reduction;
  double bn_eps = 1e-5;
};

/// Parameters initialized deterministically from (seed, prefix + local name).
SubstageParams make_substage(const SubstageSpec& spec, std::uint64_t seed,
                             const std::string& prefix);

/// One dual-path block. The bottleneck output's first C_r channels are added
/// to the residual slice (or its projection), the last k are appended to the
/// dense slice. Mode::train normalizes with batch moments and updates the
/// running statistics held in `p`.
Tensor dual_path_substage(const Tensor& x, SubstageParams& p, Mode mode);
Tensor dual_path_substage(const Tensor& x, const SubstageParams& p);

class Model {
 public:
  Model(DpnSeConfig cfg, std::uint64_t seed);

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Independent deep copy.
  Model clone() const;

  const DpnSeConfig& config() const { return cfg_; }

  /// Train mode normalizes with batch moments and updates running statistics.
  /// `channel_trace`, when given, receives the channel count after every
  /// substage.
  Tensor forward(const Tensor& batch, Mode mode,
                 std::vector<std::size_t>* channel_trace = nullptr);
  /// Read-only inference; safe to call concurrently from several threads.
  Tensor forward(const Tensor& batch, std::vector<std::size_t>* channel_trace = nullptr) const;

  std::vector<Tensor> parameters();
  std::vector<NamedTensor> named_parameters() const;
  /// Parameters plus running statistics, for serialization.
  std::vector<NamedTensor> state() const;
  /// Copies values from `tensors`; names and shapes must match exactly.
  void load_state(std::span<const NamedTensor> tensors);
  std::size_t parameter_count() const;

  ConvBn& stem() { return stem_; }
  std::vector<std::vector<SubstageParams>>& stages() { return stages_; }
  const std::vector<std::vector<SubstageParams>>& stages() const { return stages_; }
  Tensor& head_weight() { return head_w_; }
  Tensor& head_bias() { return head_b_; }

 private:
  Model() = default;
  template <class Self>
  static Tensor run(Self& self, const Tensor& batch, bool train,
                    std::vector<std::size_t>* channel_trace);
  template <class Self, class TensorFn, class StatsFn>
  static void visit(Self& self, TensorFn&& tf, StatsFn&& sf);
  void check_input(const Tensor& batch) const;

  DpnSeConfig cfg_;
  ConvBn stem_;
  std::vector<std::vector<SubstageParams>> stages_;
  Tensor head_w_;
  Tensor head_b_;
};

Model build_model(const DpnSeConfig& cfg, std::uint64_t seed);

/// [N, C, H, W] batch from channel-last images (all the same size).
Tensor images_to_batch(std::span<const Image> images);

/// Softmax of the logits for a single image, shape [num_classes].
std::vector<double> predict(const Model& model, const Image& image);

}  // namespace dpnse

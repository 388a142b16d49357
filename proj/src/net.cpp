#include "dpnse/net.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <type_traits>

#include "dpnse/errors.hpp"
#include "dpnse/rng.hpp"

namespace dpnse {

DpnSeConfig toy_config() {
  DpnSeConfig cfg;
  cfg.input_channels = 1;
  cfg.input_size = 32;
  cfg.stem.out_channels = 8;
  const std::size_t strides[] = {1, 2, 2, 2};
  for (std::size_t s : strides) {
    StageConfig st;
    st.num_substages = 1;
    st.residual_width = 8;
    st.dense_increment = 4;
    st.bottleneck_width = 8;
    st.stride = s;
    cfg.stages.push_back(st);
  }
  cfg.se_enabled = true;
  cfg.se_reduction = 4;
  cfg.num_classes = 4;
  return cfg;
}

DpnSeConfig dpn92_config() {
  DpnSeConfig cfg;
  cfg.input_channels = 3;
  cfg.input_size = 224;
  cfg.stem.out_channels = 64;
  cfg.stages = {
      {3, 256, 16, 96, 1, 32},
      {4, 512, 32, 192, 2, 32},
      {20, 1024, 24, 384, 2, 32},
      {3, 2048, 128, 768, 2, 32},
  };
  cfg.se_enabled = true;
  cfg.se_reduction = 16;
  cfg.num_classes = 4;
  return cfg;
}

std::size_t se_hidden_width(std::size_t channels, std::size_t reduction) {
  if (reduction == 0) throw config_error("SE reduction must be >= 1");
  return std::max<std::size_t>(1, channels / reduction);
}

std::vector<std::size_t> spatial_plan(const DpnSeConfig& cfg) {
  const auto& st = cfg.stem;
  if (cfg.input_size == 0) throw config_error("model.input_size must be >= 1");
  if (st.kernel == 0 || st.stride == 0 || st.pool_kernel == 0 || st.pool_stride == 0) {
    throw config_error("stem kernel/stride values must be >= 1");
  }
  const std::size_t pad = st.kernel / 2;
  if (cfg.input_size + 2 * pad < st.kernel) throw config_error("input smaller than stem kernel");
  const std::size_t conv_out = (cfg.input_size + 2 * pad - st.kernel) / st.stride + 1;
  if (conv_out < st.pool_kernel) {
    throw config_error("spatial size " + std::to_string(conv_out) +
                       " after the stem convolution is below the pooling window");
  }
  std::vector<std::size_t> plan{(conv_out - st.pool_kernel) / st.pool_stride + 1};
  for (const auto& stage : cfg.stages) {
    if (stage.stride == 0) throw config_error("stage stride must be >= 1");
    plan.push_back((plan.back() - 1) / stage.stride + 1);
  }
  return plan;
}

void validate_config(const DpnSeConfig& cfg) {
  if (cfg.input_channels == 0) throw config_error("model.input_channels must be >= 1");
  if (cfg.num_classes == 0) throw config_error("model.num_classes must be >= 1");
  if (cfg.stem.out_channels == 0) throw config_error("model.stem.out_channels must be >= 1");
  if (cfg.stages.size() != 4) {
    throw config_error("expected 4 stages, got " + std::to_string(cfg.stages.size()));
  }
  if (cfg.se_reduction == 0) throw config_error("model.se_reduction must be >= 1");
  if (!(cfg.bn_eps > 0.0)) throw config_error("model.bn_eps must be > 0");
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const auto& s = cfg.stages[i];
    const std::string where = "model.stages[" + std::to_string(i) + "]";
    if (s.num_substages == 0 || s.residual_width == 0 || s.dense_increment == 0 ||
        s.bottleneck_width == 0 || s.groups == 0) {
      throw config_error(where + ": all widths and counts must be positive");
    }
    if (s.stride != 1 && s.stride != 2) throw config_error(where + ": stride must be 1 or 2");
    if (s.bottleneck_width % s.groups) {
      throw config_error(where + ": groups must divide bottleneck_width");
    }
  }
  spatial_plan(cfg);
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

Tensor init_uniform(const Shape& shape, double bound, std::uint64_t seed, const std::string& name) {
  Rng rng(splitmix64(seed) ^ fnv1a(name));
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor(shape, std::move(data), true);
}

ConvBn make_conv_bn(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                    std::size_t groups, bool bn, double eps, std::uint64_t seed,
                    const std::string& name) {
  ConvBn layer;
  const std::size_t fan_in = in / groups * kernel * kernel;
  layer.weight = init_uniform({out, in / groups, kernel, kernel},
                              std::sqrt(6.0 / static_cast<double>(fan_in)), seed,
                              name + ".conv.weight");
  if (bn) {
    layer.gamma = Tensor::full({out}, 1.0, true);
    layer.beta = Tensor::zeros({out}, true);
    layer.stats = RunningStats::identity(out);
  }
  layer.stride = stride;
  layer.pad = kernel / 2;
  layer.groups = groups;
  layer.eps = eps;
  return layer;
}

SeParams make_se(std::size_t channels, std::size_t reduction, std::uint64_t seed,
                 const std::string& name) {
  const std::size_t hidden = se_hidden_width(channels, reduction);
  SeParams p;
  p.w1 = init_uniform({channels, hidden}, 1.0 / std::sqrt(static_cast<double>(channels)), seed,
                      name + ".w1");
  p.b1 = Tensor::zeros({hidden}, true);
  p.w2 = init_uniform({hidden, channels}, 1.0 / std::sqrt(static_cast<double>(hidden)), seed,
                      name + ".w2");
  p.b2 = Tensor::zeros({channels}, true);
  return p;
}

ConvBn clone_layer(const ConvBn& l) {
  ConvBn c = l;
  c.weight = l.weight.clone();
  if (l.gamma) c.gamma = l.gamma->clone();
  if (l.beta) c.beta = l.beta->clone();
  return c;
}

SeParams clone_se(const SeParams& p) {
  return {p.w1.clone(), p.b1.clone(), p.w2.clone(), p.b2.clone()};
}

// Visits every named tensor of a layer; `stats` callback gets running moments.
template <class Layer, class TensorFn, class StatsFn>
void visit_layer(const std::string& name, Layer& l, TensorFn&& tf, StatsFn&& sf) {
  tf(name + ".conv.weight", l.weight);
  if (l.gamma) {
    tf(name + ".bn.gamma", *l.gamma);
    tf(name + ".bn.beta", *l.beta);
    sf(name + ".bn", l.stats);
  }
}

}  // namespace

Tensor apply_conv_bn(const ConvBn& layer, const Tensor& x, RunningStats* update) {
  Tensor y = conv2d(x, layer.weight, layer.stride, layer.pad, layer.groups);
  if (!layer.gamma) return y;
  if (update) return batch_norm(y, *layer.gamma, *layer.beta, layer.eps, update);
  return batch_norm_inference(y, *layer.gamma, *layer.beta, layer.eps, layer.stats);
}

Tensor se_block(const Tensor& x, const SeParams& p) {
  if (x.rank() != 4) throw dimension_error("se_block: expected [N,C,H,W]");
  const std::size_t c = x.dim(1);
  if (p.w1.rank() != 2 || p.w1.dim(0) != c || p.w2.rank() != 2 || p.w2.dim(1) != c) {
    throw dimension_error("se_block: parameters do not match " + std::to_string(c) +
                          " channels");
  }
  if (p.w1.dim(1) == 0) throw config_error("se_block: reduction leaves no hidden units");
  Tensor squeezed = global_avg_pool(x);
  Tensor hidden = relu(dense(squeezed, p.w1, p.b1));
  Tensor gate = sigmoid(dense(hidden, p.w2, p.b2));
  return scale_channels(x, gate);
}

SubstageParams make_substage(const SubstageSpec& spec, std::uint64_t seed,
                             const std::string& prefix) {
  if (spec.bottleneck_width == 0 || spec.residual_width == 0) {
    throw config_error(prefix + ": substage widths must be positive");
  }
  if (!spec.project && spec.stride != 1) {
    throw config_error(prefix + ": a strided substage needs a projection");
  }
  if (!spec.project && spec.in_channels < spec.residual_width) {
    throw config_error(prefix + ": input has fewer channels than the residual width");
  }
  SubstageParams p;
  p.in_channels = spec.in_channels;
  p.residual_width = spec.residual_width;
  p.dense_increment = spec.dense_increment;
  const bool bn = spec.batch_norm;
  p.reduce = make_conv_bn(spec.in_channels, spec.bottleneck_width, 1, 1, 1, bn, spec.bn_eps, seed,
                          prefix + ".reduce");
  p.grouped = make_conv_bn(spec.bottleneck_width, spec.bottleneck_width, 3, spec.stride,
                           spec.groups, bn, spec.bn_eps, seed, prefix + ".grouped");
  p.expand = make_conv_bn(spec.bottleneck_width, spec.residual_width + spec.dense_increment, 1, 1,
                          1, bn, spec.bn_eps, seed, prefix + ".expand");
  if (spec.project) {
    p.projection = make_conv_bn(spec.in_channels, spec.residual_width, 1, spec.stride, 1, bn,
                                spec.bn_eps, seed, prefix + ".projection");
  }
  if (spec.se_reduction) {
    const std::size_t dense_in = spec.project ? 0 : spec.in_channels - spec.residual_width;
    p.se = make_se(p.out_channels(dense_in), *spec.se_reduction, seed, prefix + ".se");
  }
  return p;
}

namespace {

template <class Params>
Tensor substage_impl(const Tensor& x, Params& p, bool train) {
  constexpr bool mutable_params = !std::is_const_v<Params>;
  auto stats = [&](auto& layer) -> RunningStats* {
    if constexpr (mutable_params) {
      return train && layer.gamma ? &layer.stats : nullptr;
    } else {
      return nullptr;
    }
  };
  if (x.rank() != 4 || x.dim(1) != p.in_channels) {
    throw config_error("dual_path_substage: expected " + std::to_string(p.in_channels) +
                       " input channels, got " + shape_str(x.shape()));
  }
  const std::size_t cr = p.residual_width;
  Tensor h = relu(apply_conv_bn(p.reduce, x, stats(p.reduce)));
  h = relu(apply_conv_bn(p.grouped, h, stats(p.grouped)));
  h = apply_conv_bn(p.expand, h, stats(p.expand));

  Tensor residual_in = p.projection ? apply_conv_bn(*p.projection, x, stats(*p.projection))
                                    : slice_channels(x, 0, cr);
  Tensor residual = add(residual_in, slice_channels(h, 0, cr));
  Tensor fresh = slice_channels(h, cr, cr + p.dense_increment);
  Tensor out = residual;
  if (!p.projection && x.dim(1) > cr) {
    out = concat_channels(out, concat_channels(slice_channels(x, cr, x.dim(1)), fresh));
  } else {
    out = concat_channels(out, fresh);
  }
  if (p.se) out = se_block(out, *p.se);
  return out;
}

}  // namespace

Tensor dual_path_substage(const Tensor& x, SubstageParams& p, Mode mode) {
  return substage_impl(x, p, mode == Mode::train);
}

Tensor dual_path_substage(const Tensor& x, const SubstageParams& p) {
  return substage_impl(x, p, false);
}

Model::Model(DpnSeConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  validate_config(cfg_);
  const bool bn = cfg_.batch_norm;
  stem_ = make_conv_bn(cfg_.input_channels, cfg_.stem.out_channels, cfg_.stem.kernel,
                       cfg_.stem.stride, 1, bn, cfg_.bn_eps, seed, "stem");
  std::size_t channels = cfg_.stem.out_channels;
  for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
    const auto& st = cfg_.stages[s];
    std::vector<SubstageParams> subs;
    for (std::size_t i = 0; i < st.num_substages; ++i) {
      SubstageSpec spec;
      spec.in_channels = channels;
      spec.residual_width = st.residual_width;
      spec.dense_increment = st.dense_increment;
      spec.bottleneck_width = st.bottleneck_width;
      spec.groups = st.groups;
      spec.batch_norm = bn;
      spec.bn_eps = cfg_.bn_eps;
      if (i == 0) {
        spec.stride = st.stride;
        spec.project = st.stride != 1 || channels != st.residual_width;
      }
      if (cfg_.se_enabled) spec.se_reduction = cfg_.se_reduction;
      subs.push_back(make_substage(
          spec, seed, "stages." + std::to_string(s) + "." + std::to_string(i)));
      channels = st.residual_width + (i + 1) * st.dense_increment;
    }
    stages_.push_back(std::move(subs));
  }
  head_w_ = init_uniform({channels, cfg_.num_classes},
                         1.0 / std::sqrt(static_cast<double>(channels)), seed, "head.weight");
  head_b_ = Tensor::zeros({cfg_.num_classes}, true);
}

Model Model::clone() const {
  Model m;
  m.cfg_ = cfg_;
  m.stem_ = clone_layer(stem_);
  for (const auto& stage : stages_) {
    std::vector<SubstageParams> subs;
    for (const auto& sp : stage) {
      SubstageParams c = sp;
      c.reduce = clone_layer(sp.reduce);
      c.grouped = clone_layer(sp.grouped);
      c.expand = clone_layer(sp.expand);
      if (sp.projection) c.projection = clone_layer(*sp.projection);
      if (sp.se) c.se = clone_se(*sp.se);
      subs.push_back(std::move(c));
    }
    m.stages_.push_back(std::move(subs));
  }
  m.head_w_ = head_w_.clone();
  m.head_b_ = head_b_.clone();
  return m;
}

void Model::check_input(const Tensor& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != cfg_.input_channels ||
      batch.dim(2) != cfg_.input_size || batch.dim(3) != cfg_.input_size) {
    throw input_error("model expects [N," + std::to_string(cfg_.input_channels) + "," +
                      std::to_string(cfg_.input_size) + "," + std::to_string(cfg_.input_size) +
                      "] input, got " + shape_str(batch.shape()));
  }
}

template <class Self>
Tensor Model::run(Self& self, const Tensor& batch, bool train,
                  std::vector<std::size_t>* channel_trace) {
  self.check_input(batch);
  constexpr bool mutable_model = !std::is_const_v<Self>;
  RunningStats* stem_stats = nullptr;
  if constexpr (mutable_model) {
    if (train && self.stem_.gamma) stem_stats = &self.stem_.stats;
  }
  const auto& cfg = self.cfg_;
  Tensor x = relu(apply_conv_bn(self.stem_, batch, stem_stats));
  x = maxpool2d(x, cfg.stem.pool_kernel, cfg.stem.pool_stride);
  if (channel_trace) channel_trace->clear();
  for (std::size_t s = 0; s < self.stages_.size(); ++s) {
    const auto& st = cfg.stages[s];
    for (std::size_t i = 0; i < self.stages_[s].size(); ++i) {
      auto& sub = self.stages_[s][i];
      if constexpr (mutable_model) {
        x = dual_path_substage(x, sub, train ? Mode::train : Mode::inference);
      } else {
        x = dual_path_substage(x, sub);
      }
      // channel recurrence: C_r + (i+1)*k after substage i of a stage
      const std::size_t expected = st.residual_width + (i + 1) * st.dense_increment;
      if (x.dim(1) != expected) {
        throw config_error("stage " + std::to_string(s) + " substage " + std::to_string(i) +
                           " produced " + std::to_string(x.dim(1)) + " channels, expected " +
                           std::to_string(expected));
      }
      if (channel_trace) channel_trace->push_back(x.dim(1));
    }
  }
  Tensor pooled = global_avg_pool(relu(x));
  return dense(pooled, self.head_w_, self.head_b_);
}

Tensor Model::forward(const Tensor& batch, Mode mode, std::vector<std::size_t>* channel_trace) {
  return run(*this, batch, mode == Mode::train, channel_trace);
}

Tensor Model::forward(const Tensor& batch, std::vector<std::size_t>* channel_trace) const {
  return run(*this, batch, false, channel_trace);
}

template <class Self, class TensorFn, class StatsFn>
void Model::visit(Self& self, TensorFn&& tf, StatsFn&& sf) {
  visit_layer("stem", self.stem_, tf, sf);
  for (std::size_t s = 0; s < self.stages_.size(); ++s) {
    for (std::size_t i = 0; i < self.stages_[s].size(); ++i) {
      auto& sp = self.stages_[s][i];
      const std::string prefix = "stages." + std::to_string(s) + "." + std::to_string(i);
      visit_layer(prefix + ".reduce", sp.reduce, tf, sf);
      visit_layer(prefix + ".grouped", sp.grouped, tf, sf);
      visit_layer(prefix + ".expand", sp.expand, tf, sf);
      if (sp.projection) visit_layer(prefix + ".projection", *sp.projection, tf, sf);
      if (sp.se) {
        tf(prefix + ".se.w1", sp.se->w1);
        tf(prefix + ".se.b1", sp.se->b1);
        tf(prefix + ".se.w2", sp.se->w2);
        tf(prefix + ".se.b2", sp.se->b2);
      }
    }
  }
  tf("head.weight", self.head_w_);
  tf("head.bias", self.head_b_);
}

std::vector<Tensor> Model::parameters() {
  std::vector<Tensor> out;
  visit(*this, [&](const std::string&, Tensor& t) { out.push_back(t); },
        [](const std::string&, RunningStats&) {});
  return out;
}

std::vector<NamedTensor> Model::named_parameters() const {
  std::vector<NamedTensor> out;
  visit(*this, [&](const std::string& n, const Tensor& t) { out.push_back({n, t}); },
        [](const std::string&, const RunningStats&) {});
  return out;
}

std::vector<NamedTensor> Model::state() const {
  std::vector<NamedTensor> out;
  visit(*this, [&](const std::string& n, const Tensor& t) { out.push_back({n, t.clone()}); },
        [&](const std::string& n, const RunningStats& s) {
                out.push_back({n + ".running_mean", Tensor({s.mean.size()}, s.mean)});
                out.push_back({n + ".running_var", Tensor({s.var.size()}, s.var)});
              });
  return out;
}

void Model::load_state(std::span<const NamedTensor> tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& nt : tensors) {
    if (!by_name.emplace(nt.name, &nt.tensor).second) {
      throw io_error("model file has duplicate tensor " + nt.name);
    }
  }
  std::size_t used = 0;
  auto take = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw config_error("model file is missing tensor " + name);
    if (it->second->shape() != shape) {
      throw config_error("tensor " + name + " has shape " + shape_str(it->second->shape()) +
                         ", config expects " + shape_str(shape));
    }
    ++used;
    return *it->second;
  };
  visit(*this,
        [&](const std::string& n, Tensor& t) {
                const Tensor& src = take(n, t.shape());
                std::copy(src.data().begin(), src.data().end(), t.data().begin());
              },
              [&](const std::string& n, RunningStats& s) {
                const Tensor& m = take(n + ".running_mean", {s.mean.size()});
                const Tensor& v = take(n + ".running_var", {s.var.size()});
                std::copy(m.data().begin(), m.data().end(), s.mean.begin());
                std::copy(v.data().begin(), v.data().end(), s.var.begin());
              });
  if (used != tensors.size()) {
    throw config_error("model file has tensors the config does not describe");
  }
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const auto& nt : named_parameters()) total += nt.tensor.numel();
  return total;
}

Model build_model(const DpnSeConfig& cfg, std::uint64_t seed) { return Model(cfg, seed); }

Tensor images_to_batch(std::span<const Image> images) {
  if (images.empty()) throw input_error("images_to_batch: no images");
  const std::size_t h = images[0].height, w = images[0].width, c = images[0].channels;
  std::vector<double> data(images.size() * c * h * w);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    if (img.height != h || img.width != w || img.channels != c) {
      throw input_error("images_to_batch: images differ in size");
    }
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          data[((n * c + ch) * h + y) * w + x] = img.at(y, x, ch);
  }
  return Tensor({images.size(), c, h, w}, std::move(data));
}

std::vector<double> predict(const Model& model, const Image& image) {
  NoGradGuard no_grad;
  const std::size_t want = model.config().input_channels;
  Image in = image;
  if (want == 1 && in.channels == 3) in = to_grayscale(in);
  if (in.channels != want) {
    throw input_error("model expects " + std::to_string(want) + "-channel images");
  }
  Tensor probs = softmax(model.forward(images_to_batch(std::span<const Image>(&in, 1))));
  return {probs.data().begin(), probs.data().end()};
}

}  // namespace dpnse

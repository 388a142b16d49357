#include "dpnse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dpnse/errors.hpp"
#include "dpnse/kernels.hpp"

namespace dpnse {

namespace {

thread_local BranchRecorder* t_recorder = nullptr;

void accumulate(const std::shared_ptr<TensorImpl>& t, std::span<const double> g) {
  if (!t->requires_grad) return;
  auto& buf = t->grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw dimension_error(std::string(op) + ": expected rank " + std::to_string(rank) +
                          ", got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw dimension_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad,
              std::size_t groups) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  if (stride == 0) throw dimension_error("conv2d: stride must be >= 1");
  if (groups == 0 || x.dim(1) % groups || w.dim(0) % groups) {
    throw dimension_error("conv2d: channels not divisible by groups");
  }
  ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.in_h = x.dim(2);
  g.in_w = x.dim(3);
  g.out_channels = w.dim(0);
  g.kernel_h = w.dim(2);
  g.kernel_w = w.dim(3);
  g.stride = stride;
  g.pad = pad;
  g.groups = groups;
  if (w.dim(1) != g.in_per_group()) {
    throw dimension_error("conv2d: input has " + std::to_string(g.in_channels) +
                          " channels but kernel expects " + std::to_string(w.dim(1) * groups));
  }
  if (g.kernel_h > g.in_h + 2 * pad || g.kernel_w > g.in_w + 2 * pad) {
    throw dimension_error("conv2d: kernel larger than padded input");
  }
  std::vector<double> out(g.output_size());
  kernels::conv2d_forward(g, x.data(), w.data(), out);
  return make_result("conv2d", {g.batch, g.out_channels, g.out_h(), g.out_w()}, std::move(out),
                     {x, w}, [x, w, g](const TensorImpl& o) {
                       if (x.requires_grad()) {
                         std::vector<double> dx(g.input_size());
                         kernels::conv2d_backward_input(g, w.data(), o.grad, dx);
                         accumulate(x.impl(), dx);
                       }
                       if (w.requires_grad()) {
                         std::vector<double> dw(g.weight_size());
                         kernels::conv2d_backward_weight(g, x.data(), o.grad, dw);
                         accumulate(w.impl(), dw);
                       }
                     });
}

BranchRecorder::BranchRecorder() : previous_(t_recorder) { t_recorder = this; }
BranchRecorder::~BranchRecorder() { t_recorder = previous_; }

Tensor maxpool2d(const Tensor& x, std::size_t k, std::size_t stride) {
  require_rank(x, 4, "maxpool2d");
  if (stride == 0 || k == 0) throw dimension_error("maxpool2d: k and stride must be >= 1");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k > h || k > w) {
    throw dimension_error("maxpool2d: window " + std::to_string(k) + " exceeds input " +
                          shape_str(x.shape()));
  }
  const std::size_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
  std::vector<double> out(n * c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  auto in = x.data();
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t s = 0; s < ow; ++s) {
        std::size_t best = p * h * w + (r * stride) * w + s * stride;
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t idx = p * h * w + (r * stride + i) * w + s * stride + j;
            if (in[idx] > in[best] || (std::isnan(in[idx]) && !std::isnan(in[best]))) best = idx;
          }
        }
        const std::size_t o = (p * oh + r) * ow + s;
        out[o] = in[best];
        argmax[o] = best;
        if (t_recorder) t_recorder->mix(best);
      }
    }
  }
  return make_result("maxpool2d", {n, c, oh, ow}, std::move(out), {x},
                     [x, argmax = std::move(argmax)](const TensorImpl& o) {
                       auto& gx = x.impl()->grad_buffer();
                       for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += o.grad[i];
                     });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw == 0) throw dimension_error("global_avg_pool: empty spatial extent");
  std::vector<double> out(n * c);
  auto in = x.data();
  for (std::size_t p = 0; p < n * c; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += in[p * hw + i];
    out[p] = acc / static_cast<double>(hw);
  }
  return make_result("global_avg_pool", {n, c}, std::move(out), {x},
                     [x, hw](const TensorImpl& o) {
                       auto& gx = x.impl()->grad_buffer();
                       const double inv = 1.0 / static_cast<double>(hw);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i / hw] * inv;
                     });
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "dense");
  require_rank(w, 2, "dense");
  require_rank(b, 1, "dense");
  const std::size_t n = x.dim(0), d = x.dim(1), m = w.dim(1);
  if (w.dim(0) != d || b.dim(0) != m) {
    throw dimension_error("dense: " + shape_str(x.shape()) + " x " + shape_str(w.shape()) +
                          " + " + shape_str(b.shape()));
  }
  std::vector<double> out(n * m);
  kernels::matmul(n, d, m, x.data(), w.data(), out);
  auto bias = b.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bias[j];
  return make_result("dense", {n, m}, std::move(out), {x, w, b},
                     [x, w, b, n, d, m](const TensorImpl& o) {
                       const auto& dy = o.grad;
                       if (x.requires_grad()) {
                         auto& gx = x.impl()->grad_buffer();
                         auto wv = w.data();
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t k = 0; k < d; ++k) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < m; ++j)
                               acc += dy[i * m + j] * wv[k * m + j];
                             gx[i * d + k] += acc;
                           }
                       }
                       if (w.requires_grad()) {
                         auto& gw = w.impl()->grad_buffer();
                         auto xv = x.data();
                         for (std::size_t k = 0; k < d; ++k)
                           for (std::size_t j = 0; j < m; ++j) {
                             double acc = 0.0;
                             for (std::size_t i = 0; i < n; ++i)
                               acc += xv[i * d + k] * dy[i * m + j];
                             gw[k * m + j] += acc;
                           }
                       }
                       if (b.requires_grad()) {
                         auto& gb = b.impl()->grad_buffer();
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < m; ++j) gb[j] += dy[i * m + j];
                       }
                     });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v < 0.0 ? 0.0 : v;  // NaN passes through
  if (t_recorder) {
    auto in = x.data();
    for (std::size_t i = 0; i < in.size(); ++i) t_recorder->mix(in[i] > 0.0);
  }
  return make_result("relu", x.shape(), std::move(out), {x}, [x](const TensorImpl& o) {
    auto& gx = x.impl()->grad_buffer();
    auto in = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (in[i] > 0.0) gx[i] += o.grad[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
  return make_result("sigmoid", x.shape(), std::move(out), {x}, [x](const TensorImpl& o) {
    auto& gx = x.impl()->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = o.data[i];
      gx[i] += o.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor softmax(const Tensor& x) {
  require_rank(x, 2, "softmax");
  const std::size_t n = x.dim(0), c = x.dim(1);
  std::vector<double> out(n * c);
  auto in = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = in.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(row[j] - mx);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return make_result("softmax", {n, c}, std::move(out), {x}, [x, n, c](const TensorImpl& o) {
    auto& gx = x.impl()->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += o.grad[i * c + j] * o.data[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        gx[i * c + j] += o.data[i * c + j] * (o.grad[i * c + j] - dot);
    }
  });
}

namespace {

Tensor batch_norm_impl(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                       bool batch_stats, const RunningStats* read, RunningStats* update) {
  require_rank(x, 4, "batch_norm");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const std::size_t m = n * hw;
  if (gamma.numel() != c || beta.numel() != c) {
    throw dimension_error("batch_norm: affine parameters do not match " + std::to_string(c) +
                          " channels");
  }
  if (batch_stats && m < 2) {
    throw dimension_error("batch_norm: batch statistics need N*H*W >= 2, got " +
                          std::to_string(m));
  }
  for (const RunningStats* s : {read, static_cast<const RunningStats*>(update)}) {
    if (s && (s->mean.size() != c || s->var.size() != c)) {
      throw dimension_error("batch_norm: running statistics do not match channel count");
    }
  }

  auto in = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  std::vector<double> xhat(x.numel());
  std::vector<double> invstd(c);
  std::vector<double> out(x.numel());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0.0, var = 0.0;
    if (batch_stats) {
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) mean += in[(b * c + ch) * hw + i];
      mean /= static_cast<double>(m);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) {
          const double dlt = in[(b * c + ch) * hw + i] - mean;
          var += dlt * dlt;
        }
      var /= static_cast<double>(m);
      if (update) {
        const double mom = update->momentum;
        update->mean[ch] = (1.0 - mom) * update->mean[ch] + mom * mean;
        update->var[ch] = (1.0 - mom) * update->var[ch] +
                          mom * var * static_cast<double>(m) / static_cast<double>(m - 1);
      }
    } else {
      mean = read->mean[ch];
      var = read->var[ch];
    }
    invstd[ch] = 1.0 / std::sqrt(var + eps);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t idx = (b * c + ch) * hw + i;
        xhat[idx] = (in[idx] - mean) * invstd[ch];
        out[idx] = gv[ch] * xhat[idx] + bv[ch];
      }
  }

  return make_result(
      "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, n, c, hw, m, batch_stats, xhat = std::move(xhat),
       invstd = std::move(invstd)](const TensorImpl& o) {
        const auto& dy = o.grad;
        auto gv = gamma.data();
        std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t idx = (b * c + ch) * hw + i;
              dgamma[ch] += dy[idx] * xhat[idx];
              dbeta[ch] += dy[idx];
            }
        if (x.requires_grad()) {
          auto& gx = x.impl()->grad_buffer();
          const double inv_m = 1.0 / static_cast<double>(m);
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t b = 0; b < n; ++b)
              for (std::size_t i = 0; i < hw; ++i) {
                const std::size_t idx = (b * c + ch) * hw + i;
                if (batch_stats) {
                  // dxhat = dy * gamma; sums over the channel are dbeta*gamma and dgamma*gamma
                  gx[idx] += gv[ch] * invstd[ch] *
                             (dy[idx] - inv_m * dbeta[ch] - xhat[idx] * inv_m * dgamma[ch]);
                } else {
                  gx[idx] += gv[ch] * invstd[ch] * dy[idx];
                }
              }
        }
        accumulate(gamma.impl(), dgamma);
        accumulate(beta.impl(), dbeta);
      });
}

}  // namespace

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  RunningStats* update) {
  return batch_norm_impl(x, gamma, beta, eps, true, nullptr, update);
}

Tensor batch_norm_inference(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                            double eps, const RunningStats& stats) {
  return batch_norm_impl(x, gamma, beta, eps, false, &stats, nullptr);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw dimension_error("concat_channels: " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<double> out(n * (ca + cb) * hw);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(i * ca * hw), ca * hw,
                out.begin() + static_cast<std::ptrdiff_t>(i * (ca + cb) * hw));
    std::copy_n(bv.begin() + static_cast<std::ptrdiff_t>(i * cb * hw), cb * hw,
                out.begin() + static_cast<std::ptrdiff_t>((i * (ca + cb) + ca) * hw));
  }
  return make_result("concat_channels", {n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {a, b},
                     [a, b, n, ca, cb, hw](const TensorImpl& o) {
                       if (a.requires_grad()) {
                         auto& ga = a.impl()->grad_buffer();
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < ca * hw; ++j)
                             ga[i * ca * hw + j] += o.grad[i * (ca + cb) * hw + j];
                       }
                       if (b.requires_grad()) {
                         auto& gb = b.impl()->grad_buffer();
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < cb * hw; ++j)
                             gb[i * cb * hw + j] += o.grad[(i * (ca + cb) + ca) * hw + j];
                       }
                     });
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 4, "slice_channels");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (begin > end || end > c) {
    throw dimension_error("slice_channels: [" + std::to_string(begin) + "," +
                          std::to_string(end) + ") out of " + std::to_string(c));
  }
  const std::size_t cs = end - begin;
  std::vector<double> out(n * cs * hw);
  auto in = x.data();
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((i * c + begin) * hw), cs * hw,
                out.begin() + static_cast<std::ptrdiff_t>(i * cs * hw));
  return make_result("slice_channels", {n, cs, x.dim(2), x.dim(3)}, std::move(out), {x},
                     [x, n, c, cs, begin, hw](const TensorImpl& o) {
                       auto& gx = x.impl()->grad_buffer();
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < cs * hw; ++j)
                           gx[(i * c + begin) * hw + j] += o.grad[i * cs * hw + j];
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
    accumulate(a.impl(), o.grad);
    accumulate(b.impl(), o.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
    auto av = a.data();
    auto bv = b.data();
    if (a.requires_grad()) {
      auto& ga = a.impl()->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.impl()->grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i] * av[i];
    }
  });
}

Tensor scale_channels(const Tensor& x, const Tensor& z) {
  require_rank(x, 4, "scale_channels");
  require_rank(z, 2, "scale_channels");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (z.dim(0) != n || z.dim(1) != c) {
    throw dimension_error("scale_channels: gate " + shape_str(z.shape()) + " vs input " +
                          shape_str(x.shape()));
  }
  std::vector<double> out(x.numel());
  auto xv = x.data();
  auto zv = z.data();
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t i = 0; i < hw; ++i) out[p * hw + i] = zv[p] * xv[p * hw + i];
  return make_result("scale_channels", x.shape(), std::move(out), {x, z},
                     [x, z, n, c, hw](const TensorImpl& o) {
                       auto xv = x.data();
                       auto zv = z.data();
                       if (x.requires_grad()) {
                         auto& gx = x.impl()->grad_buffer();
                         for (std::size_t p = 0; p < n * c; ++p)
                           for (std::size_t i = 0; i < hw; ++i)
                             gx[p * hw + i] += zv[p] * o.grad[p * hw + i];
                       }
                       if (z.requires_grad()) {
                         auto& gz = z.impl()->grad_buffer();
                         for (std::size_t p = 0; p < n * c; ++p) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < hw; ++i)
                             acc += o.grad[p * hw + i] * xv[p * hw + i];
                           gz[p] += acc;
                         }
                       }
                     });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result("sum", {1}, {acc}, {x}, [x](const TensorImpl& o) {
    auto& gx = x.impl()->grad_buffer();
    for (auto& g : gx) g += o.grad[0];
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) {
    throw input_error("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                      std::to_string(n));
  }
  if (n == 0) throw input_error("cross_entropy: empty batch");
  std::vector<double> probs(n * c);
  std::vector<int> lab(labels.begin(), labels.end());
  auto in = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[i] < 0 || static_cast<std::size_t>(lab[i]) >= c) {
      throw input_error("cross_entropy: label " + std::to_string(lab[i]) + " outside [0," +
                        std::to_string(c) + ")");
    }
    const double* row = in.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[lab[i]];
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - lse);
  }
  return make_result("cross_entropy", {1}, {total / static_cast<double>(n)}, {logits},
                     [logits, n, c, probs = std::move(probs), lab = std::move(lab)](
                         const TensorImpl& o) {
                       auto& g = logits.impl()->grad_buffer();
                       const double scale = o.grad[0] / static_cast<double>(n);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < c; ++j) {
                           const double onehot = static_cast<int>(j) == lab[i] ? 1.0 : 0.0;
                           g[i * c + j] += scale * (probs[i * c + j] - onehot);
                         }
                     });
}

}  // namespace dpnse

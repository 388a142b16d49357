#include "dpnse/kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace dpnse::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelThreshold = 1u << 15;

// Output rows `o` for which o*stride + offset - pad lands inside [0, extent).
struct ValidRange {
  std::size_t begin;
  std::size_t end;
};

ValidRange valid_outputs(std::size_t offset, std::size_t pad, std::size_t stride,
                         std::size_t extent, std::size_t out_extent) {
  // need o*stride + offset >= pad  and  o*stride + offset < extent + pad
  std::size_t begin = 0;
  if (offset < pad) begin = (pad - offset + stride - 1) / stride;
  std::size_t end = 0;
  if (extent + pad > offset) end = (extent + pad - offset + stride - 1) / stride;
  end = std::min(end, out_extent);
  if (begin > end) begin = end;
  return {begin, end};
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<double> y) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  const std::size_t plane_in = g.in_h * g.in_w, plane_out = oh_n * ow_n;
  const std::size_t kk = g.kernel_h * g.kernel_w;
  const auto planes = static_cast<std::int64_t>(g.batch * g.out_channels);
  const std::size_t work = g.output_size() * cin_g * kk;

#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (std::int64_t p = 0; p < planes; ++p) {
    const std::size_t n = static_cast<std::size_t>(p) / g.out_channels;
    const std::size_t k = static_cast<std::size_t>(p) % g.out_channels;
    const std::size_t c0 = (k / cout_g) * cin_g;
    double* out = y.data() + static_cast<std::size_t>(p) * plane_out;
    std::fill(out, out + plane_out, 0.0);
    for (std::size_t cg = 0; cg < cin_g; ++cg) {
      const double* in = x.data() + (n * g.in_channels + c0 + cg) * plane_in;
      const double* wk = w.data() + (k * cin_g + cg) * kk;
      for (std::size_t i = 0; i < g.kernel_h; ++i) {
        const ValidRange rows = valid_outputs(i, g.pad, g.stride, g.in_h, oh_n);
        for (std::size_t j = 0; j < g.kernel_w; ++j) {
          const double wv = wk[i * g.kernel_w + j];
          const ValidRange cols = valid_outputs(j, g.pad, g.stride, g.in_w, ow_n);
          for (std::size_t oh = rows.begin; oh < rows.end; ++oh) {
            const double* src = in + (oh * g.stride + i - g.pad) * g.in_w + j - g.pad;
            double* dst = out + oh * ow_n;
            if (g.stride == 1) {
              for (std::size_t ow = cols.begin; ow < cols.end; ++ow) dst[ow] += wv * src[ow];
            } else {
              for (std::size_t ow = cols.begin; ow < cols.end; ++ow)
                dst[ow] += wv * src[ow * g.stride];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> w,
                           std::span<const double> dy, std::span<double> dx) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  const std::size_t plane_in = g.in_h * g.in_w, plane_out = oh_n * ow_n;
  const std::size_t kk = g.kernel_h * g.kernel_w;
  const auto planes = static_cast<std::int64_t>(g.batch * g.in_channels);
  const std::size_t work = g.output_size() * cin_g * kk;

#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (std::int64_t p = 0; p < planes; ++p) {
    const std::size_t n = static_cast<std::size_t>(p) / g.in_channels;
    const std::size_t c = static_cast<std::size_t>(p) % g.in_channels;
    const std::size_t grp = c / cin_g, cg = c % cin_g;
    double* out = dx.data() + static_cast<std::size_t>(p) * plane_in;
    std::fill(out, out + plane_in, 0.0);
    for (std::size_t k = grp * cout_g; k < (grp + 1) * cout_g; ++k) {
      const double* grad = dy.data() + (n * g.out_channels + k) * plane_out;
      const double* wk = w.data() + (k * cin_g + cg) * kk;
      for (std::size_t i = 0; i < g.kernel_h; ++i) {
        const ValidRange rows = valid_outputs(i, g.pad, g.stride, g.in_h, oh_n);
        for (std::size_t j = 0; j < g.kernel_w; ++j) {
          const double wv = wk[i * g.kernel_w + j];
          const ValidRange cols = valid_outputs(j, g.pad, g.stride, g.in_w, ow_n);
          for (std::size_t oh = rows.begin; oh < rows.end; ++oh) {
            double* dst = out + (oh * g.stride + i - g.pad) * g.in_w + j - g.pad;
            const double* src = grad + oh * ow_n;
            for (std::size_t ow = cols.begin; ow < cols.end; ++ow)
              dst[ow * g.stride] += wv * src[ow];
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> x,
                            std::span<const double> dy, std::span<double> dw) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  const std::size_t plane_in = g.in_h * g.in_w, plane_out = oh_n * ow_n;
  const std::size_t kk = g.kernel_h * g.kernel_w;
  const auto pairs = static_cast<std::int64_t>(g.out_channels * cin_g);
  const std::size_t work = g.output_size() * cin_g * kk;

#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (std::int64_t p = 0; p < pairs; ++p) {
    const std::size_t k = static_cast<std::size_t>(p) / cin_g;
    const std::size_t cg = static_cast<std::size_t>(p) % cin_g;
    const std::size_t c = (k / cout_g) * cin_g + cg;
    double* out = dw.data() + static_cast<std::size_t>(p) * kk;
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      const ValidRange rows = valid_outputs(i, g.pad, g.stride, g.in_h, oh_n);
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        const ValidRange cols = valid_outputs(j, g.pad, g.stride, g.in_w, ow_n);
        double acc = 0.0;
        for (std::size_t n = 0; n < g.batch; ++n) {
          const double* grad = dy.data() + (n * g.out_channels + k) * plane_out;
          const double* in = x.data() + (n * g.in_channels + c) * plane_in;
          for (std::size_t oh = rows.begin; oh < rows.end; ++oh) {
            const double* src = in + (oh * g.stride + i - g.pad) * g.in_w + j - g.pad;
            const double* gr = grad + oh * ow_n;
            for (std::size_t ow = cols.begin; ow < cols.end; ++ow)
              acc += gr[ow] * src[ow * g.stride];
          }
        }
        out[i * g.kernel_w + j] = acc;
      }
    }
  }
}

void matmul(std::size_t rows, std::size_t inner, std::size_t cols, std::span<const double> a,
            std::span<const double> b, std::span<double> out) {
  const std::size_t work = rows * inner * cols;
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
    double* dst = out.data() + static_cast<std::size_t>(r) * cols;
    std::fill(dst, dst + cols, 0.0);
    const double* arow = a.data() + static_cast<std::size_t>(r) * inner;
    for (std::size_t i = 0; i < inner; ++i) {
      const double av = arow[i];
      const double* brow = b.data() + i * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += av * brow[c];
    }
  }
}

namespace serial {

void conv2d_forward(const ConvGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<double> y) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t k = 0; k < g.out_channels; ++k)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          double acc = 0.0;
          for (std::size_t cg = 0; cg < cin_g; ++cg) {
            const std::size_t c = (k / cout_g) * cin_g + cg;
            for (std::size_t i = 0; i < g.kernel_h; ++i)
              for (std::size_t j = 0; j < g.kernel_w; ++j) {
                const auto ih = static_cast<std::int64_t>(oh * g.stride + i) -
                                static_cast<std::int64_t>(g.pad);
                const auto iw = static_cast<std::int64_t>(ow * g.stride + j) -
                                static_cast<std::int64_t>(g.pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<std::int64_t>(g.in_h) ||
                    iw >= static_cast<std::int64_t>(g.in_w))
                  continue;
                acc += w[((k * cin_g + cg) * g.kernel_h + i) * g.kernel_w + j] *
                       x[((n * g.in_channels + c) * g.in_h + static_cast<std::size_t>(ih)) *
                             g.in_w +
                         static_cast<std::size_t>(iw)];
              }
          }
          y[((n * g.out_channels + k) * oh_n + oh) * ow_n + ow] = acc;
        }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> w,
                           std::span<const double> dy, std::span<double> dx) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.in_channels; ++c)
      for (std::size_t ih = 0; ih < g.in_h; ++ih)
        for (std::size_t iw = 0; iw < g.in_w; ++iw) {
          double acc = 0.0;
          const std::size_t grp = c / cin_g, cg = c % cin_g;
          for (std::size_t k = grp * cout_g; k < (grp + 1) * cout_g; ++k)
            for (std::size_t i = 0; i < g.kernel_h; ++i)
              for (std::size_t j = 0; j < g.kernel_w; ++j) {
                const std::size_t th = ih + g.pad, tw = iw + g.pad;
                if (th < i || tw < j) continue;
                if ((th - i) % g.stride || (tw - j) % g.stride) continue;
                const std::size_t oh = (th - i) / g.stride, ow = (tw - j) / g.stride;
                if (oh >= oh_n || ow >= ow_n) continue;
                acc += w[((k * cin_g + cg) * g.kernel_h + i) * g.kernel_w + j] *
                       dy[((n * g.out_channels + k) * oh_n + oh) * ow_n + ow];
              }
          dx[((n * g.in_channels + c) * g.in_h + ih) * g.in_w + iw] = acc;
        }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> x,
                            std::span<const double> dy, std::span<double> dw) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  for (std::size_t k = 0; k < g.out_channels; ++k)
    for (std::size_t cg = 0; cg < cin_g; ++cg)
      for (std::size_t i = 0; i < g.kernel_h; ++i)
        for (std::size_t j = 0; j < g.kernel_w; ++j) {
          const std::size_t c = (k / cout_g) * cin_g + cg;
          double acc = 0.0;
          for (std::size_t n = 0; n < g.batch; ++n)
            for (std::size_t oh = 0; oh < oh_n; ++oh)
              for (std::size_t ow = 0; ow < ow_n; ++ow) {
                const auto ih = static_cast<std::int64_t>(oh * g.stride + i) -
                                static_cast<std::int64_t>(g.pad);
                const auto iw = static_cast<std::int64_t>(ow * g.stride + j) -
                                static_cast<std::int64_t>(g.pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<std::int64_t>(g.in_h) ||
                    iw >= static_cast<std::int64_t>(g.in_w))
                  continue;
                acc += dy[((n * g.out_channels + k) * oh_n + oh) * ow_n + ow] *
                       x[((n * g.in_channels + c) * g.in_h + static_cast<std::size_t>(ih)) *
                             g.in_w +
                         static_cast<std::size_t>(iw)];
              }
          dw[((k * cin_g + cg) * g.kernel_h + i) * g.kernel_w + j] = acc;
        }
}

void matmul(std::size_t rows, std::size_t inner, std::size_t cols, std::span<const double> a,
            std::span<const double> b, std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < inner; ++i) acc += a[r * inner + i] * b[i * cols + c];
      out[r * cols + c] = acc;
    }
}

}  // namespace serial
}  // namespace dpnse::kernels

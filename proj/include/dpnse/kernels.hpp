#pragma once

#include <cstddef>
#include <span>

namespace dpnse {

/// Shape bookkeeping for a grouped 2-D cross-correlation with zero padding.
/// Weights are laid out [out_channels][in_channels / groups][kernel_h][kernel_w].
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t groups = 1;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel_w) / stride + 1; }
  std::size_t in_per_group() const { return in_channels / groups; }
  std::size_t out_per_group() const { return out_channels / groups; }
  std::size_t input_size() const { return batch * in_channels * in_h * in_w; }
  std::size_t output_size() const { return batch * out_channels * out_h() * out_w(); }
  std::size_t weight_size() const { return out_channels * in_per_group() * kernel_h * kernel_w; }
};

// The OpenMP kernels and the serial references accumulate every output
// element in the same order, so both produce bit-identical results for any
// thread count. The backward kernels overwrite their output buffers.
namespace kernels {

void conv2d_forward(const ConvGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<double> y);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> w,
                           std::span<const double> dy, std::span<double> dx);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> x,
                            std::span<const double> dy, std::span<double> dw);

/// out[rows x cols] = a[rows x inner] * b[inner x cols]
void matmul(std::size_t rows, std::size_t inner, std::size_t cols, std::span<const double> a,
            std::span<const double> b, std::span<double> out);

namespace serial {

void conv2d_forward(const ConvGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<double> y);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> w,
                           std::span<const double> dy, std::span<double> dx);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> x,
                            std::span<const double> dy, std::span<double> dw);
void matmul(std::size_t rows, std::size_t inner, std::size_t cols, std::span<const double> a,
            std::span<const double> b, std::span<double> out);

}  // namespace serial
}  // namespace kernels
}  // namespace dpnse

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dpnse/tensor.hpp"

namespace dpnse {

/// While alive, folds every branch taken by the piecewise ops on this thread
/// (ReLU sign, maxpool argmax) into a digest. Two forward passes with equal
/// digests ran on the same smooth piece of the graph, which is what a
/// finite-difference check needs to be meaningful.
class BranchRecorder {
 public:
  BranchRecorder();
  ~BranchRecorder();
  BranchRecorder(const BranchRecorder&) = delete;
  BranchRecorder& operator=(const BranchRecorder&) = delete;

  std::uint64_t digest() const { return digest_; }
  void mix(std::uint64_t v) { digest_ = (digest_ ^ v) * 0x100000001b3ull; }

 private:
  std::uint64_t digest_ = 0xcbf29ce484222325ull;
  BranchRecorder* previous_;
};

/// Cross-correlation (no kernel flip) with zero padding.
/// x: [N,C,H,W], w: [K,C/groups,kh,kw] -> [N,K,H',W'].
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad,
              std::size_t groups = 1);

/// Max over k x k windows. The gradient goes to the first maximum in
/// row-major window order.
Tensor maxpool2d(const Tensor& x, std::size_t k, std::size_t stride);

/// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& x);

/// x: [N,D], w: [D,M], b: [M] -> x*w + b
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Row-wise softmax over the last axis of [N,C].
Tensor softmax(const Tensor& x);

struct RunningStats {
  std::vector<double> mean;
  std::vector<double> var;
  double momentum = 0.1;

  static RunningStats identity(std::size_t channels) {
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0), 0.1};
  }
};

/// Per-channel normalization of [N,C,H,W] with batch moments, followed by the
/// affine map. When `update` is given its running mean/var (unbiased) are
/// blended in with its momentum.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  RunningStats* update = nullptr);

/// Same map using stored running moments; `stats` is only read.
Tensor batch_norm_inference(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                            double eps, const RunningStats& stats);

/// [N,Ca,H,W] ++ [N,Cb,H,W] -> [N,Ca+Cb,H,W]
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Channels [begin, end) of [N,C,H,W].
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// out[n,c,h,w] = z[n,c] * x[n,c,h,w]
Tensor scale_channels(const Tensor& x, const Tensor& z);
Tensor sum(const Tensor& x);

/// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace dpnse

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dpnse {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

/// One recorded operation: its inputs and the rule that pushes the output
/// gradient back into them.
struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Reads out.grad and accumulates into the inputs' grads.
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::shared_ptr<Node> producer;

  /// Allocates the gradient buffer on first use and returns it.
  std::vector<double>& grad_buffer();
};

/// Dense row-major float64 tensor with shared storage. Copies alias the same
/// buffer; use clone() for a deep copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t i) const;
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad();

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  /// Deep copy of the values with no graph history.
  Tensor clone() const;
  /// Shares nothing with the graph: same values, fresh leaf.
  Tensor detach() const { return clone(); }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Gradient recording is enabled per thread; inference threads disable it so
/// that shared parameters are only read.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Topologically ordered operations reachable from a root: every node appears
/// after every node that produced one of its inputs.
struct GradGraph {
  std::vector<const Node*> order;
  std::vector<const TensorImpl*> outputs;  // outputs[i] is produced by order[i]
};

GradGraph build_grad_graph(const Tensor& root);

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// requires_grad tensor on a path to the loss.
void backward(const Tensor& loss);

/// Creates an op result, attaching a graph node when any input requires grad
/// and recording is enabled.
Tensor make_result(std::string op, Shape shape, std::vector<double> data,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward_rule);

}  // namespace dpnse

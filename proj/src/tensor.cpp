#include "dpnse/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "dpnse/errors.hpp"

namespace dpnse {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<double>& TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) {
  impl_->shape = {1};
  impl_->data = {0.0};
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  if (shape_numel(shape) != data.size()) {
    throw dimension_error("tensor shape " + shape_str(shape) + " does not match " +
                          std::to_string(data.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(shape, std::vector<double>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= rank()) throw dimension_error("axis out of range for " + shape_str(shape()));
  return impl_->shape[i];
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) throw usage_error("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw dimension_error("index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= impl_->shape[axis]) throw dimension_error("index out of range");
    flat = flat * impl_->shape[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

Tensor Tensor::clone() const {
  return Tensor(impl_->shape, impl_->data, impl_->requires_grad);
}

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor make_result(std::string op, Shape shape, std::vector<double> data,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward_rule) {
  Tensor out(std::move(shape), std::move(data));
  if (!t_grad_enabled) return out;
  bool needs = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  auto node = std::make_shared<Node>();
  node->op = std::move(op);
  for (const auto& t : inputs) node->inputs.push_back(t.impl());
  node->backward = std::move(backward_rule);
  out.impl()->producer = std::move(node);
  out.impl()->requires_grad = true;
  return out;
}

GradGraph build_grad_graph(const Tensor& root) {
  GradGraph graph;
  std::unordered_set<const TensorImpl*> visited;
  // Iterative post-order DFS over producers.
  struct Frame {
    const TensorImpl* tensor;
    std::size_t next_input;
  };
  std::vector<Frame> stack;
  if (root.impl()->producer) stack.push_back({root.impl().get(), 0});
  visited.insert(root.impl().get());
  while (!stack.empty()) {
    Frame& top = stack.back();
    const Node& node = *top.tensor->producer;
    if (top.next_input < node.inputs.size()) {
      const TensorImpl* child = node.inputs[top.next_input++].get();
      if (child->producer && visited.insert(child).second) stack.push_back({child, 0});
      continue;
    }
    graph.order.push_back(&node);
    graph.outputs.push_back(top.tensor);
    stack.pop_back();
  }
  return graph;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw usage_error("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) throw usage_error("backward() on a tensor with no graph");
  GradGraph graph = build_grad_graph(loss);
  loss.impl()->grad_buffer()[0] += 1.0;
  for (std::size_t i = graph.order.size(); i-- > 0;) {
    const TensorImpl& out = *graph.outputs[i];
    if (out.grad.empty()) continue;
    graph.order[i]->backward(out);
  }
}

}  // namespace dpnse

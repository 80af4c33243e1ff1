#include "u4d/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "u4d/errors.hpp"

namespace u4d {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

const detail::Node& require(const std::shared_ptr<detail::Node>& n) {
  if (!n) throw ContractError("operation on an undefined tensor");
  return *n;
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
  check_shape(shape);
  node_->value.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<detail::Node>()) {
  check_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(data);
}

const Shape& Tensor::shape() const { return require(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return require(node_).value.size(); }

std::span<const double> Tensor::data() const { return require(node_).value; }

std::span<double> Tensor::mutable_data() {
  require(node_);
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return require(node_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  require(node_);
  if (!node_->is_leaf() && !on) {
    throw ContractError("cannot clear requires_grad on a non-leaf tensor");
  }
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
  return *this;
}

bool Tensor::is_leaf() const { return require(node_).is_leaf(); }

Tensor& Tensor::retain_grad() {
  require(node_);
  node_->retain_grad = true;
  return *this;
}

bool Tensor::has_grad() const { return !require(node_).grad.empty(); }

std::span<const double> Tensor::grad() const { return require(node_).grad; }

std::span<double> Tensor::mutable_grad() {
  require(node_);
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  require(node_);
  node_->grad.clear();
}

void Tensor::backward() const {
  const auto& root = require(node_);
  if (root.consumed) {
    throw TapeConsumedError("backward() already ran on this graph; rebuild it with a new forward pass");
  }
  if (root.value.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_str(root.shape));
  }
  if (!root.requires_grad) {
    throw ContractError("backward() on a tensor that is not on the active tape");
  }

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      detail::Node* child = n->inputs[next++].get();
      if (child->requires_grad && !child->is_leaf() && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer().assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->grad.empty()) n->grad_buffer();
    if (n->backward) n->backward(*n);
  }
  for (detail::Node* n : order) {
    if (n->is_leaf()) continue;
    n->backward = nullptr;
    n->inputs.clear();
    n->consumed = true;
    if (!n->retain_grad && n != node_.get()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

Tensor Tensor::detach() const {
  const auto& n = require(node_);
  return Tensor(n.shape, n.value);
}

namespace autograd {

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs, BackwardFn fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool any = false;
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) {
      if (t.node()->consumed) {
        throw TapeConsumedError("input tensor belongs to a graph that was already differentiated");
      }
      any = true;
    }
  }
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

std::vector<double>* input_grad(detail::Node& self, std::size_t i) {
  auto& in = self.inputs[i];
  if (!in || !in->requires_grad) return nullptr;
  return &in->grad_buffer();
}

}  // namespace autograd

}  // namespace u4d

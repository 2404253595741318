#include "disentangle/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "disentangle/error.hpp"

namespace disentangle {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

void ensure_finite(std::span<const double> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream msg;
      msg << "non-finite value " << values[i] << " at flat index " << i << " in " << what;
      throw NumericalError(msg.str());
    }
  }
}

namespace {

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

detail::TensorNode& must(const std::shared_ptr<detail::TensorNode>& node) {
  if (!node) throw ContractError("use of an undefined tensor");
  return *node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<detail::TensorNode>();
  node->values.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  ensure_finite(node->values, "Tensor::full");
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("Tensor::from: shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  ensure_finite(values, "Tensor::from");
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->values.assign(values.begin(), values.end());
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return must(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return must(node_).values.size(); }

std::span<const double> Tensor::values() const { return must(node_).values; }
std::span<double> Tensor::mutable_values() { return must(node_).values; }

double Tensor::item() const {
  const auto& n = must(node_);
  if (n.values.size() != 1) throw ContractError("item() on non-scalar tensor " + shape_string(n.shape));
  return n.values[0];
}

bool Tensor::requires_grad() const { return must(node_).requires_grad; }
void Tensor::set_requires_grad(bool on) { must(node_).requires_grad = on; }

bool Tensor::has_grad() const { return !must(node_).grad.empty(); }
std::span<const double> Tensor::grad() const { return must(node_).grad; }
std::span<double> Tensor::mutable_grad() { return must(node_).grad; }

void Tensor::zero_grad() {
  auto& n = must(node_);
  n.grad.assign(n.values.size(), 0.0);
}

void Tensor::clear_grad() {
  auto& n = must(node_);
  n.grad.clear();
  n.grad.shrink_to_fit();
}

Tensor Tensor::detach() const { return clone(false); }

Tensor Tensor::clone(bool requires_grad) const {
  const auto& n = must(node_);
  auto copy = std::make_shared<detail::TensorNode>();
  copy->shape = n.shape;
  copy->values = n.values;
  copy->requires_grad = requires_grad;
  return Tensor(std::move(copy));
}

bool Tape::tracks(std::initializer_list<const Tensor*> inputs) const {
  if (!recording()) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor Tape::make_output(Shape shape, Buffer values, bool tracked) {
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = tracked;
  return Tensor(std::move(node));
}

void Tape::record(std::string_view op, std::vector<Tensor> inputs, const Tensor& output, Rule rule) {
  entries_.push_back(Entry{op, std::move(inputs), output, std::move(rule)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a loss that does not depend on any tracked tensor");
  }

  auto& seed = loss.node_->grad;
  if (seed.empty()) seed.assign(1, 0.0);
  seed[0] += 1.0;

  std::unordered_set<const detail::TensorNode*> touched;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    for (Tensor& in : it->inputs) {
      if (in.requires_grad()) {
        if (in.node_->grad.empty()) in.node_->grad.assign(in.node_->values.size(), 0.0);
        touched.insert(in.node_.get());
      }
    }
    const auto& out_grad = it->output.node_->grad;
    if (!out_grad.empty()) it->rule(out_grad);
  }

  for (const auto& entry : entries_) {
    for (const Tensor& in : entry.inputs) {
      if (touched.erase(in.node_.get())) ensure_finite(in.node_->grad, "gradient after backward");
    }
  }
  entries_.clear();
}

}  // namespace disentangle

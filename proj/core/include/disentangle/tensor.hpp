#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace disentangle {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Allocator placing every buffer on a 64-byte boundary. Vectorized kernels
/// peel differently depending on alignment, so without it the rounding of a
/// product could change with heap placement.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

namespace detail {
struct TensorNode {
  Shape shape;
  Buffer values;
  Buffer grad;  // empty until populated
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major array of doubles with optional gradient storage.
///
/// A Tensor is a shared handle: copies refer to the same storage. Values are
/// treated as immutable once an operation has consumed them; only optimizers
/// and initializers write through mutable_values() between passes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  /// Throws DimensionError when values.size() != product(shape) and
  /// NumericalError on non-finite input.
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  /// Allocates (or resets) the gradient buffer to zeros.
  void zero_grad();
  /// Drops the gradient buffer.
  void clear_grad();

  /// Untracked deep copy of the values.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  friend class Tape;

  std::shared_ptr<detail::TensorNode> node_;
};

/// Ordered record of executed operations, replayed in reverse by backward().
///
/// Operations append an entry only when the tape is recording and at least
/// one input requires a gradient. One tape per thread of computation.
class Tape {
 public:
  enum class Mode { kRecord, kInference };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  static Tape inference() { return Tape(Mode::kInference); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const { return mode_ == Mode::kRecord; }

  /// True when the tape records and any of the inputs is tracked.
  bool tracks(std::initializer_list<const Tensor*> inputs) const;

  /// Creates the output tensor for an op, tracked iff `tracked`.
  static Tensor make_output(Shape shape, Buffer values, bool tracked);

  /// Backward rule: receives the gradient of the output and accumulates into
  /// the gradients of the inputs (which are guaranteed to be allocated).
  using Rule = std::function<void(std::span<const double> out_grad)>;

  void record(std::string_view op, std::vector<Tensor> inputs, const Tensor& output, Rule rule);

  /// Populates grad on every tracked tensor reachable through the tape, then
  /// clears the tape. Throws ContractError for a non-scalar or untracked loss.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::string_view op;
    std::vector<Tensor> inputs;
    Tensor output;
    Rule rule;
  };

  Mode mode_;
  std::vector<Entry> entries_;
};

/// Throws NumericalError naming `what` if any value is NaN or infinite.
void ensure_finite(std::span<const double> values, std::string_view what);

}  // namespace disentangle

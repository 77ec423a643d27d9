#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmnn {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a forward op produces NaN/Inf from finite inputs, or a loss diverges.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array with an optional gradient accumulator.
///
/// Copies are shallow handles onto the same storage (like a framework
/// tensor); use clone() for an independent copy. The gradient buffer is
/// absent until a backward pass or ensure_grad() allocates it.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  std::size_t rank() const { return impl().shape.size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const { return impl().data.size(); }

  std::span<T> data() { return impl().data; }
  std::span<const T> data() const { return impl().data; }
  std::vector<T>& values() { return impl().data; }
  const std::vector<T>& values() const { return impl().data; }
  T item() const;

  bool requires_grad() const { return defined() && impl().requires_grad; }
  Tensor& set_requires_grad(bool flag) {
    impl().requires_grad = flag;
    return *this;
  }

  bool has_grad() const { return defined() && !impl().grad.empty(); }
  std::span<T> grad() { return impl().grad; }
  std::span<const T> grad() const { return impl().grad; }
  // Gradient storage is shared by every handle, so const handles may accumulate into it.
  std::span<T> ensure_grad() const;
  void zero_grad();
  void clear_grad() { impl().grad.clear(); }

  Tensor clone() const;
  bool shares_storage(const Tensor& other) const { return impl_ == other.impl_; }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(numel());
    const auto& src = values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
    return Tensor<U>(shape(), std::move(out));
  }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  Impl& impl() {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
  }
  const Impl& impl() const {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
  }
  Impl& shared_impl() const {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
  }

  std::shared_ptr<Impl> impl_;
};

/// Append-only tape of differentiable operations.
///
/// Nodes are recorded in execution order; backward() walks them in strict
/// reverse order. A graph can be run backward once; reset() clears it for
/// reuse. A graph belongs to a single thread.
template <typename T>
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }

  /// True when the op consuming these inputs must be recorded.
  bool tracks(std::initializer_list<const Tensor<T>*> inputs) const;

  void record(std::string op, std::vector<Tensor<T>> inputs, Tensor<T> output,
              std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every tracked tensor.
  void backward(Tensor<T> loss);

  void reset();

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t i) const { return nodes_.at(i).op; }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    std::string op;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    std::function<void()> backward;
  };

  std::vector<Node> nodes_;
  bool recording_;
  bool backward_done_ = false;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace tmnn

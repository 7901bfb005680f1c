#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace smpcl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  // Empty until something accumulates into it.
  std::vector<T> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;

  T* grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad.data();
  }
};

/// Dense row-major array with optional participation in a gradient tape.
///
/// Copies share storage (handle semantics). Data is only mutated by
/// optimizers and test setup through mutable_data(); ops always allocate
/// fresh outputs.
template <typename T>
class Tensor {
 public:
  using Node = TensorNode<T>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  std::span<T> mutable_data();
  T item() const;
  T operator[](std::size_t flat) const { return node_->data[flat]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const T> grad() const;
  void zero_grad();

  std::uint64_t id() const;
  /// Fresh leaf holding a copy of the values; never tracked.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

/// Ordered record of differentiable ops executed while the tape was active.
template <typename T>
class Tape {
 public:
  using NodePtr = std::shared_ptr<TensorNode<T>>;

  struct Record {
    std::string op;
    std::vector<NodePtr> inputs;
    NodePtr output;
    std::function<void()> backward;
  };

  void record(std::string op, std::vector<NodePtr> inputs, NodePtr output,
              std::function<void()> backward);

  const std::vector<Record>& records() const { return records_; }
  bool consumed() const { return consumed_; }
  /// True if any recorded op reads the given tensor.
  bool reads(const Tensor<T>& t) const;

  /// Reverse sweep from a scalar loss. A tape can be swept once.
  void backward(const Tensor<T>& loss);

 private:
  std::vector<Record> records_;
  bool consumed_ = false;
};

template <typename T>
Tape<T>* active_tape();

/// Binds a tape as the recording target for the current thread.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Suspends recording for the current thread.
template <typename T>
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

namespace detail {

template <typename T>
bool tracking(std::initializer_list<const Tensor<T>*> inputs);

// Allocates an op output; marks it as requiring grad if `tracked`.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, bool tracked);

template <typename T>
void record(const char* op, std::vector<typename Tape<T>::NodePtr> inputs,
            const Tensor<T>& output, std::function<void()> backward);

}  // namespace detail

}  // namespace smpcl

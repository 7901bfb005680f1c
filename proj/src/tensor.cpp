#include "smpcl/tensor.hpp"

#include <atomic>
#include <sstream>

#include "smpcl/error.hpp"

namespace smpcl {

namespace {

std::uint64_t next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

template <typename T>
thread_local Tape<T>* g_active_tape = nullptr;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive: " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor data size " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
  node_->id = next_id();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(node_->shape));
  }
  return node_->shape[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return node_->data.size();
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return node_->data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  return node_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
  node_->requires_grad = value;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return !node_->grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  node_->grad.clear();
}

template <typename T>
std::uint64_t Tensor<T>::id() const {
  return node_->id;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
void Tape<T>::record(std::string op, std::vector<NodePtr> inputs, NodePtr output,
                     std::function<void()> backward) {
  if (consumed_) throw AutogradError("cannot record onto a tape that was already swept");
  records_.push_back({std::move(op), std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
bool Tape<T>::reads(const Tensor<T>& t) const {
  for (const auto& r : records_) {
    for (const auto& in : r.inputs) {
      if (in == t.node()) return true;
    }
  }
  return false;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (consumed_) {
    throw AutogradError("backward called twice on the same tape; record a new tape");
  }
  if (!loss.defined() || loss.numel() != 1) {
    throw AutogradError("backward requires a scalar loss");
  }
  bool found = false;
  for (const auto& r : records_) {
    if (r.output == loss.node()) {
      found = true;
      break;
    }
  }
  if (!found) throw AutogradError("loss was not produced on this tape (detached ancestry)");

  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward();
  }
  consumed_ = true;
}

template <typename T>
Tape<T>* active_tape() {
  return g_active_tape<T>;
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(g_active_tape<T>) {
  g_active_tape<T> = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  g_active_tape<T> = previous_;
}

template <typename T>
NoGradScope<T>::NoGradScope() : previous_(g_active_tape<T>) {
  g_active_tape<T> = nullptr;
}

template <typename T>
NoGradScope<T>::~NoGradScope() {
  g_active_tape<T> = previous_;
}

namespace detail {

template <typename T>
bool tracking(std::initializer_list<const Tensor<T>*> inputs) {
  if (g_active_tape<T> == nullptr) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, bool tracked) {
  return Tensor<T>(std::move(shape), std::move(data), tracked);
}

template <typename T>
void record(const char* op, std::vector<typename Tape<T>::NodePtr> inputs,
            const Tensor<T>& output, std::function<void()> backward) {
  g_active_tape<T>->record(op, std::move(inputs), output.node(), std::move(backward));
}

}  // namespace detail

#define SMPCL_INSTANTIATE(T)                                                             \
  template class Tensor<T>;                                                              \
  template class Tape<T>;                                                                \
  template class TapeScope<T>;                                                           \
  template class NoGradScope<T>;                                                         \
  template Tape<T>* active_tape<T>();                                                    \
  template bool detail::tracking<T>(std::initializer_list<const Tensor<T>*>);            \
  template Tensor<T> detail::make_result<T>(Shape, std::vector<T>, bool);                \
  template void detail::record<T>(const char*, std::vector<Tape<T>::NodePtr>,            \
                                  const Tensor<T>&, std::function<void()>);

SMPCL_INSTANTIATE(float)
SMPCL_INSTANTIATE(double)

#undef SMPCL_INSTANTIATE

}  // namespace smpcl

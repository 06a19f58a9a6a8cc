#include "plita/core/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace plita::core {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
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
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) : impl_(std::make_shared<TensorImpl<T>>()) {
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
  set_requires_grad(requires_grad);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl<T>>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data.assign(data.begin(), data.end());
  set_requires_grad(requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <typename T>
std::size_t Tensor<T>::size(int axis) const {
  const int rank = static_cast<int>(dim());
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != dim()) throw ShapeError("index rank mismatch for shape " + shape_str(shape()));
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= impl_->shape[axis]) throw std::out_of_range("index out of range for " + shape_str(shape()));
    offset = offset * impl_->shape[axis] + i;
    ++axis;
  }
  return impl_->data[offset];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (on && is_leaf()) impl_->ensure_grad();
  return *this;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return impl_->ensure_grad();
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
Tensor<T>& Tensor<T>::retain_grad() {
  impl_->retain_grad = true;
  return *this;
}

template <typename T>
Tensor<T>& Tensor<T>::set_name(std::string name) {
  impl_->name = std::move(name);
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw std::invalid_argument("backward() requires a scalar loss, got shape " + shape_str(shape()));
  }
  if (!impl_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the producers.
  std::vector<TensorImpl<T>*> order;
  std::unordered_set<const TensorImpl<T>*> visited;
  std::vector<std::pair<TensorImpl<T>*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->grad_fn && next < node->grad_fn->inputs.size()) {
      TensorImpl<T>* child = node->grad_fn->inputs[next++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  impl_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl<T>* node = *it;
    if (!node->grad_fn) continue;
    if (node->grad.size() == node->data.size()) node->grad_fn->backward(*node);
    if (!node->retain_grad && node != impl_.get()) {
      Buffer<T>().swap(node->grad);
    }
  }
}

template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> data, const std::vector<Tensor<T>>& inputs,
                      const char* op, std::function<void(const TensorImpl<T>&)> backward) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("op " + std::string(op) + " produced " + std::to_string(data.size()) + " values for shape " +
                     shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  Tensor<T> out(std::move(impl));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto fn = std::make_shared<GradFn<T>>();
  fn->op = op;
  fn->inputs.reserve(inputs.size());
  for (const auto& in : inputs) fn->inputs.push_back(in.impl());
  fn->backward = std::move(backward);
  out.impl()->grad_fn = std::move(fn);
  out.impl()->requires_grad = true;
  return out;
}

template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> data, std::initializer_list<Tensor<T>> inputs,
                      const char* op, std::function<void(const TensorImpl<T>&)> backward) {
  return make_result<T>(std::move(shape), std::move(data), std::vector<Tensor<T>>(inputs), op,
                        std::move(backward));
}

template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> make_result<float>(Shape, Buffer<float>, const std::vector<Tensor<float>>&,
                                          const char*, std::function<void(const TensorImpl<float>&)>);
template Tensor<double> make_result<double>(Shape, Buffer<double>, const std::vector<Tensor<double>>&,
                                            const char*, std::function<void(const TensorImpl<double>&)>);
template Tensor<float> make_result<float>(Shape, Buffer<float>, std::initializer_list<Tensor<float>>,
                                          const char*, std::function<void(const TensorImpl<float>&)>);
template Tensor<double> make_result<double>(Shape, Buffer<double>, std::initializer_list<Tensor<double>>,
                                            const char*, std::function<void(const TensorImpl<double>&)>);

}  // namespace plita::core

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace plita::core {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned storage so vectorized kernels see the same element
/// alignment on every run regardless of allocator state.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when operand shapes are incompatible. The message names every shape involved.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
struct TensorImpl;

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

/// Record of the operation that produced a tensor. `backward` reads the
/// output gradient and accumulates into the inputs that require grad.
template <typename T>
struct GradFn {
  const char* op = "";
  std::vector<ImplPtr<T>> inputs;
  std::function<void(const TensorImpl<T>& out)> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  Buffer<T> data;
  Buffer<T> grad;
  bool requires_grad = false;
  bool retain_grad = false;
  std::shared_ptr<GradFn<T>> grad_fn;
  std::string name;

  Buffer<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Shared handle to a dense row-major array with an optional gradient.
///
/// Values are fixed once an op produces them. Leaves (parameters and inputs)
/// may be mutated in place through `mutable_data()`, which is how the
/// optimizer and the EMA update write parameters.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);
  explicit Tensor(ImplPtr<T> impl) : impl_(std::move(impl)) {}

  static Tensor scalar(T value);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim() const { return impl_->shape.size(); }
  /// Size of `axis`; negative axes count from the end.
  std::size_t size(int axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  std::span<T> mutable_data() { return impl_->data; }
  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return !impl_->grad_fn; }
  bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
  /// Gradient buffer; all zeros when nothing has been accumulated.
  std::span<const T> grad() const;
  std::span<T> mutable_grad() { return impl_->ensure_grad(); }
  void zero_grad();
  /// Keep the gradient of a non-leaf tensor after backward.
  Tensor& retain_grad();

  const std::string& name() const { return impl_->name; }
  Tensor& set_name(std::string name);

  /// Reverse-mode pass from this scalar. Throws std::invalid_argument for
  /// non-scalars.
  void backward() const;

  /// Deep copy of the values with no graph attached.
  Tensor clone() const;

  const ImplPtr<T>& impl() const { return impl_; }

 private:
  ImplPtr<T> impl_;
};

/// Whether ops record graph edges on this thread.
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

/// Builds an op result. The backward closure is attached only when grad
/// mode is on and at least one input requires grad. The closure must not
/// capture the output tensor; it receives it as its argument.
template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> data, std::initializer_list<Tensor<T>> inputs,
                      const char* op, std::function<void(const TensorImpl<T>&)> backward);

template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> data, const std::vector<Tensor<T>>& inputs,
                      const char* op, std::function<void(const TensorImpl<T>&)> backward);

template <typename T>
inline bool wants_grad(const ImplPtr<T>& t) {
  return t->requires_grad;
}

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

}  // namespace plita::core

#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rgan {

// Dense row-major tensors with an optional gradient, plus a dynamic tape of
// executed primitives. The scalar type is a template parameter: float is the
// training default, double is used by the finite-difference checks.

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void tensor_fail(const std::string& msg) {
  throw TensorError(msg);
}

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  uint64_t grad_epoch = 0;  // id of the backward pass that last touched grad
};

// Epoch of the backward pass currently executing (0 = none). Lets the tape
// skip ops whose output never received a gradient in this pass.
template <typename T>
struct BackwardPass {
  inline static thread_local uint64_t epoch = 0;
};

template <typename T>
inline void accumulate_grad(TensorImpl<T>& t, const T* g) {
  if (t.grad.size() != t.data.size()) t.grad.assign(t.data.size(), T(0));
  T* dst = t.grad.data();
  const int64_t n = static_cast<int64_t>(t.data.size());
  for (int64_t i = 0; i < n; ++i) dst[i] += g[i];
  t.grad_epoch = BackwardPass<T>::epoch;
}

template <typename T>
inline void accumulate_grad_at(TensorImpl<T>& t, int64_t index, T g) {
  if (t.grad.size() != t.data.size()) t.grad.assign(t.data.size(), T(0));
  t.grad[index] += g;
  t.grad_epoch = BackwardPass<T>::epoch;
}

// Marks an impl as participating in the current pass once its grad buffer is
// ready; backward rules that write grads directly use this.
template <typename T>
inline std::vector<T>& grad_buffer(TensorImpl<T>& t) {
  if (t.grad.size() != t.data.size()) t.grad.assign(t.data.size(), T(0));
  t.grad_epoch = BackwardPass<T>::epoch;
  return t.grad;
}

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
      : impl_(std::make_shared<TensorImpl<T>>()) {
    validate_shape(shape);
    impl_->shape = std::move(shape);
    impl_->data.assign(static_cast<size_t>(shape_numel(impl_->shape)), fill);
    impl_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : impl_(std::make_shared<TensorImpl<T>>()) {
    validate_shape(shape);
    if (static_cast<int64_t>(values.size()) != shape_numel(shape))
      tensor_fail("tensor data length " + std::to_string(values.size()) +
                  " does not match shape " + shape_str(shape));
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
    impl_->requires_grad = requires_grad;
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  T* data() { return impl_->data.data(); }
  const T* data() const { return impl_->data.data(); }
  std::vector<T>& vec() { return impl_->data; }
  const std::vector<T>& vec() const { return impl_->data; }

  T item() const {
    if (numel() != 1)
      tensor_fail("item() requires a scalar tensor, got shape " +
                  shape_str(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    impl_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  // Gradient value at i; zero when no gradient has been accumulated.
  T grad_at(int64_t i) const {
    return impl_->grad.empty() ? T(0) : impl_->grad[static_cast<size_t>(i)];
  }
  const std::vector<T>& grad() const { return impl_->grad; }
  std::vector<T>& grad() { return impl_->grad; }

  void zero_grad() {
    if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  }

  // Same data, no autodiff participation.
  Tensor detach() const {
    Tensor out(impl_->shape);
    out.impl_->data = impl_->data;
    return out;
  }

  Tensor clone() const {
    Tensor out(impl_->shape);
    out.impl_->data = impl_->data;
    out.impl_->requires_grad = impl_->requires_grad;
    return out;
  }

  std::shared_ptr<TensorImpl<T>>& impl() { return impl_; }
  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

 private:
  static void validate_shape(const Shape& s) {
    for (int d : s)
      if (d <= 0) tensor_fail("invalid dimension in shape " + shape_str(s));
  }

  std::shared_ptr<TensorImpl<T>> impl_;
};

// Ordered record of executed primitives. Ops are appended in execution order,
// so inputs always precede their consumers; a backward pass walks the record
// once, in reverse.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape*& active() {
    static thread_local Tape* t = nullptr;
    return t;
  }

  // Activates a tape for the enclosing scope.
  class Scope {
   public:
    explicit Scope(Tape& t) : prev_(active()) { active() = &t; }
    ~Scope() { active() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  void record(std::shared_ptr<TensorImpl<T>> out, std::function<void()> back) {
    recs_.push_back({std::move(out), std::move(back)});
  }

  size_t size() const { return recs_.size(); }
  void clear() { recs_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  // requires_grad tensor reachable from it. Gradients add on top of whatever
  // the tensors already hold; zeroing is the caller's (optimizer's) job.
  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1)
      tensor_fail("backward requires a scalar loss, got shape " +
                  shape_str(loss.shape()));
    if (recs_.empty()) tensor_fail("backward on an empty tape");

    const uint64_t e = ++epoch_counter_;
    BackwardPass<T>::epoch = e;
    TensorImpl<T>& l = *loss.impl();
    if (l.grad.size() != l.data.size()) l.grad.assign(l.data.size(), T(0));
    l.grad[0] += T(1);
    l.grad_epoch = e;

    for (auto it = recs_.rbegin(); it != recs_.rend(); ++it) {
      if (it->out->grad_epoch == e) it->back();
    }
    BackwardPass<T>::epoch = 0;
  }

 private:
  struct Rec {
    std::shared_ptr<TensorImpl<T>> out;
    std::function<void()> back;
  };
  std::vector<Rec> recs_;
  inline static std::atomic<uint64_t> epoch_counter_{0};
};

// True when a tape is active and at least one input wants gradients; the
// output of the op then joins the graph.
template <typename T>
inline bool track_grad(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const Tensor<T>* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

#ifndef NDEBUG
template <typename T>
inline void debug_check_finite(const Tensor<T>& t, const char* op) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t.data()[i]))
      tensor_fail(std::string("non-finite value produced by ") + op);
}
#else
template <typename T>
inline void debug_check_finite(const Tensor<T>&, const char*) {}
#endif

}  // namespace rgan

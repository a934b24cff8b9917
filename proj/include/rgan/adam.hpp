#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "rgan/layers.hpp"

namespace rgan {

// Bias-corrected Adam over one or more parameter stores. Moments are owned
// here and exposed for checkpointing; step() reads the gradients the tape
// accumulated into the parameters and updates them in place.

template <typename T>
class Adam {
 public:
  struct Slot {
    Param<T>* param;
    std::vector<T> m, v;
  };

  Adam(std::vector<ParamStore<T>*> stores, T lr, T beta1, T beta2,
       T eps = T(1e-8))
      : stores_(std::move(stores)), lr_(lr), beta1_(beta1), beta2_(beta2),
        eps_(eps) {
    for (ParamStore<T>* s : stores_)
      for (Param<T>& p : s->entries())
        slots_.push_back(Slot{&p, std::vector<T>(size_t(p.tensor.numel()), T(0)),
                              std::vector<T>(size_t(p.tensor.numel()), T(0))});
  }

  void step() {
    ++t_;
    const T bc1 = T(1) - T(std::pow(double(beta1_), double(t_)));
    const T bc2 = T(1) - T(std::pow(double(beta2_), double(t_)));
    for (Slot& s : slots_) {
      Tensor<T>& p = s.param->tensor;
      const int64_t n = p.numel();
      T* data = p.data();
      for (int64_t i = 0; i < n; ++i) {
        const T g = p.grad_at(i);
        if (!std::isfinite(g))
          tensor_fail("adam: non-finite gradient in parameter " +
                      s.param->name);
        s.m[size_t(i)] = beta1_ * s.m[size_t(i)] + (T(1) - beta1_) * g;
        s.v[size_t(i)] = beta2_ * s.v[size_t(i)] + (T(1) - beta2_) * g * g;
        const T mhat = s.m[size_t(i)] / bc1;
        const T vhat = s.v[size_t(i)] / bc2;
        data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void zero_grad() {
    for (ParamStore<T>* s : stores_) s->zero_grads();
  }

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }

  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  std::vector<ParamStore<T>*> stores_;
  std::vector<Slot> slots_;
  T lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace rgan

#pragma once

#include <cmath>

#include "rgan/ops.hpp"

namespace rgan {

// GAN objective pieces as pure functions over logit maps and images.
// Expectations are realized as means over the patch map (and over the batch
// by averaging per-item losses). Sigmoid outputs are clamped to
// [1e-7, 1 - 1e-7] before the log so a confident discriminator cannot
// overflow the loss.

inline constexpr double kSigmoidClamp = 1e-7;

struct LossWeights {
  double lambda_cycle = 10.0;
  double lambda_identity = 5.0;
};

struct LossReport {
  double adv_d_l = 0, adv_d_h = 0;
  double adv_g_l = 0, adv_g_h = 0;
  double cycle_l = 0, cycle_h = 0;
  double id_l = 0, id_h = 0;
  double total_g = 0, total_d = 0;
};

template <typename T>
Tensor<T> clamped_sigmoid(const Tensor<T>& logits) {
  return clamp(sigmoid(logits), T(kSigmoidClamp), T(1.0 - kSigmoidClamp));
}

// Discriminator objective, the negated log form so the discriminator
// minimizes: -(mean log s(real) + mean log(1 - s(fake))). Fake logits must
// come from a detached generator output.
template <typename T>
Tensor<T> adversarial_d_loss(const Tensor<T>& real_logits,
                             const Tensor<T>& fake_logits) {
  if (real_logits.shape() != fake_logits.shape())
    tensor_fail("adversarial_d_loss: shape mismatch " +
                shape_str(real_logits.shape()) + " vs " +
                shape_str(fake_logits.shape()));
  Tensor<T> one = Tensor<T>::scalar(T(1));
  Tensor<T> real_term = mean(log(clamped_sigmoid(real_logits)));
  Tensor<T> fake_term = mean(log(sub(one, clamped_sigmoid(fake_logits))));
  return neg(add(real_term, fake_term));
}

// Non-saturating generator objective: -mean log s(fake).
template <typename T>
Tensor<T> adversarial_g_loss(const Tensor<T>& fake_logits) {
  return neg(mean(log(clamped_sigmoid(fake_logits))));
}

// Mean absolute difference; shared by cycle and identity terms.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    tensor_fail("l1_loss: shape mismatch " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
  return mean(abs(sub(a, b)));
}

template <typename T>
Tensor<T> cycle_loss(const Tensor<T>& regenerated, const Tensor<T>& original) {
  return l1_loss(regenerated, original);
}

template <typename T>
Tensor<T> identity_loss(const Tensor<T>& same_domain_output,
                        const Tensor<T>& input) {
  return l1_loss(same_domain_output, input);
}

// total_G = adv_G_L + adv_G_H + l1*(cycle_L + cycle_H) + l2*(id_L + id_H),
// assembled on the tape so one backward covers every term.
template <typename T>
Tensor<T> combine_generator_loss(const Tensor<T>& adv_g_l,
                                 const Tensor<T>& adv_g_h,
                                 const Tensor<T>& cyc_l,
                                 const Tensor<T>& cyc_h, const Tensor<T>& id_l,
                                 const Tensor<T>& id_h, const LossWeights& w) {
  Tensor<T> total = add(adv_g_l, adv_g_h);
  total = add(total, scale(add(cyc_l, cyc_h), T(w.lambda_cycle)));
  return add(total, scale(add(id_l, id_h), T(w.lambda_identity)));
}

// Scalar-side report assembly; validates the weights.
inline LossReport total_losses(double adv_d_l, double adv_d_h, double adv_g_l,
                               double adv_g_h, double cycle_l, double cycle_h,
                               double id_l, double id_h,
                               const LossWeights& w) {
  if (w.lambda_cycle < 0 || w.lambda_identity < 0 ||
      !std::isfinite(w.lambda_cycle) || !std::isfinite(w.lambda_identity))
    tensor_fail("loss weights must be finite and nonnegative");
  LossReport r;
  r.adv_d_l = adv_d_l;
  r.adv_d_h = adv_d_h;
  r.adv_g_l = adv_g_l;
  r.adv_g_h = adv_g_h;
  r.cycle_l = cycle_l;
  r.cycle_h = cycle_h;
  r.id_l = id_l;
  r.id_h = id_h;
  r.total_g = adv_g_l + adv_g_h + w.lambda_cycle * (cycle_l + cycle_h) +
              w.lambda_identity * (id_l + id_h);
  r.total_d = adv_d_l + adv_d_h;
  return r;
}

}  // namespace rgan

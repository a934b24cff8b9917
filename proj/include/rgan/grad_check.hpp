#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rgan/tensor.hpp"

namespace rgan {

// Central-difference verification of reverse-mode gradients. Run at double
// precision; eps defaults to 1e-5. The relative error for one element is
// |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).

struct GradCheckReport {
  double max_rel_err = 0.0;
  int worst_input = -1;
  int64_t worst_index = -1;
  double worst_ad = 0.0;
  double worst_fd = 0.0;
  int64_t elements_checked = 0;

  bool pass(double tol) const { return max_rel_err < tol; }
};

using ScalarFn =
    std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

inline GradCheckReport grad_check(const ScalarFn& f,
                                  std::vector<Tensor<double>> inputs,
                                  double eps = 1e-5) {
  for (auto& t : inputs) t.set_requires_grad(true);

  // Analytic gradients via one taped evaluation.
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    typename Tape<double>::Scope scope(tape);
    Tensor<double> loss = f(inputs);
    if (loss.numel() != 1)
      tensor_fail("grad_check: function must be scalar-valued");
    tape.backward(loss);
    for (auto& t : inputs) {
      std::vector<double> g(size_t(t.numel()), 0.0);
      for (int64_t i = 0; i < t.numel(); ++i) g[size_t(i)] = t.grad_at(i);
      analytic.push_back(std::move(g));
      t.zero_grad();
    }
  }

  GradCheckReport report;
  for (size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double>& t = inputs[k];
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + eps;
      const double fp = f(inputs).item();
      t.data()[i] = saved - eps;
      const double fm = f(inputs).item();
      t.data()[i] = saved;

      const double fd = (fp - fm) / (2.0 * eps);
      const double ad = analytic[k][size_t(i)];
      const double denom = std::max({std::abs(ad), std::abs(fd), 1e-8});
      const double rel = std::abs(ad - fd) / denom;
      ++report.elements_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_input = int(k);
        report.worst_index = i;
        report.worst_ad = ad;
        report.worst_fd = fd;
      }
    }
  }
  return report;
}

}  // namespace rgan

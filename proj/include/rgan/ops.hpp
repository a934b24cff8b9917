#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rgan/tensor.hpp"

namespace rgan {

// Differentiable primitives over Tensor<T>. Each op computes its value
// eagerly and, when a tape is active and an input wants gradients, records a
// backward rule. Binary elementwise ops accept equal shapes or a scalar
// (1-element) operand on either side; no general broadcasting.

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<EMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const EMat<T>>;

namespace detail {

template <typename T, typename DF>
Tensor<T> map_unary(const Tensor<T>& x, T (*fwd)(T), DF df, const char* name) {
  Tensor<T> out(x.shape());
  const T* xs = x.data();
  T* os = out.data();
  const int64_t n = x.numel();
#pragma omp parallel for schedule(static) if (n > 65536)
  for (int64_t i = 0; i < n; ++i) os[i] = fwd(xs[i]);
  debug_check_finite(out, name);
  if (track_grad<T>({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [xi, oi, df]() {
      std::vector<T>& gx = grad_buffer(*xi);
      const T* g = oi->grad.data();
      const T* xs = xi->data.data();
      const T* ys = oi->data.data();
      const int64_t n = static_cast<int64_t>(oi->data.size());
      for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * df(xs[i], ys[i]);
    });
  }
  return out;
}

enum class BinKind { kAdd, kSub, kMul };

template <typename T>
Tensor<T> binary_op(BinKind kind, const Tensor<T>& a, const Tensor<T>& b,
                    const char* name) {
  const bool a_scalar = a.numel() == 1;
  const bool b_scalar = b.numel() == 1;
  if (a.shape() != b.shape() && !a_scalar && !b_scalar)
    tensor_fail(std::string(name) + ": shape mismatch " + shape_str(a.shape()) +
                " vs " + shape_str(b.shape()));

  const Tensor<T>& big = (a_scalar && !b_scalar) ? b : a;
  Tensor<T> out(big.shape());
  const int64_t n = out.numel();
  const T* as = a.data();
  const T* bs = b.data();
  T* os = out.data();
  const int64_t astep = a_scalar ? 0 : 1;
  const int64_t bstep = b_scalar ? 0 : 1;
  switch (kind) {
    case BinKind::kAdd:
      for (int64_t i = 0; i < n; ++i) os[i] = as[i * astep] + bs[i * bstep];
      break;
    case BinKind::kSub:
      for (int64_t i = 0; i < n; ++i) os[i] = as[i * astep] - bs[i * bstep];
      break;
    case BinKind::kMul:
      for (int64_t i = 0; i < n; ++i) os[i] = as[i * astep] * bs[i * bstep];
      break;
  }
  debug_check_finite(out, name);

  if (track_grad<T>({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [ai, bi, oi, kind, astep, bstep]() {
      const T* g = oi->grad.data();
      const int64_t n = static_cast<int64_t>(oi->data.size());
      if (ai->requires_grad) {
        std::vector<T>& ga = grad_buffer(*ai);
        for (int64_t i = 0; i < n; ++i) {
          T v = (kind == BinKind::kMul) ? g[i] * bi->data[i * bstep] : g[i];
          ga[i * astep] += v;
        }
      }
      if (bi->requires_grad) {
        std::vector<T>& gb = grad_buffer(*bi);
        for (int64_t i = 0; i < n; ++i) {
          T v;
          switch (kind) {
            case BinKind::kAdd: v = g[i]; break;
            case BinKind::kSub: v = -g[i]; break;
            case BinKind::kMul: v = g[i] * ai->data[i * astep]; break;
          }
          gb[i * bstep] += v;
        }
      }
    });
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(detail::BinKind::kAdd, a, b, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(detail::BinKind::kSub, a, b, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(detail::BinKind::kMul, a, b, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  Tensor<T> out(x.shape());
  const T* xs = x.data();
  T* os = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) os[i] = c * xs[i];
  if (track_grad<T>({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [xi, oi, c]() {
      std::vector<T>& gx = grad_buffer(*xi);
      const T* g = oi->grad.data();
      const int64_t n = static_cast<int64_t>(oi->data.size());
      for (int64_t i = 0; i < n; ++i) gx[i] += c * g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return scale(x, T(-1));
}

inline constexpr double kLogFloor = 1e-12;

// Natural log with the input clamped to >= 1e-12.
template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::map_unary<T>(
      x, [](T v) { return std::log(std::max(v, T(kLogFloor))); },
      [](T v, T) {
        return v >= T(kLogFloor) ? T(1) / v : T(0);
      },
      "log");
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::map_unary<T>(
      x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; }, "tanh");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::map_unary<T>(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); }, "sigmoid");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::map_unary<T>(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); }, "relu");
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2)) {
  Tensor<T> out(x.shape());
  const T* xs = x.data();
  T* os = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) os[i] = xs[i] > T(0) ? xs[i] : slope * xs[i];
  if (track_grad<T>({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [xi, oi, slope]() {
      std::vector<T>& gx = grad_buffer(*xi);
      const T* g = oi->grad.data();
      const T* xs = xi->data.data();
      const int64_t n = static_cast<int64_t>(oi->data.size());
      for (int64_t i = 0; i < n; ++i)
        gx[i] += g[i] * (xs[i] > T(0) ? T(1) : slope);
    });
  }
  return out;
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::map_unary<T>(
      x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); },
      "abs");
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  Tensor<T> out(x.shape());
  const T* xs = x.data();
  T* os = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) os[i] = std::min(std::max(xs[i], lo), hi);
  if (track_grad<T>({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [xi, oi, lo, hi]() {
      std::vector<T>& gx = grad_buffer(*xi);
      const T* g = oi->grad.data();
      const T* xs = xi->data.data();
      const int64_t n = static_cast<int64_t>(oi->data.size());
      for (int64_t i = 0; i < n; ++i)
        if (xs[i] >= lo && xs[i] <= hi) gx[i] += g[i];
    });
  }
  return out;
}

// Exact GELU, x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return detail::map_unary<T>(
      x,
      [](T v) {
        return T(0.5) * v * (T(1) + T(std::erf(double(v) * inv_sqrt2)));
      },
      [](T v, T) {
        double cdf = 0.5 * (1.0 + std::erf(double(v) * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * double(v) * double(v));
        return T(cdf + double(v) * pdf);
      },
      "gelu");
}

// ---------------------------------------------------------------------------
// Matrix multiply and linear
// ---------------------------------------------------------------------------

// 2D [m,k]x[k,n]; or batched with a leading batch dimension on the left
// operand ([B,m,k]x[B,k,n] or [B,m,k]x[k,n]).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if ((as.size() != 2 && as.size() != 3) ||
      (bs.size() != 2 && bs.size() != 3))
    tensor_fail("matmul: operands must be 2D or 3D, got " + shape_str(as) +
                " and " + shape_str(bs));
  const int batch = as.size() == 3 ? as[0] : 1;
  const int m = as[as.size() - 2], k = as[as.size() - 1];
  const int bk = bs[bs.size() - 2], n = bs[bs.size() - 1];
  if (k != bk)
    tensor_fail("matmul: inner dimensions disagree, " + shape_str(as) +
                " vs " + shape_str(bs));
  const bool b_batched = bs.size() == 3;
  if (b_batched && (as.size() != 3 || bs[0] != batch))
    tensor_fail("matmul: batch dimensions disagree, " + shape_str(as) +
                " vs " + shape_str(bs));

  Shape oshape = as.size() == 3 ? Shape{batch, m, n} : Shape{m, n};
  Tensor<T> out(oshape);
  const int64_t a_bs = int64_t(m) * k, b_bs = b_batched ? int64_t(k) * n : 0,
                o_bs = int64_t(m) * n;
#pragma omp parallel for schedule(static) if (batch > 1)
  for (int bi = 0; bi < batch; ++bi) {
    ConstMatMap<T> A(a.data() + bi * a_bs, m, k);
    ConstMatMap<T> B(b.data() + bi * b_bs, k, n);
    MatMap<T> C(out.data() + bi * o_bs, m, n);
    C.noalias() = A * B;
  }
  debug_check_finite(out, "matmul");

  if (track_grad<T>({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl();
    auto bim = b.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(
        oi, [ai, bim, oi, batch, m, k, n, a_bs, b_bs, o_bs]() {
          if (ai->requires_grad) {
            std::vector<T>& ga = grad_buffer(*ai);
#pragma omp parallel for schedule(static) if (batch > 1)
            for (int bi = 0; bi < batch; ++bi) {
              ConstMatMap<T> G(oi->grad.data() + bi * o_bs, m, n);
              ConstMatMap<T> B(bim->data.data() + bi * b_bs, k, n);
              MatMap<T> GA(ga.data() + bi * a_bs, m, k);
              GA.noalias() += G * B.transpose();
            }
          }
          if (bim->requires_grad) {
            std::vector<T>& gb = grad_buffer(*bim);
            // When b is shared across the batch its gradient sums over
            // batches; keep that loop sequential for determinism.
            const bool b_batched = b_bs != 0;
            for (int bi = 0; bi < batch; ++bi) {
              ConstMatMap<T> G(oi->grad.data() + bi * o_bs, m, n);
              ConstMatMap<T> A(ai->data.data() + bi * a_bs, m, k);
              MatMap<T> GB(gb.data() + (b_batched ? bi * b_bs : 0), k, n);
              GB.noalias() += A.transpose() * G;
            }
          }
        });
  }
  return out;
}

// y = x.W + b with x [rows,in], W [in,out], b [out] broadcast over rows.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.ndim() != 2 || w.ndim() != 2)
    tensor_fail("linear: expected 2D x and w, got " + shape_str(x.shape()) +
                " and " + shape_str(w.shape()));
  const int rows = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in || b.numel() != out_dim)
    tensor_fail("linear: dimension mismatch, x " + shape_str(x.shape()) +
                ", w " + shape_str(w.shape()) + ", b " + shape_str(b.shape()));

  Tensor<T> out(Shape{rows, out_dim});
  {
    ConstMatMap<T> X(x.data(), rows, in);
    ConstMatMap<T> W(w.data(), in, out_dim);
    MatMap<T> Y(out.data(), rows, out_dim);
    Y.noalias() = X * W;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < out_dim; ++c) out.data()[r * out_dim + c] += b.data()[c];
  }
  debug_check_finite(out, "linear");

  if (track_grad<T>({&x, &w, &b})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = b.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [xi, wi, bi, oi, rows, in, out_dim]() {
      ConstMatMap<T> G(oi->grad.data(), rows, out_dim);
      if (xi->requires_grad) {
        std::vector<T>& gx = grad_buffer(*xi);
        MatMap<T> GX(gx.data(), rows, in);
        ConstMatMap<T> W(wi->data.data(), in, out_dim);
        GX.noalias() += G * W.transpose();
      }
      if (wi->requires_grad) {
        std::vector<T>& gw = grad_buffer(*wi);
        MatMap<T> GW(gw.data(), in, out_dim);
        ConstMatMap<T> X(xi->data.data(), rows, in);
        GW.noalias() += X.transpose() * G;
      }
      if (bi->requires_grad) {
        std::vector<T>& gb = grad_buffer(*bi);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < out_dim; ++c)
            gb[c] += oi->grad[size_t(r) * out_dim + c];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolutions (im2col + GEMM)
// ---------------------------------------------------------------------------

namespace detail {

// col is (C*k*k) x (oh*ow), row r = (c*k + ky)*k + kx, column = oy*ow + ox,
// value = src[c][oy*stride - pad + ky][ox*stride - pad + kx] (0 outside).
template <typename T>
void im2col(const T* src, int C, int H, int W, int k, int stride, int pad,
            int oh, int ow, T* col) {
  const int rows = C * k * k;
#pragma omp parallel for schedule(static) if (rows * oh * ow > 16384)
  for (int r = 0; r < rows; ++r) {
    const int c = r / (k * k);
    const int ky = (r / k) % k;
    const int kx = r % k;
    const T* plane = src + int64_t(c) * H * W;
    T* dst = col + int64_t(r) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const int iy = oy * stride - pad + ky;
      if (iy < 0 || iy >= H) {
        std::fill(dst, dst + ow, T(0));
        dst += ow;
        continue;
      }
      for (int ox = 0; ox < ow; ++ox) {
        const int ix = ox * stride - pad + kx;
        *dst++ = (ix >= 0 && ix < W) ? plane[int64_t(iy) * W + ix] : T(0);
      }
    }
  }
}

// Scatter-add inverse of im2col: dst[c][oy*stride-pad+ky][...] += col value.
// Parallel over channels only; all collisions stay within one channel.
template <typename T>
void col2im_add(const T* col, int C, int H, int W, int k, int stride, int pad,
                int oh, int ow, T* dst) {
#pragma omp parallel for schedule(static) if (C > 1 && int64_t(C) * oh * ow * k * k > 16384)
  for (int c = 0; c < C; ++c) {
    T* plane = dst + int64_t(c) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* srcrow = col + int64_t((c * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) plane[int64_t(iy) * W + ix] += srcrow[int64_t(oy) * ow + ox];
          }
        }
      }
    }
  }
}

inline int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

// x [Cin,H,W], w [Cout,Cin,k,k], b [Cout] or undefined; zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int pad) {
  if (x.ndim() != 3 || w.ndim() != 4)
    tensor_fail("conv2d: expected x [C,H,W] and w [Co,Ci,k,k], got " +
                shape_str(x.shape()) + " and " + shape_str(w.shape()));
  const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int co = w.dim(0), k = w.dim(2);
  const bool has_bias = b.defined();
  if (w.dim(1) != ci || w.dim(3) != k)
    tensor_fail("conv2d: weight " + shape_str(w.shape()) +
                " incompatible with input " + shape_str(x.shape()));
  if (has_bias && b.numel() != co)
    tensor_fail("conv2d: bias " + shape_str(b.shape()) + " expected (" +
                std::to_string(co) + ")");
  if (h + 2 * pad < k || wd + 2 * pad < k)
    tensor_fail("conv2d: kernel " + std::to_string(k) +
                " larger than padded input " + shape_str(x.shape()) +
                " with pad " + std::to_string(pad));
  const int oh = detail::conv_out_size(h, k, stride, pad);
  const int ow = detail::conv_out_size(wd, k, stride, pad);

  std::vector<T> col(size_t(ci) * k * k * oh * ow);
  detail::im2col(x.data(), ci, h, wd, k, stride, pad, oh, ow, col.data());

  Tensor<T> out(Shape{co, oh, ow});
  {
    ConstMatMap<T> W(w.data(), co, ci * k * k);
    ConstMatMap<T> Col(col.data(), ci * k * k, oh * ow);
    MatMap<T> O(out.data(), co, oh * ow);
    O.noalias() = W * Col;
    if (has_bias) {
      for (int c = 0; c < co; ++c) {
        T* row = out.data() + int64_t(c) * oh * ow;
        const T bias = b.data()[c];
        for (int i = 0; i < oh * ow; ++i) row[i] += bias;
      }
    }
  }
  debug_check_finite(out, "conv2d");

  const bool track = has_bias ? track_grad<T>({&x, &w, &b})
                              : track_grad<T>({&x, &w});
  if (track) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = has_bias ? b.impl() : nullptr;
    auto oi = out.impl();
    Tape<T>::active()->record(
        oi, [xi, wi, bi, oi, ci, h, wd, co, k, stride, pad, oh, ow]() {
          ConstMatMap<T> G(oi->grad.data(), co, oh * ow);
          const int kk = ci * k * k;
          if (wi->requires_grad || xi->requires_grad) {
            std::vector<T> col(size_t(kk) * oh * ow);
            detail::im2col(xi->data.data(), ci, h, wd, k, stride, pad, oh, ow,
                           col.data());
            if (wi->requires_grad) {
              std::vector<T>& gw = grad_buffer(*wi);
              MatMap<T> GW(gw.data(), co, kk);
              ConstMatMap<T> Col(col.data(), kk, oh * ow);
              GW.noalias() += G * Col.transpose();
            }
            if (xi->requires_grad) {
              std::vector<T> dcol(size_t(kk) * oh * ow);
              MatMap<T> DCol(dcol.data(), kk, oh * ow);
              ConstMatMap<T> W(wi->data.data(), co, kk);
              DCol.noalias() = W.transpose() * G;
              std::vector<T>& gx = grad_buffer(*xi);
              detail::col2im_add(dcol.data(), ci, h, wd, k, stride, pad, oh,
                                 ow, gx.data());
            }
          }
          if (bi && bi->requires_grad) {
            std::vector<T>& gb = grad_buffer(*bi);
            for (int c = 0; c < co; ++c) {
              T s = 0;
              const T* row = oi->grad.data() + int64_t(c) * oh * ow;
              for (int i = 0; i < oh * ow; ++i) s += row[i];
              gb[c] += s;
            }
          }
        });
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad) {
  return conv2d(x, w, Tensor<T>(), stride, pad);
}

// x [Cin,H,W], w [Cin,Cout,k,k], b [Cout]. Output size
// (H-1)*stride - 2*pad + k + out_pad; out_pad must be < stride.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& b, int stride, int pad,
                           int out_pad) {
  if (x.ndim() != 3 || w.ndim() != 4)
    tensor_fail("conv_transpose2d: expected x [C,H,W] and w [Ci,Co,k,k], got " +
                shape_str(x.shape()) + " and " + shape_str(w.shape()));
  if (out_pad >= stride)
    tensor_fail("conv_transpose2d: output padding " + std::to_string(out_pad) +
                " must be smaller than stride " + std::to_string(stride));
  const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int co = w.dim(1), k = w.dim(2);
  const bool has_bias = b.defined();
  if (w.dim(0) != ci || w.dim(3) != k)
    tensor_fail("conv_transpose2d: weight " + shape_str(w.shape()) +
                " incompatible with input " + shape_str(x.shape()));
  if (has_bias && b.numel() != co)
    tensor_fail("conv_transpose2d: bias " + shape_str(b.shape()) +
                " expected (" + std::to_string(co) + ")");
  const int oh = (h - 1) * stride - 2 * pad + k + out_pad;
  const int ow = (wd - 1) * stride - 2 * pad + k + out_pad;
  if (oh < 1 || ow < 1)
    tensor_fail("conv_transpose2d: non-positive output size for input " +
                shape_str(x.shape()));

  const int kk = co * k * k;
  std::vector<T> col(size_t(kk) * h * wd);
  {
    ConstMatMap<T> W(w.data(), ci, kk);
    ConstMatMap<T> X(x.data(), ci, h * wd);
    MatMap<T> Col(col.data(), kk, h * wd);
    Col.noalias() = W.transpose() * X;
  }
  Tensor<T> out(Shape{co, oh, ow});
  if (has_bias) {
    for (int c = 0; c < co; ++c) {
      T* plane = out.data() + int64_t(c) * oh * ow;
      std::fill(plane, plane + int64_t(oh) * ow, b.data()[c]);
    }
  }
  detail::col2im_add(col.data(), co, oh, ow, k, stride, pad, h, wd,
                     out.data());
  debug_check_finite(out, "conv_transpose2d");

  const bool track = has_bias ? track_grad<T>({&x, &w, &b})
                              : track_grad<T>({&x, &w});
  if (track) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = has_bias ? b.impl() : nullptr;
    auto oi = out.impl();
    Tape<T>::active()->record(
        oi, [xi, wi, bi, oi, ci, h, wd, co, k, stride, pad, oh, ow]() {
          const int kk = co * k * k;
          if (xi->requires_grad || wi->requires_grad) {
            // tcol[(co,ky,kx)][(iy,ix)] = dOut[co][iy*s-p+ky][ix*s-p+kx]
            std::vector<T> tcol(size_t(kk) * h * wd);
            detail::im2col(oi->grad.data(), co, oh, ow, k, stride, pad, h, wd,
                           tcol.data());
            ConstMatMap<T> TC(tcol.data(), kk, h * wd);
            if (xi->requires_grad) {
              std::vector<T>& gx = grad_buffer(*xi);
              MatMap<T> GX(gx.data(), ci, h * wd);
              ConstMatMap<T> W(wi->data.data(), ci, kk);
              GX.noalias() += W * TC;
            }
            if (wi->requires_grad) {
              std::vector<T>& gw = grad_buffer(*wi);
              MatMap<T> GW(gw.data(), ci, kk);
              ConstMatMap<T> X(xi->data.data(), ci, h * wd);
              GW.noalias() += X * TC.transpose();
            }
          }
          if (bi && bi->requires_grad) {
            std::vector<T>& gb = grad_buffer(*bi);
            for (int c = 0; c < co; ++c) {
              T s = 0;
              const T* row = oi->grad.data() + int64_t(c) * oh * ow;
              for (int64_t i = 0; i < int64_t(oh) * ow; ++i) s += row[i];
              gb[c] += s;
            }
          }
        });
  }
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, int stride,
                           int pad, int out_pad) {
  return conv_transpose2d(x, w, Tensor<T>(), stride, pad, out_pad);
}

// ---------------------------------------------------------------------------
// Reductions and shape
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0;
  const T* xs = x.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) acc += double(xs[i]);
  Tensor<T> out = Tensor<T>::scalar(T(acc));
  if (track_grad<T>({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [xi, oi]() {
      std::vector<T>& gx = grad_buffer(*xi);
      const T g = oi->grad[0];
      for (T& v : gx) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  double acc = 0;
  const T* xs = x.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) acc += double(xs[i]);
  Tensor<T> out = Tensor<T>::scalar(T(acc / double(n)));
  if (track_grad<T>({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [xi, oi, n]() {
      std::vector<T>& gx = grad_buffer(*xi);
      const T g = oi->grad[0] / T(n);
      for (T& v : gx) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel())
    tensor_fail("reshape: element count mismatch, " + shape_str(x.shape()) +
                " -> " + shape_str(new_shape));
  Tensor<T> out(std::move(new_shape));
  out.vec() = x.vec();
  if (track_grad<T>({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(
        oi, [xi, oi]() { accumulate_grad(*xi, oi->grad.data()); });
  }
  return out;
}

// [C,H,W] -> [C,H*W].
template <typename T>
Tensor<T> flatten_spatial(const Tensor<T>& x) {
  if (x.ndim() != 3)
    tensor_fail("flatten_spatial: expected [C,H,W], got " +
                shape_str(x.shape()));
  return reshape(x, Shape{x.dim(0), x.dim(1) * x.dim(2)});
}

template <typename T>
Tensor<T> transpose_last_two(const Tensor<T>& x) {
  if (x.ndim() < 2)
    tensor_fail("transpose_last_two: need at least 2 dims, got " +
                shape_str(x.shape()));
  Shape os = x.shape();
  const int r = os[os.size() - 2], c = os[os.size() - 1];
  std::swap(os[os.size() - 2], os[os.size() - 1]);
  const int64_t batch = x.numel() / (int64_t(r) * c);
  Tensor<T> out(os);
  const T* xs = x.data();
  T* od = out.data();
  for (int64_t b = 0; b < batch; ++b) {
    const T* src = xs + b * r * c;
    T* dst = od + b * r * c;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) dst[int64_t(j) * r + i] = src[int64_t(i) * c + j];
  }
  if (track_grad<T>({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [xi, oi, batch, r, c]() {
      std::vector<T>& gx = grad_buffer(*xi);
      const T* g = oi->grad.data();
      for (int64_t b = 0; b < batch; ++b) {
        const T* gsrc = g + b * r * c;
        T* gdst = gx.data() + b * r * c;
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            gdst[int64_t(i) * c + j] += gsrc[int64_t(j) * r + i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  const int d = x.dim(x.ndim() - 1);
  const int64_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  const T* xs = x.data();
  T* os = out.data();
#pragma omp parallel for schedule(static) if (rows * d > 65536)
  for (int64_t r = 0; r < rows; ++r) {
    const T* src = xs + r * d;
    T* dst = os + r * d;
    T mx = src[0];
    for (int i = 1; i < d; ++i) mx = std::max(mx, src[i]);
    double s = 0;
    for (int i = 0; i < d; ++i) {
      dst[i] = std::exp(src[i] - mx);
      s += double(dst[i]);
    }
    const T inv = T(1.0 / s);
    for (int i = 0; i < d; ++i) dst[i] *= inv;
  }
  debug_check_finite(out, "softmax");
  if (track_grad<T>({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [xi, oi, rows, d]() {
      std::vector<T>& gx = grad_buffer(*xi);
      const T* g = oi->grad.data();
      const T* y = oi->data.data();
#pragma omp parallel for schedule(static) if (rows * d > 65536)
      for (int64_t r = 0; r < rows; ++r) {
        const T* gr = g + r * d;
        const T* yr = y + r * d;
        T* gxr = gx.data() + r * d;
        double dot = 0;
        for (int i = 0; i < d; ++i) dot += double(gr[i]) * double(yr[i]);
        for (int i = 0; i < d; ++i) gxr[i] += yr[i] * (gr[i] - T(dot));
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) tensor_fail("concat: no inputs");
  const int nd = parts[0].ndim();
  if (axis < 0 || axis >= nd) tensor_fail("concat: bad axis");
  Shape os = parts[0].shape();
  int64_t axis_total = 0;
  for (const Tensor<T>& p : parts) {
    if (p.ndim() != nd) tensor_fail("concat: rank mismatch");
    for (int i = 0; i < nd; ++i)
      if (i != axis && p.dim(i) != os[size_t(i)])
        tensor_fail("concat: shape mismatch " + shape_str(p.shape()) +
                    " vs " + shape_str(parts[0].shape()));
    axis_total += p.dim(axis);
  }
  os[size_t(axis)] = int(axis_total);
  Tensor<T> out(os);

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= os[size_t(i)];
  for (int i = axis + 1; i < nd; ++i) inner *= os[size_t(i)];

  int64_t offset = 0;  // running offset along axis, in elements of inner
  for (const Tensor<T>& p : parts) {
    const int64_t pa = p.dim(axis) * inner;
    for (int64_t o = 0; o < outer; ++o)
      std::copy(p.data() + o * pa, p.data() + (o + 1) * pa,
                out.data() + o * axis_total * inner + offset);
    offset += pa;
  }

  bool any_grad = false;
  for (const Tensor<T>& p : parts)
    if (p.requires_grad()) any_grad = true;
  if (Tape<T>::active() && any_grad) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    impls.reserve(parts.size());
    for (const Tensor<T>& p : parts) impls.push_back(p.impl());
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [impls, oi, outer, inner, axis_total, axis]() {
      int64_t offset = 0;
      for (const auto& pi : impls) {
        const int64_t pa = pi->shape[size_t(axis)] * inner;
        if (pi->requires_grad) {
          std::vector<T>& gp = grad_buffer(*pi);
          for (int64_t o = 0; o < outer; ++o) {
            const T* g = oi->grad.data() + o * axis_total * inner + offset;
            T* dst = gp.data() + o * pa;
            for (int64_t i = 0; i < pa; ++i) dst[i] += g[i];
          }
        }
        offset += pa;
      }
    });
  }
  return out;
}

// [T,D] -> [h,T,D/h]; tokens keep their order, feature dim splits by head.
template <typename T>
Tensor<T> heads_split(const Tensor<T>& x, int heads) {
  if (x.ndim() != 2) tensor_fail("heads_split: expected [T,D]");
  const int t = x.dim(0), d = x.dim(1);
  if (d % heads != 0)
    tensor_fail("heads_split: dim " + std::to_string(d) +
                " not divisible by heads " + std::to_string(heads));
  const int dh = d / heads;
  Tensor<T> out(Shape{heads, t, dh});
  const T* xs = x.data();
  T* os = out.data();
  for (int hd = 0; hd < heads; ++hd)
    for (int i = 0; i < t; ++i)
      std::copy(xs + int64_t(i) * d + hd * dh, xs + int64_t(i) * d + (hd + 1) * dh,
                os + (int64_t(hd) * t + i) * dh);
  if (track_grad<T>({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [xi, oi, heads, t, d, dh]() {
      std::vector<T>& gx = grad_buffer(*xi);
      const T* g = oi->grad.data();
      for (int hd = 0; hd < heads; ++hd)
        for (int i = 0; i < t; ++i) {
          const T* src = g + (int64_t(hd) * t + i) * dh;
          T* dst = gx.data() + int64_t(i) * d + hd * dh;
          for (int j = 0; j < dh; ++j) dst[j] += src[j];
        }
    });
  }
  return out;
}

// [h,T,dh] -> [T,h*dh]; exact inverse of heads_split.
template <typename T>
Tensor<T> heads_merge(const Tensor<T>& x) {
  if (x.ndim() != 3) tensor_fail("heads_merge: expected [h,T,dh]");
  const int heads = x.dim(0), t = x.dim(1), dh = x.dim(2);
  const int d = heads * dh;
  Tensor<T> out(Shape{t, d});
  const T* xs = x.data();
  T* os = out.data();
  for (int hd = 0; hd < heads; ++hd)
    for (int i = 0; i < t; ++i)
      std::copy(xs + (int64_t(hd) * t + i) * dh, xs + (int64_t(hd) * t + i + 1) * dh,
                os + int64_t(i) * d + hd * dh);
  if (track_grad<T>({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [xi, oi, heads, t, d, dh]() {
      std::vector<T>& gx = grad_buffer(*xi);
      const T* g = oi->grad.data();
      for (int hd = 0; hd < heads; ++hd)
        for (int i = 0; i < t; ++i) {
          const T* src = g + int64_t(i) * d + hd * dh;
          T* dst = gx.data() + (int64_t(hd) * t + i) * dh;
          for (int j = 0; j < dh; ++j) dst[j] += src[j];
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// Per-channel normalization over the spatial grid, no affine parameters.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps = T(1e-5)) {
  if (x.ndim() != 3)
    tensor_fail("instance_norm: expected [C,H,W], got " + shape_str(x.shape()));
  const int c = x.dim(0);
  const int64_t hw = int64_t(x.dim(1)) * x.dim(2);
  Tensor<T> out(x.shape());
  std::vector<T> istd(static_cast<size_t>(c));
  const T* xs = x.data();
  T* os = out.data();
#pragma omp parallel for schedule(static) if (int64_t(c) * hw > 65536)
  for (int ch = 0; ch < c; ++ch) {
    const T* src = xs + ch * hw;
    T* dst = os + ch * hw;
    double m = 0;
    for (int64_t i = 0; i < hw; ++i) m += double(src[i]);
    m /= double(hw);
    double v = 0;
    for (int64_t i = 0; i < hw; ++i) {
      const double d = double(src[i]) - m;
      v += d * d;
    }
    v /= double(hw);
    const T is = T(1.0 / std::sqrt(v + double(eps)));
    istd[size_t(ch)] = is;
    const T mu = T(m);
    for (int64_t i = 0; i < hw; ++i) dst[i] = (src[i] - mu) * is;
  }
  debug_check_finite(out, "instance_norm");

  if (track_grad<T>({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [xi, oi, c, hw, istd = std::move(istd)]() {
      std::vector<T>& gx = grad_buffer(*xi);
      const T* g = oi->grad.data();
      const T* y = oi->data.data();  // y is exactly x-hat
#pragma omp parallel for schedule(static) if (int64_t(c) * hw > 65536)
      for (int ch = 0; ch < c; ++ch) {
        const T* gr = g + ch * hw;
        const T* yr = y + ch * hw;
        T* gxr = gx.data() + ch * hw;
        double m1 = 0, m2 = 0;
        for (int64_t i = 0; i < hw; ++i) {
          m1 += double(gr[i]);
          m2 += double(gr[i]) * double(yr[i]);
        }
        m1 /= double(hw);
        m2 /= double(hw);
        const T is = istd[size_t(ch)];
        for (int64_t i = 0; i < hw; ++i)
          gxr[i] += is * (gr[i] - T(m1) - yr[i] * T(m2));
      }
    });
  }
  return out;
}

// Per-token normalization over the feature dim with learned affine.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-5)) {
  if (x.ndim() != 2)
    tensor_fail("layer_norm: expected [T,D], got " + shape_str(x.shape()));
  const int t = x.dim(0), d = x.dim(1);
  if (gamma.numel() != d || beta.numel() != d)
    tensor_fail("layer_norm: affine shape mismatch for D=" + std::to_string(d));

  Tensor<T> out(x.shape());
  std::vector<T> xhat(size_t(t) * d);
  std::vector<T> istd(static_cast<size_t>(t));
  const T* xs = x.data();
  const T* gs = gamma.data();
  const T* bs = beta.data();
  T* os = out.data();
  for (int r = 0; r < t; ++r) {
    const T* src = xs + int64_t(r) * d;
    double m = 0;
    for (int i = 0; i < d; ++i) m += double(src[i]);
    m /= d;
    double v = 0;
    for (int i = 0; i < d; ++i) {
      const double dd = double(src[i]) - m;
      v += dd * dd;
    }
    v /= d;
    const T is = T(1.0 / std::sqrt(v + double(eps)));
    istd[size_t(r)] = is;
    T* xh = xhat.data() + int64_t(r) * d;
    T* dst = os + int64_t(r) * d;
    for (int i = 0; i < d; ++i) {
      xh[i] = (src[i] - T(m)) * is;
      dst[i] = gs[i] * xh[i] + bs[i];
    }
  }
  debug_check_finite(out, "layer_norm");

  if (track_grad<T>({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto gi = gamma.impl();
    auto bi = beta.impl();
    auto oi = out.impl();
    Tape<T>::active()->record(oi, [xi, gi, bi, oi, t, d,
                                   xhat = std::move(xhat),
                                   istd = std::move(istd)]() {
      const T* g = oi->grad.data();
      if (bi->requires_grad) {
        std::vector<T>& gb = grad_buffer(*bi);
        for (int r = 0; r < t; ++r)
          for (int i = 0; i < d; ++i) gb[i] += g[int64_t(r) * d + i];
      }
      if (gi->requires_grad) {
        std::vector<T>& gg = grad_buffer(*gi);
        for (int r = 0; r < t; ++r)
          for (int i = 0; i < d; ++i)
            gg[i] += g[int64_t(r) * d + i] * xhat[int64_t(r) * d + i];
      }
      if (xi->requires_grad) {
        std::vector<T>& gx = grad_buffer(*xi);
        for (int r = 0; r < t; ++r) {
          const T* gr = g + int64_t(r) * d;
          const T* xh = xhat.data() + int64_t(r) * d;
          T* gxr = gx.data() + int64_t(r) * d;
          double m1 = 0, m2 = 0;
          for (int i = 0; i < d; ++i) {
            const double dxh = double(gr[i]) * double(gi->data[i]);
            m1 += dxh;
            m2 += dxh * double(xh[i]);
          }
          m1 /= d;
          m2 /= d;
          const T is = istd[size_t(r)];
          for (int i = 0; i < d; ++i) {
            const T dxh = gr[i] * gi->data[i];
            gxr[i] += is * (dxh - T(m1) - xh[i] * T(m2));
          }
        }
      }
    });
  }
  return out;
}

}  // namespace rgan

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "rgan/ops.hpp"
#include "rgan/rng.hpp"
#include "rgan/tensor.hpp"

namespace rgan {

// Stateful layers composed from autodiff primitives. Every parameter lives in
// the owning model's ParamStore under a unique hierarchical name, which is
// also its serialization key.

enum class Init {
  kConvNormal,     // Normal(0, 0.02), conv / transpose-conv weights
  kXavierUniform,  // U(-a, a), a = sqrt(6 / (fan_in + fan_out)), linear weights
  kPosNormal,      // Normal(0, 0.02), positional embedding
  kZero,           // biases, layer-norm beta
  kOne,            // layer-norm gamma
};

template <typename T>
struct Param {
  std::string name;
  Tensor<T> tensor;
  Init init;
};

template <typename T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, Shape shape, Init init) {
    if (!names_.insert(name).second)
      tensor_fail("duplicate parameter name: " + name);
    Tensor<T> t(std::move(shape), T(0), /*requires_grad=*/true);
    params_.push_back({name, t, init});
    return t;
  }

  // Deterministic initialization: every parameter gets its own stream derived
  // from (seed, parameter name) and is filled in flat row-major order, so the
  // result depends only on the seed and the parameter's name and shape.
  void initialize(uint64_t seed) {
    for (Param<T>& p : params_) {
      SplitMix64 rng = derive_stream(seed, p.name);
      T* d = p.tensor.data();
      const int64_t n = p.tensor.numel();
      switch (p.init) {
        case Init::kConvNormal:
        case Init::kPosNormal:
          for (int64_t i = 0; i < n; ++i) d[i] = T(rng.normal(0.0, 0.02));
          break;
        case Init::kXavierUniform: {
          const Shape& s = p.tensor.shape();
          const double fan_in = s[0], fan_out = s[s.size() - 1];
          const double a = std::sqrt(6.0 / (fan_in + fan_out));
          for (int64_t i = 0; i < n; ++i) d[i] = T(rng.uniform(-a, a));
          break;
        }
        case Init::kZero:
          for (int64_t i = 0; i < n; ++i) d[i] = T(0);
          break;
        case Init::kOne:
          for (int64_t i = 0; i < n; ++i) d[i] = T(1);
          break;
      }
    }
  }

  const std::vector<Param<T>>& entries() const { return params_; }
  std::vector<Param<T>>& entries() { return params_; }

  int64_t total_count() const {
    int64_t n = 0;
    for (const Param<T>& p : params_) n += p.tensor.numel();
    return n;
  }

  void zero_grads() {
    for (Param<T>& p : params_) p.tensor.zero_grad();
  }

 private:
  std::vector<Param<T>> params_;
  std::unordered_set<std::string> names_;
};

template <typename T>
struct LinearLayer {
  Tensor<T> w, b;

  LinearLayer() = default;
  LinearLayer(ParamStore<T>& ps, const std::string& prefix, int in, int out,
              bool bias = true) {
    w = ps.add(prefix + ".weight", Shape{in, out}, Init::kXavierUniform);
    if (bias) b = ps.add(prefix + ".bias", Shape{out}, Init::kZero);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return b.defined() ? linear(x, w, b) : matmul(x, w);
  }
};

// A bias is omitted when instance norm directly follows the convolution: the
// norm subtracts the per-channel mean, so a channel-constant shift cancels
// exactly and the bias would carry an identically zero gradient.
template <typename T>
struct Conv2dLayer {
  Tensor<T> w, b;
  int stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(ParamStore<T>& ps, const std::string& prefix, int cin, int cout,
              int k, int stride_, int pad_, bool bias = true)
      : stride(stride_), pad(pad_) {
    w = ps.add(prefix + ".weight", Shape{cout, cin, k, k}, Init::kConvNormal);
    if (bias) b = ps.add(prefix + ".bias", Shape{cout}, Init::kZero);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv2d(x, w, b, stride, pad);
  }
};

template <typename T>
struct ConvTranspose2dLayer {
  Tensor<T> w, b;
  int stride = 1, pad = 0, out_pad = 0;

  ConvTranspose2dLayer() = default;
  ConvTranspose2dLayer(ParamStore<T>& ps, const std::string& prefix, int cin,
                       int cout, int k, int stride_, int pad_, int out_pad_,
                       bool bias = true)
      : stride(stride_), pad(pad_), out_pad(out_pad_) {
    w = ps.add(prefix + ".weight", Shape{cin, cout, k, k}, Init::kConvNormal);
    if (bias) b = ps.add(prefix + ".bias", Shape{cout}, Init::kZero);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv_transpose2d(x, w, b, stride, pad, out_pad);
  }
};

template <typename T>
struct LayerNormLayer {
  Tensor<T> gamma, beta;

  LayerNormLayer() = default;
  LayerNormLayer(ParamStore<T>& ps, const std::string& prefix, int dim) {
    gamma = ps.add(prefix + ".gamma", Shape{dim}, Init::kOne);
    beta = ps.add(prefix + ".beta", Shape{dim}, Init::kZero);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return layer_norm(x, gamma, beta);
  }
};

// Full bidirectional attention over tokens, no mask.
template <typename T>
struct MultiHeadAttention {
  LinearLayer<T> q, k, v, o;
  int heads = 1;
  int head_dim = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<T>& ps, const std::string& prefix, int dim,
                     int heads_)
      : heads(heads_) {
    if (dim % heads != 0)
      tensor_fail("attention: dim " + std::to_string(dim) +
                  " not divisible by heads " + std::to_string(heads));
    head_dim = dim / heads;
    q = LinearLayer<T>(ps, prefix + ".q", dim, dim);
    // A key-projection bias shifts every score of a query row equally, which
    // softmax cancels; it would be a parameter with identically zero
    // gradient, so the key path has none.
    k = LinearLayer<T>(ps, prefix + ".k", dim, dim, /*bias=*/false);
    v = LinearLayer<T>(ps, prefix + ".v", dim, dim);
    o = LinearLayer<T>(ps, prefix + ".o", dim, dim);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    Tensor<T> qh = heads_split(q(x), heads);
    Tensor<T> kh = heads_split(k(x), heads);
    Tensor<T> vh = heads_split(v(x), heads);
    Tensor<T> att = matmul(qh, transpose_last_two(kh));
    att = scale(att, T(1.0 / std::sqrt(double(head_dim))));
    att = softmax_lastdim(att);
    return o(heads_merge(matmul(att, vh)));
  }

  // Attention weights only, for inspection/tests: [h,T,T].
  Tensor<T> attention_weights(const Tensor<T>& x) const {
    Tensor<T> qh = heads_split(q(x), heads);
    Tensor<T> kh = heads_split(k(x), heads);
    Tensor<T> att = matmul(qh, transpose_last_two(kh));
    att = scale(att, T(1.0 / std::sqrt(double(head_dim))));
    return softmax_lastdim(att);
  }
};

// Pre-norm residual block: x + MHA(LN(x)), then + MLP(LN(.)).
// MLP is linear(D -> 4D), GELU, linear(4D -> D).
template <typename T>
struct TransformerBlock {
  LayerNormLayer<T> ln1, ln2;
  MultiHeadAttention<T> attn;
  LinearLayer<T> fc1, fc2;

  TransformerBlock() = default;
  TransformerBlock(ParamStore<T>& ps, const std::string& prefix, int dim,
                   int heads) {
    ln1 = LayerNormLayer<T>(ps, prefix + ".ln1", dim);
    attn = MultiHeadAttention<T>(ps, prefix + ".attn", dim, heads);
    ln2 = LayerNormLayer<T>(ps, prefix + ".ln2", dim);
    fc1 = LinearLayer<T>(ps, prefix + ".mlp.fc1", dim, 4 * dim);
    fc2 = LinearLayer<T>(ps, prefix + ".mlp.fc2", 4 * dim, dim);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    Tensor<T> h = add(x, attn(ln1(x)));
    return add(h, fc2(gelu(fc1(ln2(h)))));
  }
};

}  // namespace rgan

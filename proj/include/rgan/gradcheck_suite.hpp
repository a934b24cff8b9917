#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rgan/grad_check.hpp"
#include "rgan/losses.hpp"
#include "rgan/models.hpp"
#include "rgan/rng.hpp"

namespace rgan {

// The full finite-difference verification suite: every differentiable
// primitive, every layer, and both full toy generators plus a reduced
// discriminator, each checked against central differences at 64-bit.
// Primitives and layers must stay under 1e-5 relative error, full models
// under 1e-4.

struct GradCheckCase {
  std::string name;
  double tol;
  std::function<GradCheckReport(uint64_t seed)> run;
};

struct GradCheckOutcome {
  std::string name;
  double tol = 0;
  double max_rel_err = 0;
  int64_t elements = 0;
  bool pass = false;
};

namespace gradcheck_detail {

using Td = Tensor<double>;

inline Td uniform(Shape shape, SplitMix64& rng, double lo, double hi) {
  Td t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Magnitude at least 0.2, either sign; keeps kinked ops (relu, abs, leaky)
// away from their non-differentiable point under the fd step.
inline Td away_from_zero(Shape shape, SplitMix64& rng) {
  Td t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(0.2, 1.2);
    t.data()[i] = rng.next() & 1 ? mag : -mag;
  }
  return t;
}

// A fixed non-uniform weighting so reductions of normalized quantities do
// not collapse to a constant objective.
inline Td probe(const Shape& shape) {
  Td w(shape);
  for (int64_t i = 0; i < w.numel(); ++i)
    w.data()[i] = 0.02 * double(i % 17) - 0.15;
  return w;
}

inline Td weighted(const Td& y) { return sum(mul(y, probe(y.shape()))); }

}  // namespace gradcheck_detail

inline std::vector<GradCheckCase> build_gradcheck_suite() {
  using namespace gradcheck_detail;
  std::vector<GradCheckCase> cases;
  auto add_case = [&cases](std::string name, double tol,
                           std::function<GradCheckReport(uint64_t)> run) {
    cases.push_back({std::move(name), tol, std::move(run)});
  };

  // --- primitives ---
  add_case("add_sub_mul", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "add_sub_mul");
    Td a = uniform({3, 4}, rng, -1, 1), b = uniform({3, 4}, rng, -1, 1);
    Td c = Td::scalar(rng.uniform(0.5, 1.5));
    return grad_check(
        [](const std::vector<Td>& in) {
          Td y = mul(add(in[0], in[1]), sub(in[0], in[2]));
          return weighted(y);
        },
        {a, b, c});
  });
  add_case("scale_neg", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "scale_neg");
    Td a = uniform({2, 5}, rng, -1, 1);
    return grad_check(
        [](const std::vector<Td>& in) {
          return weighted(neg(scale(in[0], 1.7)));
        },
        {a});
  });
  add_case("log", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "log");
    Td a = uniform({3, 3}, rng, 0.3, 2.0);
    return grad_check(
        [](const std::vector<Td>& in) { return weighted(rgan::log(in[0])); },
        {a});
  });
  add_case("tanh", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "tanh");
    Td a = uniform({3, 3}, rng, -2, 2);
    return grad_check(
        [](const std::vector<Td>& in) { return weighted(rgan::tanh(in[0])); },
        {a});
  });
  add_case("sigmoid", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "sigmoid");
    Td a = uniform({3, 3}, rng, -3, 3);
    return grad_check(
        [](const std::vector<Td>& in) { return weighted(sigmoid(in[0])); },
        {a});
  });
  add_case("relu", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "relu");
    Td a = away_from_zero({4, 4}, rng);
    return grad_check(
        [](const std::vector<Td>& in) { return weighted(relu(in[0])); }, {a});
  });
  add_case("leaky_relu", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "leaky_relu");
    Td a = away_from_zero({4, 4}, rng);
    return grad_check(
        [](const std::vector<Td>& in) {
          return weighted(leaky_relu(in[0], 0.2));
        },
        {a});
  });
  add_case("abs", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "abs");
    Td a = away_from_zero({4, 4}, rng);
    return grad_check(
        [](const std::vector<Td>& in) { return weighted(rgan::abs(in[0])); },
        {a});
  });
  add_case("clamp", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "clamp");
    Td a = uniform({4, 4}, rng, -0.8, 0.8);  // clamp edges at +-0.9
    return grad_check(
        [](const std::vector<Td>& in) {
          return weighted(clamp(in[0], -0.9, 0.9));
        },
        {a});
  });
  add_case("gelu", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "gelu");
    Td a = uniform({4, 4}, rng, -2, 2);
    return grad_check(
        [](const std::vector<Td>& in) { return weighted(gelu(in[0])); }, {a});
  });
  add_case("softmax_lastdim", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "softmax");
    Td a = uniform({3, 6}, rng, -2, 2);
    return grad_check(
        [](const std::vector<Td>& in) {
          return weighted(softmax_lastdim(in[0]));
        },
        {a});
  });
  add_case("matmul", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "matmul");
    Td a = uniform({3, 4}, rng, -1, 1), b = uniform({4, 2}, rng, -1, 1);
    return grad_check(
        [](const std::vector<Td>& in) {
          return weighted(matmul(in[0], in[1]));
        },
        {a, b});
  });
  add_case("matmul_batched", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "matmul_batched");
    Td a = uniform({2, 3, 4}, rng, -1, 1), b = uniform({2, 4, 3}, rng, -1, 1);
    return grad_check(
        [](const std::vector<Td>& in) {
          return weighted(matmul(in[0], in[1]));
        },
        {a, b});
  });
  add_case("linear", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "linear");
    Td x = uniform({3, 5}, rng, -1, 1), w = uniform({5, 4}, rng, -1, 1),
       b = uniform({4}, rng, -0.5, 0.5);
    return grad_check(
        [](const std::vector<Td>& in) {
          return weighted(linear(in[0], in[1], in[2]));
        },
        {x, w, b});
  });
  add_case("conv2d_k4s2", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "conv2d_k4s2");
    Td x = uniform({2, 6, 6}, rng, -1, 1), w = uniform({3, 2, 4, 4}, rng, -0.5, 0.5),
       b = uniform({3}, rng, -0.2, 0.2);
    return grad_check(
        [](const std::vector<Td>& in) {
          return weighted(conv2d(in[0], in[1], in[2], 2, 1));
        },
        {x, w, b});
  });
  add_case("conv2d_k7s1p3", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "conv2d_k7");
    Td x = uniform({1, 8, 8}, rng, -1, 1), w = uniform({2, 1, 7, 7}, rng, -0.3, 0.3),
       b = uniform({2}, rng, -0.2, 0.2);
    return grad_check(
        [](const std::vector<Td>& in) {
          return weighted(conv2d(in[0], in[1], in[2], 1, 3));
        },
        {x, w, b});
  });
  add_case("conv2d_patch_k8s8", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "conv2d_k8s8");
    Td x = uniform({3, 16, 16}, rng, -1, 1), w = uniform({4, 3, 8, 8}, rng, -0.2, 0.2),
       b = uniform({4}, rng, -0.2, 0.2);
    return grad_check(
        [](const std::vector<Td>& in) {
          return weighted(conv2d(in[0], in[1], in[2], 8, 0));
        },
        {x, w, b});
  });
  add_case("conv_transpose2d", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "convT");
    Td x = uniform({2, 4, 4}, rng, -1, 1), w = uniform({2, 3, 3, 3}, rng, -0.5, 0.5),
       b = uniform({3}, rng, -0.2, 0.2);
    return grad_check(
        [](const std::vector<Td>& in) {
          return weighted(conv_transpose2d(in[0], in[1], in[2], 2, 1, 1));
        },
        {x, w, b});
  });
  add_case("sum_mean", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "sum_mean");
    Td a = uniform({3, 4}, rng, -1, 1);
    return grad_check(
        [](const std::vector<Td>& in) {
          return add(sum(mul(in[0], in[0])), mean(in[0]));
        },
        {a});
  });
  add_case("reshape_transpose_flatten", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "reshape");
    Td a = uniform({2, 3, 4}, rng, -1, 1);
    return grad_check(
        [](const std::vector<Td>& in) {
          Td y = transpose_last_two(flatten_spatial(in[0]));  // [12,2]
          return weighted(reshape(y, Shape{4, 6}));
        },
        {a});
  });
  add_case("heads_split_merge", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "heads");
    Td a = uniform({4, 8}, rng, -1, 1);
    return grad_check(
        [](const std::vector<Td>& in) {
          Td h = heads_split(in[0], 2);
          return weighted(heads_merge(matmul(softmax_lastdim(h), h)));
        },
        {a});
  });
  add_case("concat", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "concat");
    Td a = uniform({2, 3}, rng, -1, 1), b = uniform({2, 2}, rng, -1, 1);
    return grad_check(
        [](const std::vector<Td>& in) {
          return weighted(concat(std::vector<Td>{in[0], in[1]}, 1));
        },
        {a, b});
  });
  add_case("instance_norm", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "instance_norm");
    Td x = uniform({2, 5, 5}, rng, -1, 1);
    return grad_check(
        [](const std::vector<Td>& in) {
          return weighted(instance_norm(in[0]));
        },
        {x});
  });
  add_case("layer_norm", 1e-5, [](uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, "layer_norm");
    Td x = uniform({4, 6}, rng, -1, 1), g = uniform({6}, rng, 0.5, 1.5),
       b = uniform({6}, rng, -0.3, 0.3);
    return grad_check(
        [](const std::vector<Td>& in) {
          return weighted(layer_norm(in[0], in[1], in[2]));
        },
        {x, g, b});
  });

  // --- layers (parameters included in the check) ---
  auto layer_case = [&add_case](const std::string& name, double tol,
                                auto build_and_eval) {
    add_case(name, tol, [build_and_eval](uint64_t seed) {
      return build_and_eval(seed);
    });
  };
  layer_case("layer_conv2d", 1e-5, [](uint64_t seed) {
    ParamStore<double> ps;
    Conv2dLayer<double> conv(ps, "c", 2, 3, 4, 2, 1);
    ps.initialize(seed);
    SplitMix64 rng = derive_stream(seed, "layer_conv2d");
    std::vector<Td> in{uniform({2, 8, 8}, rng, -1, 1)};
    for (const auto& p : ps.entries()) in.push_back(p.tensor);
    return grad_check(
        [&conv](const std::vector<Td>& v) { return weighted(conv(v[0])); },
        in);
  });
  layer_case("layer_conv_transpose2d", 1e-5, [](uint64_t seed) {
    ParamStore<double> ps;
    ConvTranspose2dLayer<double> up(ps, "u", 3, 2, 3, 2, 1, 1);
    ps.initialize(seed);
    SplitMix64 rng = derive_stream(seed, "layer_convT");
    std::vector<Td> in{uniform({3, 4, 4}, rng, -1, 1)};
    for (const auto& p : ps.entries()) in.push_back(p.tensor);
    return grad_check(
        [&up](const std::vector<Td>& v) { return weighted(up(v[0])); }, in);
  });
  layer_case("layer_linear", 1e-5, [](uint64_t seed) {
    ParamStore<double> ps;
    LinearLayer<double> lin(ps, "l", 6, 5);
    ps.initialize(seed);
    SplitMix64 rng = derive_stream(seed, "layer_linear");
    std::vector<Td> in{uniform({3, 6}, rng, -1, 1)};
    for (const auto& p : ps.entries()) in.push_back(p.tensor);
    return grad_check(
        [&lin](const std::vector<Td>& v) { return weighted(lin(v[0])); }, in);
  });
  layer_case("layer_layer_norm", 1e-5, [](uint64_t seed) {
    ParamStore<double> ps;
    LayerNormLayer<double> ln(ps, "n", 6);
    ps.initialize(seed);
    for (auto& p : ps.entries())  // move affine off the trivial fixed point
      for (int64_t i = 0; i < p.tensor.numel(); ++i)
        p.tensor.data()[i] += 0.05 * double(i + 1) / double(p.tensor.numel());
    SplitMix64 rng = derive_stream(seed, "layer_ln");
    std::vector<Td> in{uniform({4, 6}, rng, -1, 1)};
    for (const auto& p : ps.entries()) in.push_back(p.tensor);
    return grad_check(
        [&ln](const std::vector<Td>& v) { return weighted(ln(v[0])); }, in);
  });
  layer_case("layer_attention", 1e-5, [](uint64_t seed) {
    ParamStore<double> ps;
    MultiHeadAttention<double> mha(ps, "a", 8, 2);
    ps.initialize(seed);
    SplitMix64 rng = derive_stream(seed, "layer_mha");
    std::vector<Td> in{uniform({4, 8}, rng, -1, 1)};
    for (const auto& p : ps.entries()) in.push_back(p.tensor);
    return grad_check(
        [&mha](const std::vector<Td>& v) { return weighted(mha(v[0])); }, in);
  });
  layer_case("layer_transformer_block", 1e-5, [](uint64_t seed) {
    ParamStore<double> ps;
    TransformerBlock<double> blk(ps, "b", 8, 2);
    ps.initialize(seed);
    SplitMix64 rng = derive_stream(seed, "layer_block");
    std::vector<Td> in{uniform({3, 8}, rng, -1, 1)};
    for (const auto& p : ps.entries()) in.push_back(p.tensor);
    return grad_check(
        [&blk](const std::vector<Td>& v) { return weighted(blk(v[0])); }, in);
  });

  // --- full toy models ---
  add_case("model_generator_vit", 1e-4, [](uint64_t seed) {
    GeneratorVit<double> gen("g", 16, 16, 1, 2);
    gen.params().initialize(seed);
    SplitMix64 rng = derive_stream(seed, "model_vit");
    std::vector<Td> in{uniform({3, 16, 16}, rng, -0.9, 0.9)};
    for (const auto& p : gen.params().entries()) in.push_back(p.tensor);
    return grad_check(
        [&gen](const std::vector<Td>& v) { return sum(gen.forward(v[0])); },
        in);
  });
  add_case("model_generator_cnn", 1e-4, [](uint64_t seed) {
    GeneratorCnn<double> gen("g", 16, 4, 1);
    gen.params().initialize(seed);
    SplitMix64 rng = derive_stream(seed, "model_cnn");
    std::vector<Td> in{uniform({3, 16, 16}, rng, -0.9, 0.9)};
    for (const auto& p : gen.params().entries()) in.push_back(p.tensor);
    return grad_check(
        [&gen](const std::vector<Td>& v) { return sum(gen.forward(v[0])); },
        in);
  });
  add_case("model_tiny_discriminator_adv_loss", 1e-5, [](uint64_t seed) {
    Discriminator<double> d("d", 4, /*blocks=*/2, /*block_bias=*/false);
    d.params().initialize(seed);
    SplitMix64 rng = derive_stream(seed, "model_disc");
    std::vector<Td> in{uniform({3, 16, 16}, rng, -0.9, 0.9),
                       uniform({3, 16, 16}, rng, -0.9, 0.9)};
    for (const auto& p : d.params().entries()) in.push_back(p.tensor);
    return grad_check(
        [&d](const std::vector<Td>& v) {
          return adversarial_d_loss(d.forward(v[0]), d.forward(v[1]));
        },
        in);
  });

  return cases;
}

inline std::vector<GradCheckOutcome> run_gradcheck_suite(
    const std::vector<uint64_t>& seeds) {
  std::vector<GradCheckOutcome> out;
  for (const GradCheckCase& c : build_gradcheck_suite()) {
    GradCheckOutcome o;
    o.name = c.name;
    o.tol = c.tol;
    for (uint64_t seed : seeds) {
      const GradCheckReport r = c.run(seed);
      o.max_rel_err = std::max(o.max_rel_err, r.max_rel_err);
      o.elements += r.elements_checked;
    }
    o.pass = o.max_rel_err < c.tol;
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace rgan

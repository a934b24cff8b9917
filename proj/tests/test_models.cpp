#include <memory>
#include <set>
#include <vector>

#include "rgan/grad_check.hpp"
#include "rgan/losses.hpp"
#include "rgan/models.hpp"
#include "test_util.hpp"

using namespace rgan;
using rgan_test::rand_tensor;
using Tf = Tensor<float>;

TEST_CASE("vit generator shapes at toy scale") {
  GeneratorVit<float> gen("gen_h", 64, 128, 2, 4);
  gen.params().initialize(5);
  CHECK(gen.token_count() == 64);  // 8x8 patch grid

  SplitMix64 rng(10);
  Tf x = rand_tensor<float>({3, 64, 64}, rng, -1.0, 1.0);
  Tf tok = gen.encode(x);
  CHECK(tok.shape() == Shape{64, 128});
  Tf out = gen.forward(x);
  CHECK(out.shape() == Shape{3, 64, 64});
  for (int64_t i = 0; i < out.numel(); ++i) {
    CHECK(out.data()[i] > -1.0f);
    CHECK(out.data()[i] < 1.0f);
  }
}

TEST_CASE("generator rejects indivisible sizes before any compute") {
  CHECK_THROWS_WITH_AS((GeneratorVit<float>("g", 60, 128, 2, 4)),
                       doctest::Contains("not divisible"), TensorError);
  CHECK_THROWS_AS((GeneratorVit<float>("g", 64, 120, 2, 7)), TensorError);
  CHECK_THROWS_AS((GeneratorCnn<float>("g", 30, 16, 2)), TensorError);

  GeneratorVit<float> gen("g", 64, 64, 1, 4);
  gen.params().initialize(1);
  Tf wrong(Shape{3, 32, 32});
  CHECK_THROWS_AS(gen.forward(wrong), TensorError);
}

TEST_CASE("cnn baseline keeps shape and range") {
  GeneratorCnn<float> gen("gen_l", 32, 8, 2);
  gen.params().initialize(3);
  SplitMix64 rng(20);
  Tf x = rand_tensor<float>({3, 32, 32}, rng, -1.0, 1.0);
  Tf y = gen.forward(x);
  CHECK(y.shape() == x.shape());
  for (int64_t i = 0; i < y.numel(); ++i) {
    CHECK(y.data()[i] > -1.0f);
    CHECK(y.data()[i] < 1.0f);
  }
}

TEST_CASE("discriminator logit map sizes follow the conv arithmetic") {
  Discriminator<float> d64("d", 8);
  d64.params().initialize(7);
  SplitMix64 rng(30);
  Tf x = rand_tensor<float>({3, 64, 64}, rng, -1.0, 1.0);
  Tf logits = d64.forward(x);
  CHECK(logits.shape() == Shape{1, 6, 6});

  // formula trace 64 -> 32 -> 31 -> 15 -> 7 -> 6, strictly decreasing
  auto trace = Discriminator<float>::stage_trace(64);
  CHECK(trace == std::vector<int>{64, 32, 31, 15, 7, 6});
  for (size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] < trace[i - 1]);

  Tf probs = sigmoid(logits);
  for (int64_t i = 0; i < probs.numel(); ++i) {
    CHECK(probs.data()[i] > 0.0f);
    CHECK(probs.data()[i] < 1.0f);
  }

  // any stage collapsing below kernel size is an error
  CHECK_THROWS_WITH_AS(Discriminator<float>::stage_trace(16),
                       doctest::Contains("collapsed"), TensorError);
  Discriminator<float> dsmall("ds", 4);
  dsmall.params().initialize(9);
  Tf tiny = rand_tensor<float>({3, 16, 16}, rng, -1.0, 1.0);
  CHECK_THROWS_AS(dsmall.forward(tiny), TensorError);
}

TEST_CASE("paper-scale discriminator parameter count") {
  Discriminator<float> d("disc_h");  // base 64, 3 blocks
  // closed-form: 3136 + 131200 + 524544 + 2097664 + 8193
  CHECK(param_count(d.params()) == 2764737);
}

TEST_CASE("toy generator parameter count matches the per-layer closed form") {
  const int S = 64, D = 128, depth = 2, heads = 4;
  GeneratorVit<float> gen("g", S, D, depth, heads);
  const int T = (S / 8) * (S / 8);
  int64_t expected = 0;
  expected += int64_t(D) * 3 * 8 * 8 + D;       // patch projection
  expected += int64_t(T) * D;                   // positional embedding
  int64_t block = 0;
  block += 2 * D;                               // ln1
  block += 4 * int64_t(D) * D + 3 * D;          // q,k,v,o; k is bias-free
  block += 2 * D;                               // ln2
  block += int64_t(D) * 4 * D + 4 * D;          // mlp.fc1
  block += int64_t(4 * D) * D + D;              // mlp.fc2
  expected += depth * block;
  expected += 2 * D;                            // final ln
  expected += int64_t(D) * (D / 2) * 9;         // up1 (norm follows, no bias)
  expected += int64_t(D / 2) * (D / 4) * 9;     // up2
  expected += int64_t(D / 4) * (D / 8) * 9;     // up3
  expected += int64_t(3) * (D / 8) * 49 + 3;    // output conv
  CHECK(param_count(gen.params()) == expected);
}

TEST_CASE("a single conv layer counts exactly its own parameters") {
  ParamStore<float> ps;
  Conv2dLayer<float> out(ps, "out", 16, 3, 7, 1, 3);
  CHECK(ps.total_count() == 3 * 16 * 49 + 3);
}

TEST_CASE("parameter enumeration is deterministic and prefix-disjoint") {
  GeneratorVit<float> gh("gen_h", 32, 16, 1, 2);
  GeneratorVit<float> gl("gen_l", 32, 16, 1, 2);

  std::vector<std::string> names1, names2;
  for (const auto& p : gh.params().entries()) names1.push_back(p.name);
  for (const auto& p : gh.params().entries()) names2.push_back(p.name);
  CHECK(names1 == names2);

  std::set<std::string> unique(names1.begin(), names1.end());
  CHECK(unique.size() == names1.size());
  CHECK(unique.size() == gh.params().entries().size());

  for (const auto& p : gl.params().entries()) {
    CHECK(p.name.starts_with("gen_l."));
    CHECK(!unique.count(p.name));
  }
}

TEST_CASE("generators are interchangeable behind the common interface") {
  std::vector<std::unique_ptr<GeneratorBase<float>>> gens;
  gens.push_back(std::make_unique<GeneratorVit<float>>("a", 32, 16, 1, 2));
  gens.push_back(std::make_unique<GeneratorCnn<float>>("b", 32, 8, 2));
  SplitMix64 rng(40);
  Tf x = rand_tensor<float>({3, 32, 32}, rng, -1.0, 1.0);
  for (auto& g : gens) {
    g->params().initialize(11);
    CHECK(g->forward(x).shape() == x.shape());
  }
}

TEST_CASE("gradient reaches every parameter from a composite loss") {
  for (uint64_t seed : {1u, 2u, 3u}) {
    GeneratorVit<float> gen_h("gen_h", 32, 16, 1, 2);
    GeneratorCnn<float> gen_l("gen_l", 32, 8, 1);
    Discriminator<float> d_h("disc_h", 8);
    Discriminator<float> d_l("disc_l", 8);
    gen_h.params().initialize(seed);
    gen_l.params().initialize(seed + 100);
    d_h.params().initialize(seed + 200);
    d_l.params().initialize(seed + 300);

    SplitMix64 rng(seed + 400);
    Tf low = rand_tensor<float>({3, 32, 32}, rng, -0.9, 0.9);
    Tf high = rand_tensor<float>({3, 32, 32}, rng, -0.9, 0.9);

    Tape<float> tape;
    typename Tape<float>::Scope scope(tape);
    Tf fake_h = gen_h.forward(low);
    Tf fake_l = gen_l.forward(high);
    Tf adv_g_h = adversarial_g_loss(d_h.forward(fake_h));
    Tf adv_g_l = adversarial_g_loss(d_l.forward(fake_l));
    Tf cyc_l = cycle_loss(gen_l.forward(fake_h), low);
    Tf cyc_h = cycle_loss(gen_h.forward(fake_l), high);
    Tf id_l = identity_loss(gen_l.forward(low), low);
    Tf id_h = identity_loss(gen_h.forward(high), high);
    Tf total = combine_generator_loss(adv_g_l, adv_g_h, cyc_l, cyc_h, id_l,
                                      id_h, LossWeights{});
    tape.backward(total);

    auto all_touched = [](const ParamStore<float>& ps) {
      for (const auto& p : ps.entries()) {
        bool nonzero = false;
        for (int64_t i = 0; i < p.tensor.numel(); ++i)
          if (p.tensor.grad_at(i) != 0.0f) nonzero = true;
        if (!nonzero) return false;
      }
      return true;
    };
    CHECK(all_touched(gen_h.params()));
    CHECK(all_touched(gen_l.params()));
    CHECK(all_touched(d_h.params()));
    CHECK(all_touched(d_l.params()));
  }
}

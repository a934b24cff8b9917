#include <cmath>
#include <vector>

#include "rgan/grad_check.hpp"
#include "rgan/ops.hpp"
#include "test_util.hpp"

using namespace rgan;
using rgan_test::rand_tensor;
using rgan_test::rand_tensor_away_from_zero;
using Td = Tensor<double>;

TEST_CASE("elementwise fixed points") {
  Td z(Shape{2, 3});
  Td t = rgan::tanh(z);
  Td s = sigmoid(z);
  for (int64_t i = 0; i < t.numel(); ++i) {
    CHECK(t.data()[i] == 0.0);
    CHECK(s.data()[i] == doctest::Approx(0.5));
  }

  Td x(Shape{2}, std::vector<double>{-1.0, 2.0});
  Td lr = leaky_relu(x, 0.2);
  CHECK(lr.data()[0] == doctest::Approx(-0.2));
  CHECK(lr.data()[1] == doctest::Approx(2.0));
}

TEST_CASE("binary ops require equal shapes or a scalar operand") {
  Td a(Shape{2, 3});
  Td b(Shape{3, 2});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("(2,3)"), TensorError);
  CHECK_THROWS_AS(mul(a, b), TensorError);

  Td s = Td::scalar(2.0);
  Td sum_bc = add(a, s);
  CHECK(sum_bc.shape() == a.shape());
  CHECK(sum_bc.data()[0] == 2.0);
  Td diff = sub(s, a);  // scalar on the left broadcasts too
  CHECK(diff.data()[0] == 2.0);
}

TEST_CASE("matmul identity and hand arithmetic") {
  SplitMix64 rng(11);
  Td a = rand_tensor<double>({4, 4}, rng);
  Td eye(Shape{4, 4});
  for (int i = 0; i < 4; ++i) eye.data()[i * 4 + i] = 1.0;
  Td prod = matmul(a, eye);
  for (int64_t i = 0; i < a.numel(); ++i)
    CHECK(prod.data()[i] == doctest::Approx(a.data()[i]));

  Td m(Shape{2, 2}, std::vector<double>{1, 2, 3, 4});
  Td v(Shape{2, 1}, std::vector<double>{5, 6});
  Td mv = matmul(m, v);
  CHECK(mv.data()[0] == 17.0);
  CHECK(mv.data()[1] == 39.0);

  Td bad(Shape{3, 2});
  CHECK_THROWS_AS(matmul(m, bad), TensorError);
}

TEST_CASE("matmul gradient matches central differences") {
  for (uint64_t seed : {1u, 2u, 3u}) {
    SplitMix64 rng(seed);
    Td a = rand_tensor<double>({3, 4}, rng);
    Td b = rand_tensor<double>({4, 2}, rng);
    auto rep = grad_check(
        [](const std::vector<Td>& in) { return sum(matmul(in[0], in[1])); },
        {a, b});
    CHECK(rep.max_rel_err < 1e-5);
  }
}

TEST_CASE("batched matmul shapes and gradient") {
  SplitMix64 rng(5);
  Td a = rand_tensor<double>({2, 3, 4}, rng);
  Td b = rand_tensor<double>({2, 4, 5}, rng);
  Td c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 3, 5});

  auto rep = grad_check(
      [](const std::vector<Td>& in) { return sum(matmul(in[0], in[1])); },
      {a, b});
  CHECK(rep.max_rel_err < 1e-5);

  // shared right operand: [B,m,k] x [k,n]
  Td b2 = rand_tensor<double>({4, 5}, rng);
  auto rep2 = grad_check(
      [](const std::vector<Td>& in) {
        return mean(mul(matmul(in[0], in[1]), matmul(in[0], in[1])));
      },
      {a, b2});
  CHECK(rep2.max_rel_err < 1e-5);
}

TEST_CASE("conv2d output sizes") {
  Tensor<float> x(Shape{3, 256, 256});
  Tensor<float> w(Shape{64, 3, 4, 4});
  Tensor<float> b(Shape{64});
  Tensor<float> y = conv2d(x, w, b, 2, 1);
  CHECK(y.shape() == Shape{64, 128, 128});

  Tensor<float> x1(Shape{2, 9, 9});
  Tensor<float> w1(Shape{4, 2, 1, 1});
  Tensor<float> b1(Shape{4});
  CHECK(conv2d(x1, w1, b1, 1, 0).shape() == Shape{4, 9, 9});

  Tensor<float> wbig(Shape{4, 2, 12, 12});
  Tensor<float> b4(Shape{4});
  CHECK_THROWS_WITH_AS(conv2d(x1, wbig, b4, 1, 0),
                       doctest::Contains("larger than padded input"),
                       TensorError);
}

TEST_CASE("conv2d gradient matches central differences") {
  for (uint64_t seed : {7u, 8u, 9u}) {
    SplitMix64 rng(seed);
    Td x = rand_tensor<double>({1, 5, 5}, rng);
    Td w = rand_tensor<double>({2, 1, 3, 3}, rng);
    Td b = rand_tensor<double>({2}, rng);
    auto rep = grad_check(
        [](const std::vector<Td>& in) {
          return mean(mul(conv2d(in[0], in[1], in[2], 2, 1),
                          conv2d(in[0], in[1], in[2], 2, 1)));
        },
        {x, w, b});
    CHECK(rep.max_rel_err < 1e-5);
  }
}

TEST_CASE("conv_transpose2d output sizes") {
  Tensor<float> x(Shape{1024, 32, 32});
  Tensor<float> w(Shape{1024, 512, 3, 3});
  Tensor<float> b(Shape{512});
  CHECK(conv_transpose2d(x, w, b, 2, 1, 1).shape() == Shape{512, 64, 64});

  SplitMix64 rng(3);
  Td xs = rand_tensor<double>({2, 6, 6}, rng);
  Td eye(Shape{2, 2, 1, 1});
  eye.data()[0] = 1.0;  // w[0][0]
  eye.data()[3] = 1.0;  // w[1][1]
  Td zb(Shape{2});
  Td y = conv_transpose2d(xs, eye, zb, 1, 0, 0);
  CHECK(y.shape() == xs.shape());
  for (int64_t i = 0; i < y.numel(); ++i)
    CHECK(y.data()[i] == doctest::Approx(xs.data()[i]));

  Td wv(Shape{2, 2, 3, 3});
  CHECK_THROWS_WITH_AS(conv_transpose2d(xs, wv, zb, 2, 1, 2),
                       doctest::Contains("output padding"), TensorError);
}

TEST_CASE("conv_transpose2d gradient matches central differences") {
  for (uint64_t seed : {21u, 22u, 23u}) {
    SplitMix64 rng(seed);
    Td x = rand_tensor<double>({2, 4, 4}, rng);
    Td w = rand_tensor<double>({2, 3, 3, 3}, rng);
    Td b = rand_tensor<double>({3}, rng);
    auto rep = grad_check(
        [](const std::vector<Td>& in) {
          Td y = conv_transpose2d(in[0], in[1], in[2], 2, 1, 1);
          return mean(mul(y, y));
        },
        {x, w, b});
    CHECK(rep.max_rel_err < 1e-5);
  }
}

TEST_CASE("reshape preserves row-major order") {
  Td big(Shape{16, 16});
  for (int64_t i = 0; i < big.numel(); ++i) big.data()[i] = double(i);
  Td r = reshape(big, Shape{16, 4, 4});
  for (int64_t i = 0; i < r.numel(); ++i) CHECK(r.data()[i] == double(i));
  Td back = reshape(r, Shape{16, 16});
  for (int64_t i = 0; i < back.numel(); ++i)
    CHECK(back.data()[i] == big.data()[i]);

  CHECK_THROWS_WITH_AS(reshape(big, Shape{5, 5}),
                       doctest::Contains("element count"), TensorError);
}

TEST_CASE("softmax of a zero row is uniform") {
  Td z(Shape{3, 5});
  Td s = softmax_lastdim(z);
  for (int64_t i = 0; i < s.numel(); ++i)
    CHECK(s.data()[i] == doctest::Approx(0.2));

  SplitMix64 rng(17);
  Td x = rand_tensor<double>({4, 6}, rng, -3.0, 3.0);
  Td sm = softmax_lastdim(x);
  for (int r = 0; r < 4; ++r) {
    double rowsum = 0;
    for (int c = 0; c < 6; ++c) rowsum += sm.data()[r * 6 + c];
    CHECK(rowsum == doctest::Approx(1.0));
  }
}

TEST_CASE("mean absolute difference of identical tensors is zero") {
  SplitMix64 rng(23);
  Td x = rand_tensor<double>({3, 7}, rng);
  CHECK(mean(abs(sub(x, x.clone()))).item() == 0.0);
}

TEST_CASE("backward of sum gives all-ones gradient") {
  SplitMix64 rng(31);
  Td x = rand_tensor<double>({4, 5}, rng);
  x.set_requires_grad(true);
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  Td loss = sum(x);
  tape.backward(loss);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(x.grad_at(i) == 1.0);
}

TEST_CASE("backward of half squared norm reproduces the input") {
  SplitMix64 rng(37);
  Td x = rand_tensor<double>({6}, rng);
  x.set_requires_grad(true);
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  Td loss = scale(sum(mul(x, x)), 0.5);
  tape.backward(loss);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(x.grad_at(i) == doctest::Approx(x.data()[i]));
}

TEST_CASE("backward rejects non-scalar losses") {
  Td x(Shape{2, 2}, 1.0, true);
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  Td y = mul(x, x);
  CHECK_THROWS_WITH_AS(tape.backward(y), doctest::Contains("scalar"),
                       TensorError);
}

TEST_CASE("using a tensor twice accumulates both path gradients") {
  SplitMix64 rng(41);
  Td x = rand_tensor<double>({5}, rng);
  x.set_requires_grad(true);

  Tape<double> tape;
  {
    typename Tape<double>::Scope scope(tape);
    Td loss = add(sum(mul(x, x)), sum(scale(x, 3.0)));
    tape.backward(loss);
  }

  // Reference: the same function with duplicated independent inputs.
  Td x1 = x.detach().set_requires_grad(true);
  Td x2 = x.detach().set_requires_grad(true);
  Tape<double> tape2;
  {
    typename Tape<double>::Scope scope(tape2);
    Td loss = add(sum(mul(x1, x1)), sum(scale(x2, 3.0)));
    tape2.backward(loss);
  }
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(x.grad_at(i) == doctest::Approx(x1.grad_at(i) + x2.grad_at(i)));
}

TEST_CASE("primitives do not mutate their inputs") {
  SplitMix64 rng(47);
  Td a = rand_tensor<double>({2, 8, 8}, rng);
  Td b = rand_tensor<double>({2, 8, 8}, rng);
  std::vector<double> a0 = a.vec(), b0 = b.vec();

  Td w = rand_tensor<double>({3, 2, 3, 3}, rng);
  Td bias = rand_tensor<double>({3}, rng);
  add(a, b);
  mul(a, b);
  rgan::tanh(a);
  conv2d(a, w, bias, 1, 1);
  instance_norm(a);
  softmax_lastdim(flatten_spatial(a));
  CHECK(a.vec() == a0);
  CHECK(b.vec() == b0);
}

TEST_CASE("gradient check on simple reductions is exact") {
  SplitMix64 rng(53);
  Td x = rand_tensor<double>({3, 4}, rng);
  auto rep = grad_check(
      [](const std::vector<Td>& in) { return sum(in[0]); }, {x});
  CHECK(rep.max_rel_err < 1e-9);
}

TEST_CASE("unary primitive gradients match central differences") {
  for (uint64_t seed : {61u, 62u, 63u}) {
    SplitMix64 rng(seed);
    Td x = rand_tensor_away_from_zero<double>({3, 5}, rng);
    Td pos = rand_tensor<double>({3, 5}, rng, 0.4, 2.0);

    auto check = [](const ScalarFn& f, std::vector<Td> in, double tol = 1e-5) {
      auto rep = grad_check(f, std::move(in));
      CHECK(rep.max_rel_err < tol);
    };
    check([](const std::vector<Td>& in) { return sum(mul(rgan::tanh(in[0]), rgan::tanh(in[0]))); }, {x});
    check([](const std::vector<Td>& in) { return mean(sigmoid(in[0])); }, {x});
    check([](const std::vector<Td>& in) { return mean(relu(in[0])); }, {x});
    check([](const std::vector<Td>& in) { return mean(leaky_relu(in[0], 0.2)); }, {x});
    check([](const std::vector<Td>& in) { return mean(rgan::abs(in[0])); }, {x});
    check([](const std::vector<Td>& in) { return mean(gelu(in[0])); }, {x});
    check([](const std::vector<Td>& in) { return mean(rgan::log(in[0])); }, {pos});
    check([](const std::vector<Td>& in) {
      Td s = softmax_lastdim(in[0]);
      return sum(mul(s, s));
    }, {x});
    check([](const std::vector<Td>& in) {
      return sum(mul(transpose_last_two(in[0]), transpose_last_two(in[0])));
    }, {x});
  }
}

TEST_CASE("shape movement gradients match central differences") {
  SplitMix64 rng(71);
  Td x = rand_tensor<double>({4, 8}, rng);
  auto rep = grad_check(
      [](const std::vector<Td>& in) {
        Td h = heads_split(in[0], 2);
        Td m = heads_merge(matmul(softmax_lastdim(h), h));
        return mean(mul(m, m));
      },
      {x});
  CHECK(rep.max_rel_err < 1e-5);

  Td a = rand_tensor<double>({2, 3}, rng);
  Td b = rand_tensor<double>({2, 5}, rng);
  auto rep2 = grad_check(
      [](const std::vector<Td>& in) {
        Td c = concat(std::vector<Td>{in[0], in[1]}, 1);
        return mean(mul(c, c));
      },
      {a, b});
  CHECK(rep2.max_rel_err < 1e-5);
}

TEST_CASE("concat stitches along the requested axis") {
  Td a(Shape{2, 2}, std::vector<double>{1, 2, 3, 4});
  Td b(Shape{1, 2}, std::vector<double>{5, 6});
  Td c = concat(std::vector<Td>{a, b}, 0);
  CHECK(c.shape() == Shape{3, 2});
  CHECK(c.data()[4] == 5.0);
  CHECK(c.data()[5] == 6.0);
}

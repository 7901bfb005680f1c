#include <cmath>
#include <numeric>

#include "doctest.h"
#include "smpcl/error.hpp"
#include "smpcl/gradcheck.hpp"
#include "smpcl/ops.hpp"
#include "support.hpp"

using namespace smpcl;
using smpcl::test::random_tensor;
using smpcl::test::values;

namespace {

double check(const std::function<Tensor<double>()>& fn, std::vector<Tensor<double>> wrt) {
  auto r = gradcheck<double>(fn, std::move(wrt));
  INFO(r.worst);
  CHECK(r.coords_checked > 0);
  return r.max_rel_error;
}

Tensor<double> iota(Shape shape) {
  std::vector<double> v(shape_numel(shape));
  std::iota(v.begin(), v.end(), 0.0);
  return Tensor<double>(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("flatten to sequence keeps element count and transposes") {
  auto x = iota({3, 2, 2});
  auto s = flatten_to_sequence(x);
  CHECK(s.shape() == Shape{4, 3});
  CHECK(s.numel() == 12);
  // Row p holds channel values at grid position p.
  CHECK(s[0 * 3 + 1] == 4.0);
  CHECK(s[3 * 3 + 2] == 11.0);
  CHECK(values(sequence_to_grid(s, 2, 2)) == values(x));
}

TEST_CASE("identity permute and reshape round trip are exact") {
  auto x = random_tensor({2, 3}, 1);
  CHECK(values(permute(x, {0, 1})) == values(x));
  CHECK(values(reshape(reshape(x, {3, 2}), {2, 3})) == values(x));
  auto y = random_tensor({2, 3, 4}, 2);
  CHECK(values(permute(permute(y, {2, 0, 1}), {1, 2, 0})) == values(y));
  CHECK_THROWS_AS(reshape(x, {4, 2}), ShapeError);
  CHECK_THROWS_AS(permute(x, {0, 0}), ShapeError);
}

TEST_CASE("transpose moves elements") {
  auto x = iota({2, 3});
  auto t = transpose(x);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(values(t) == std::vector<double>{0, 3, 1, 4, 2, 5});
}

TEST_CASE("matmul examples") {
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  auto m = random_tensor({2, 5}, 3);
  CHECK(values(matmul(eye, m)) == values(m));
  Tensor<double> a({2, 2}, {1, 2, 3, 4});
  Tensor<double> ones({2, 1}, {1, 1});
  CHECK(values(matmul(a, ones)) == std::vector<double>{3, 7});
  CHECK_THROWS_AS(matmul(a, random_tensor({3, 1}, 4)), ShapeError);
}

TEST_CASE("matmul gradcheck") {
  auto a = random_tensor({4, 5}, 5);
  auto b = random_tensor({5, 3}, 6);
  CHECK(check([&] { return sum(matmul(a, b)); }, {a, b}) <= 1e-5);
  CHECK(check([&] { return sum(mul(matmul(a, b), matmul(a, b))); }, {a, b}) <= 1e-5);
}

TEST_CASE("conv2d examples") {
  auto x = random_tensor({1, 3, 3}, 7, -1, 1, false);
  Tensor<double> id({1, 1, 1, 1}, {1.0});
  CHECK(values(conv2d(x, id, 1, 0)) == values(x));

  auto ones = Tensor<double>::full({1, 3, 3}, 1.0);
  auto k = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto y = conv2d(ones, k, 1, 1);
  CHECK(y.shape() == Shape{1, 3, 3});
  CHECK(y[4] == 9.0);
  CHECK(y[0] == 4.0);

  CHECK_THROWS_AS(conv2d(ones, Tensor<double>::full({1, 2, 3, 3}, 1.0), 1, 1), ShapeError);
  CHECK_THROWS_AS(conv2d(ones, Tensor<double>::full({1, 1, 5, 5}, 1.0), 1, 0), ShapeError);
  CHECK_THROWS_AS(conv2d(ones, k, 0, 1), ShapeError);
}

TEST_CASE("conv2d output size follows the standard formula") {
  auto x = random_tensor({2, 7, 6}, 8, -1, 1, false);
  auto w = random_tensor({4, 2, 3, 3}, 9, -1, 1, false);
  CHECK(conv2d(x, w, 2, 1).shape() == Shape{4, 4, 3});
  auto wt = random_tensor({2, 3, 2, 2}, 10, -1, 1, false);
  CHECK(conv_transpose2d(x, wt, 2, 0).shape() == Shape{3, 14, 12});
}

TEST_CASE("conv2d gradcheck on a 1x2x4x4 input with a 2x2 kernel") {
  auto x = random_tensor({1, 2, 4, 4}, 11);
  auto w = random_tensor({3, 2, 2, 2}, 12);
  CHECK(check([&] { return sum(mul(conv2d(x, w, 1, 0), conv2d(x, w, 1, 0))); }, {x, w}) <= 1e-5);
  CHECK(check([&] { return sum(silu(conv2d(x, w, 2, 1))); }, {x, w}) <= 1e-5);
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  auto x = random_tensor({2, 5, 5}, 13, -1, 1, false);
  auto y = random_tensor({3, 3, 3}, 14, -1, 1, false);
  auto w = random_tensor({3, 2, 3, 3}, 15, -1, 1, false);
  // <conv(x), y> == <x, conv^T(y)> with the same weight tensor.
  auto cx = conv2d(x, w, 2, 1);
  auto ty = conv_transpose2d(y, w, 2, 1);
  REQUIRE(ty.shape() == x.shape());
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx[i] * y[i];
  for (std::size_t i = 0; i < x.numel(); ++i) rhs += x[i] * ty[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("conv_transpose2d gradcheck") {
  auto x = random_tensor({2, 3, 3}, 16);
  auto w = random_tensor({2, 3, 2, 2}, 17);
  CHECK(check([&] { return sum(silu(conv_transpose2d(x, w, 2, 0))); }, {x, w}) <= 1e-5);
}

TEST_CASE("channel bias, depthwise conv1d and bilinear resize gradchecks") {
  auto x = random_tensor({3, 4, 4}, 18);
  auto b = random_tensor({3}, 19);
  CHECK(check([&] { return sum(silu(add_channel_bias(x, b))); }, {x, b}) <= 1e-5);

  auto seq = random_tensor({6, 3}, 20);
  auto w = random_tensor({3, 3}, 21);
  CHECK(check([&] { return sum(silu(conv1d_depthwise(seq, w))); }, {seq, w}) <= 1e-5);

  auto small = random_tensor({2, 3, 3}, 22);
  CHECK(check([&] { return sum(silu(resize_bilinear(small, 7, 5))); }, {small}) <= 1e-5);
}

TEST_CASE("depthwise conv1d is causal") {
  auto seq = random_tensor({5, 2}, 23, -1, 1, false);
  auto w = random_tensor({2, 3}, 24, -1, 1, false);
  auto y = conv1d_depthwise(seq, w);
  auto moved = values(seq);
  moved[4 * 2 + 1] += 1.0;
  auto y2 = conv1d_depthwise(Tensor<double>({5, 2}, moved), w);
  for (std::size_t i = 0; i < 8; ++i) CHECK(y[i] == y2[i]);
  // First step sees only itself through the last tap.
  CHECK(y[0] == doctest::Approx(w[2] * seq[0]));
}

TEST_CASE("bilinear resize keeps constants and matches half-pixel sampling") {
  auto c = Tensor<double>::full({1, 3, 3}, 0.25);
  for (double v : values(resize_bilinear(c, 6, 5))) CHECK(v == doctest::Approx(0.25));
  // 1x2 -> 1x4: samples at source x = -0.25, 0.25, 0.75, 1.25 (clamped).
  Tensor<double> row({1, 1, 2}, {0.0, 1.0});
  auto up = resize_bilinear(row, 1, 4);
  CHECK(values(up) == std::vector<double>{0.0, 0.25, 0.75, 1.0});
}

TEST_CASE("activation examples") {
  CHECK(silu(Tensor<double>::scalar(0.0)).item() == 0.0);
  CHECK(softplus(Tensor<double>::scalar(0.0)).item() == doctest::Approx(0.693147).epsilon(1e-6));
  auto s = softmax(Tensor<double>({2}, {0.0, 0.0}), 0);
  CHECK(values(s) == std::vector<double>{0.5, 0.5});
  CHECK(relu(Tensor<double>({2}, {-1.0, 2.0})).data()[0] == 0.0);
  CHECK(sigmoid(Tensor<double>::scalar(0.0)).item() == 0.5);
  CHECK(exp(Tensor<double>::scalar(0.0)).item() == 1.0);
  CHECK(log(Tensor<double>::scalar(1.0)).item() == 0.0);
  CHECK_THROWS_AS(log(Tensor<double>({2}, {1.0, 0.0})), DomainError);
  CHECK_THROWS_AS(log(Tensor<double>({1}, {-2.0})), DomainError);
}

TEST_CASE("softmax sums to one along the axis and is stable") {
  auto x = random_tensor({3, 4, 5}, 25, -30, 30, false);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    auto s = softmax(x, axis);
    const auto& sh = x.shape();
    std::vector<std::size_t> stride{sh[1] * sh[2], sh[2], 1};
    for (std::size_t i = 0; i < x.numel(); ++i) {
      CHECK(s[i] >= 0.0);
      if ((i / stride[axis]) % sh[axis] != 0) continue;
      double total = 0;
      for (std::size_t j = 0; j < sh[axis]; ++j) total += s[i + j * stride[axis]];
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
  }
  auto big = softmax(Tensor<double>({2}, {1000.0, 1000.0}), 0);
  CHECK(big[0] == 0.5);
}

TEST_CASE("every elementwise op passes gradcheck on inputs in [-1,1]") {
  auto a = random_tensor({3, 4}, 26);
  auto b = random_tensor({3, 4}, 27);
  auto s = random_tensor({1}, 28);
  auto pos = random_tensor({3, 4}, 29, 0.5, 1.5);
  auto d = random_tensor({4}, 30);
  CHECK(check([&] { return sum(mul(add(a, b), sub(a, b))); }, {a, b}) <= 1e-5);
  CHECK(check([&] { return sum(mul(scale(a, 0.3), add_scalar(b, 2.0))); }, {a, b}) <= 1e-5);
  CHECK(check([&] { return sum(mul(mul_scalar(s, a), b)); }, {s, a, b}) <= 1e-5);
  CHECK(check([&] { return mean(mul(a, a)); }, {a}) <= 1e-5);
  CHECK(check([&] { return sum(mul(broadcast_rows(d, 3), a)); }, {d, a}) <= 1e-5);
  for (auto kind : {Activation::kSilu, Activation::kRelu, Activation::kSigmoid,
                    Activation::kSoftplus, Activation::kExp}) {
    CHECK(check([&] { return sum(mul(activation(a, kind), b)); }, {a}) <= 1e-5);
  }
  CHECK(check([&] { return sum(mul(log(pos), b)); }, {pos}) <= 1e-5);
  for (std::size_t axis = 0; axis < 2; ++axis) {
    CHECK(check([&] { return sum(mul(softmax(a, axis), b)); }, {a}) <= 1e-5);
  }
}

TEST_CASE("layout ops pass gradcheck") {
  auto x = random_tensor({2, 3, 4}, 31);
  auto probe = random_tensor({2, 3, 4}, 33, -1, 1, false);
  CHECK(check([&] { return sum(mul(permute(x, {2, 0, 1}), permute(probe, {2, 0, 1}))); }, {x}) <=
        1e-5);
  auto seq_probe = reshape(permute(probe, {1, 2, 0}), {12, 2});
  CHECK(check([&] { return sum(mul(flatten_to_sequence(x), seq_probe)); }, {x}) <= 1e-5);
  CHECK(check([&] { return sum(mul(sequence_to_grid(flatten_to_sequence(x), 3, 4), probe)); },
              {x}) <= 1e-5);
  auto y = random_tensor({2, 4}, 34);
  auto probe6 = random_tensor({6, 4}, 39, -1, 1, false);
  CHECK(check([&] { return sum(mul(concat<double>({y, y, mul(y, y)}), probe6)); }, {y}) <= 1e-5);
}

TEST_CASE("gather and scatter rows") {
  auto x = iota({4, 2});
  std::vector<std::uint32_t> idx{3, 1};
  auto g = gather_rows(x, idx);
  CHECK(values(g) == std::vector<double>{6, 7, 2, 3});
  std::vector<std::uint32_t> bad{4};
  CHECK_THROWS_AS(gather_rows(x, bad), ShapeError);

  std::vector<std::uint32_t> i1{0, 1}, i2{1, 2};
  auto p1 = Tensor<double>::full({2, 2}, 1.0);
  auto p2 = Tensor<double>::full({2, 2}, 2.0);
  std::vector<std::span<const std::uint32_t>> spans{i1, i2};
  auto over = scatter_rows<double>({p1, p2}, spans, 3, Accumulate::kOverwrite);
  CHECK(values(over) == std::vector<double>{1, 1, 2, 2, 2, 2});
  auto added = scatter_rows<double>({p1, p2}, spans, 3, Accumulate::kAdd);
  CHECK(values(added) == std::vector<double>{1, 1, 3, 3, 2, 2});

  auto a = random_tensor({2, 2}, 35);
  auto b = random_tensor({2, 2}, 36);
  auto probe = random_tensor({3, 2}, 37, -1, 1, false);
  for (auto mode : {Accumulate::kOverwrite, Accumulate::kAdd}) {
    CHECK(check([&] { return sum(mul(scatter_rows<double>({a, b}, spans, 3, mode), probe)); },
                {a, b}) <= 1e-5);
  }
  auto src = random_tensor({4, 2}, 38);
  CHECK(check([&] { return sum(mul(gather_rows(src, idx), gather_rows(src, idx))); }, {src}) <=
        1e-5);
}

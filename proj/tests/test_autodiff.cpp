#include <doctest.h>

#include <cmath>

#include "seqseg/autodiff.hpp"
#include "seqseg/rng.hpp"

using namespace seqseg;

namespace {

Tensor filled(std::vector<int> shape, std::initializer_list<double> vals) {
  Tensor t(std::move(shape));
  int i = 0;
  for (double v : vals) t[i++] = v;
  return t;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("conv2d 1x1 kernel is a pointwise linear map") {
  Tape t;
  auto x = t.constant(filled({1, 2, 2}, {1.0, 2.0, 3.0, 4.0}));
  Param w("w", filled({1, 1, 1, 1}, {2.0}));
  Param b("b", filled({1}, {0.5}));
  auto y = t.conv2d(x, t.param(w), t.param(b), 1, 0);
  CHECK(t.value(y).shape() == std::vector<int>{1, 2, 2});
  CHECK(t.value(y)[0] == doctest::Approx(2.5));
  CHECK(t.value(y)[3] == doctest::Approx(8.5));
}

TEST_CASE("conv2d 3x3 center-only kernel with pad 1 is identity") {
  Rng rng(1);
  Tape t;
  Tensor input = random_tensor({2, 4, 4}, rng);
  auto x = t.constant(input);
  Tensor wt({2, 2, 3, 3});
  wt[0 * 18 + 0 * 9 + 4] = 1.0;  // out0 <- in0 center
  wt[1 * 18 + 1 * 9 + 4] = 1.0;  // out1 <- in1 center
  Param w("w", wt);
  Param b("b", Tensor::zeros({2}));
  auto y = t.conv2d(x, t.param(w), t.param(b), 1, 1);
  for (std::int64_t i = 0; i < input.numel(); ++i) {
    CHECK(t.value(y)[i] == doctest::Approx(input[i]));
  }
}

TEST_CASE("conv2d stride-2 output shape") {
  Tape t;
  Rng rng(2);
  auto x = t.constant(random_tensor({3, 8, 8}, rng));
  Param w("w", random_tensor({5, 3, 3, 3}, rng));
  Param b("b", Tensor::zeros({5}));
  auto y = t.conv2d(x, t.param(w), t.param(b), 2, 1);
  CHECK(t.value(y).shape() == std::vector<int>{5, 4, 4});
}

TEST_CASE("conv -> tanh -> dice loss gradients match finite differences") {
  Rng rng(5);
  Param w("w", random_tensor({2, 2, 3, 3}, rng, -0.5, 0.5));
  Param b("b", random_tensor({2}, rng, -0.1, 0.1));
  Tensor input = random_tensor({2, 5, 5}, rng);
  Tensor label({2, 5, 5});
  for (std::int64_t i = 0; i < label.numel(); ++i) label[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;

  auto forward = [&](Tape& t) {
    auto x = t.constant(input);
    auto h = t.tanh_act(t.conv2d(x, t.param(w), t.param(b), 1, 1));
    auto p = t.sigmoid(h);
    return t.dice_pair_loss(p, label);
  };

  Tape t0;
  auto loss = forward(t0);
  w.zero_grad();
  b.zero_grad();
  t0.backward(loss);

  const double h = 1e-6;
  for (Param* prm : {&w, &b}) {
    for (std::int64_t i = 0; i < prm->value.numel(); ++i) {
      const double keep = prm->value[i];
      prm->value[i] = keep + h;
      Tape tp;
      const double fp = tp.scalar(forward(tp));
      prm->value[i] = keep - h;
      Tape tm;
      const double fm = tm.scalar(forward(tm));
      prm->value[i] = keep;
      const double fd = (fp - fm) / (2 * h);
      const double g = prm->grad[i];
      const double denom = std::max({1e-8, std::fabs(fd), std::fabs(g)});
      CHECK(std::fabs(fd - g) / denom < 1e-5);
    }
  }
}

TEST_CASE("detach blocks gradient flow") {
  Rng rng(6);
  Param w("w", random_tensor({1, 1, 1, 1}, rng));
  Param b("b", Tensor::zeros({1}));
  Tensor label = Tensor::full({1, 2, 2}, 1.0);

  Tape t;
  auto x = t.constant(random_tensor({1, 2, 2}, rng));
  auto y = t.conv2d(x, t.param(w), t.param(b), 1, 0);
  auto cut = t.detach(y);
  auto p = t.sigmoid(cut);
  auto loss = t.dice_pair_loss(p, label);
  w.zero_grad();
  b.zero_grad();
  t.backward(loss);
  CHECK(w.grad[0] == 0.0);
  CHECK(b.grad[0] == 0.0);
  CHECK_FALSE(t.requires_grad(cut));
}

TEST_CASE("concat_channels splits gradients by channel block") {
  Rng rng(7);
  Param w("w", random_tensor({1, 3, 1, 1}, rng));
  Param b("b", Tensor::zeros({1}));
  Tensor label = Tensor::full({1, 2, 2}, 1.0);

  Param left("left", random_tensor({2, 2, 2}, rng));
  Param right("right", random_tensor({1, 2, 2}, rng));
  Tape t;
  auto cat = t.concat_channels(t.param(left), t.param(right));
  CHECK(t.value(cat).shape() == std::vector<int>{3, 2, 2});
  auto p = t.sigmoid(t.conv2d(cat, t.param(w), t.param(b), 1, 0));
  auto loss = t.dice_pair_loss(p, label);
  left.zero_grad();
  right.zero_grad();
  w.zero_grad();
  b.zero_grad();
  t.backward(loss);

  double left_norm = 0.0, right_norm = 0.0;
  for (std::int64_t i = 0; i < left.grad.numel(); ++i) left_norm += std::fabs(left.grad[i]);
  for (std::int64_t i = 0; i < right.grad.numel(); ++i) right_norm += std::fabs(right.grad[i]);
  CHECK(left_norm > 0.0);
  CHECK(right_norm > 0.0);
}

TEST_CASE("sum_scalars applies the scale on forward and backward") {
  Rng rng(8);
  Param a("a", random_tensor({1, 1, 1, 1}, rng));
  Param bias("bias", Tensor::zeros({1}));
  Tensor label = Tensor::full({1, 1, 1}, 1.0);

  Tape t;
  auto x = t.constant(Tensor::full({1, 1, 1}, 0.7));
  auto p = t.sigmoid(t.conv2d(x, t.param(a), t.param(bias), 1, 0));
  auto l1 = t.dice_pair_loss(p, label);
  auto l2 = t.dice_pair_loss(p, label);
  auto total = t.sum_scalars({l1, l2}, 0.5);
  CHECK(t.scalar(total) == doctest::Approx(t.scalar(l1)));

  a.zero_grad();
  bias.zero_grad();
  t.backward(total);
  const double g_scaled = a.grad[0];

  Tape t2;
  auto x2 = t2.constant(Tensor::full({1, 1, 1}, 0.7));
  auto p2 = t2.sigmoid(t2.conv2d(x2, t2.param(a), t2.param(bias), 1, 0));
  auto single = t2.dice_pair_loss(p2, label);
  a.zero_grad();
  bias.zero_grad();
  t2.backward(single);
  CHECK(g_scaled == doctest::Approx(a.grad[0]).epsilon(1e-12));
}

TEST_CASE("param leaf is cached per tape and accumulates once") {
  Rng rng(9);
  Param w("w", random_tensor({1, 1, 1, 1}, rng));
  Tape t;
  CHECK(t.param(w) == t.param(w));
}

#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "seqseg/mask_ops.hpp"
#include "seqseg/rng.hpp"

using namespace seqseg;

namespace {

BinaryMask from_bits(int h, int w, std::initializer_list<int> bits) {
  BinaryMask m(h, w);
  int i = 0;
  for (int b : bits) m.data[static_cast<std::size_t>(i++)] = static_cast<std::uint8_t>(b);
  return m;
}

BinaryMask random_mask(int h, int w, Rng& rng, double p = 0.5) {
  BinaryMask m(h, w);
  for (auto& v : m.data) v = rng.uniform() < p ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("dice basics") {
  auto a = from_bits(1, 4, {1, 1, 0, 0});
  auto b = from_bits(1, 4, {0, 1, 1, 0});
  CHECK(dice(a, a) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(dice(a, b) == doctest::Approx(0.5).epsilon(1e-6));

  auto d1 = from_bits(1, 4, {1, 0, 0, 0});
  auto d2 = from_bits(1, 4, {0, 0, 0, 1});
  CHECK(dice(d1, d2) == doctest::Approx(0.0).epsilon(1e-6));

  BinaryMask empty1(2, 2), empty2(2, 2);
  CHECK(dice(empty1, empty2) == doctest::Approx(1.0));

  BinaryMask wrong(1, 5);
  CHECK_THROWS_AS(dice(a, wrong), std::invalid_argument);
}

TEST_CASE("iou and dist basics") {
  auto a = from_bits(1, 4, {1, 1, 0, 0});
  auto b = from_bits(1, 4, {0, 1, 1, 0});
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(dist(a, b) == doctest::Approx(2.0 / 3.0));
  CHECK(dist(a, a) == 0.0);

  auto d1 = from_bits(1, 2, {1, 0});
  auto d2 = from_bits(1, 2, {0, 1});
  CHECK(iou(d1, d2) == 0.0);
  CHECK(dist(d1, d2) == 1.0);

  BinaryMask empty1(3, 3), empty2(3, 3);
  CHECK(iou(empty1, empty2) == 1.0);
}

TEST_CASE("dice/iou symmetry and inequality over random masks") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto a = random_mask(6, 7, rng, rng.uniform(0.1, 0.9));
    auto b = random_mask(6, 7, rng, rng.uniform(0.1, 0.9));
    CHECK(dice(a, b) == dice(b, a));
    CHECK(iou(a, b) == iou(b, a));
    CHECK(dist(a, b) == dist(b, a));
    CHECK(dice(a, b) >= iou(a, b) - 1e-12);
    CHECK(dist(a, b) >= 0.0);
    CHECK(dist(a, b) <= 1.0);
  }
}

TEST_CASE("soft dice loss values") {
  ProbMask p(1, 2);
  p.data = {0.5, 0.5};
  auto y = from_bits(1, 2, {1, 0});
  CHECK(soft_dice_loss(p, y) == doctest::Approx(0.5).epsilon(1e-5));

  ProbMask exact(1, 4);
  exact.data = {1.0, 1.0, 0.0, 0.0};
  auto ye = from_bits(1, 4, {1, 1, 0, 0});
  CHECK(soft_dice_loss(exact, ye) == doctest::Approx(0.0).epsilon(1e-6));

  ProbMask inv(1, 4);
  inv.data = {0.0, 0.0, 1.0, 1.0};
  CHECK(soft_dice_loss(inv, ye) == doctest::Approx(1.0).epsilon(1e-5));

  ProbMask wrong(2, 2);
  CHECK_THROWS_AS(soft_dice_loss(wrong, ye), std::invalid_argument);
}

TEST_CASE("soft dice loss gradient matches central differences") {
  Rng rng(7);
  ProbMask p(8, 8);
  for (auto& v : p.data) v = rng.uniform(0.05, 0.95);
  auto y = random_mask(8, 8, rng);

  auto grad = soft_dice_loss_grad(p, y);
  const double h = 1e-6;
  for (std::size_t j = 0; j < p.data.size(); j += 5) {
    ProbMask plus = p, minus = p;
    plus.data[j] += h;
    minus.data[j] -= h;
    const double fd = (soft_dice_loss(plus, y) - soft_dice_loss(minus, y)) / (2 * h);
    const double denom = std::max({1e-8, std::fabs(fd), std::fabs(grad[j])});
    CHECK(std::fabs(fd - grad[j]) / denom < 1e-4);
  }
}

TEST_CASE("binarize thresholding") {
  ProbMask p(1, 3);
  p.data = {0.49, 0.5, 0.51};
  auto m = binarize(p, 0.5);
  CHECK(m.data[0] == 0);
  CHECK(m.data[1] == 1);  // boundary inclusive
  CHECK(m.data[2] == 1);

  ProbMask hi(2, 2);
  for (auto& v : hi.data) v = 0.9;
  CHECK(binarize(hi).count() == 4);
  ProbMask lo(2, 2);
  for (auto& v : lo.data) v = 0.1;
  CHECK(binarize(lo).count() == 0);

  CHECK_THROWS_AS(binarize(p, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(binarize(p, 1.0), std::invalid_argument);
}

TEST_CASE("majority vote") {
  auto one = from_bits(1, 1, {1});
  auto zero = from_bits(1, 1, {0});
  CHECK(majority_vote({one, one, one}).data[0] == 1);
  CHECK(majority_vote({one, one, zero}).data[0] == 1);
  CHECK(majority_vote({one, zero}).data[0] == 0);  // even tie -> background
  CHECK_THROWS_AS(majority_vote({}), std::invalid_argument);

  Rng rng(3);
  std::vector<BinaryMask> masks;
  for (int i = 0; i < 5; ++i) masks.push_back(random_mask(4, 4, rng));
  auto voted = majority_vote(masks);
  std::vector<BinaryMask> shuffled = {masks[3], masks[0], masks[4], masks[2], masks[1]};
  CHECK(majority_vote(shuffled).data == voted.data);
}

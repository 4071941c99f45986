#include "seqseg/mask_ops.hpp"

#include <stdexcept>
#include <string>

namespace seqseg {

namespace {

void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.height) +
                                "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) +
                                "x" + std::to_string(b.width) + ")");
  }
}

void require_same_shape(const ProbMask& p, const BinaryMask& y, const char* op) {
  if (p.height != y.height || p.width != y.width) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(p.height) +
                                "x" + std::to_string(p.width) + " vs " + std::to_string(y.height) +
                                "x" + std::to_string(y.width) + ")");
  }
}

}  // namespace

std::int64_t BinaryMask::count() const {
  std::int64_t n = 0;
  for (auto v : data) n += v;
  return n;
}

double dice(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b, "dice");
  std::int64_t inter = 0, sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += a.data[i] & b.data[i];
    sa += a.data[i];
    sb += b.data[i];
  }
  return (2.0 * static_cast<double>(inter) + kDiceSmooth) /
         (static_cast<double>(sa + sb) + kDiceSmooth);
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b, "iou");
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += a.data[i] & b.data[i];
    uni += a.data[i] | b.data[i];
  }
  if (uni == 0) return 1.0;  // both empty: agreement on absence
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double dist(const BinaryMask& a, const BinaryMask& b) { return 1.0 - iou(a, b); }

double soft_dice_loss_flat(const double* p, const double* y, std::int64_t n) {
  double num = 0.0, sp = 0.0, sy = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    num += p[i] * y[i];
    sp += p[i];
    sy += y[i];
  }
  return 1.0 - (2.0 * num + kDiceSmooth) / (sp + sy + kDiceSmooth);
}

void soft_dice_loss_grad_flat(const double* p, const double* y, std::int64_t n, double scale,
                              double* out) {
  double num = 0.0, sp = 0.0, sy = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    num += p[i] * y[i];
    sp += p[i];
    sy += y[i];
  }
  const double nsm = 2.0 * num + kDiceSmooth;
  const double den = sp + sy + kDiceSmooth;
  const double inv_den = 1.0 / den;
  const double nd2 = nsm * inv_den * inv_den;
  // d/dp_j [1 - (2*sum(p*y)+eps)/(sum p + sum y + eps)] = N/D^2 - 2*y_j/D
  for (std::int64_t i = 0; i < n; ++i) {
    out[i] += scale * (nd2 - 2.0 * y[i] * inv_den);
  }
}

double soft_dice_loss(const ProbMask& p, const BinaryMask& y) {
  require_same_shape(p, y, "soft_dice_loss");
  double num = 0.0, sp = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    num += p.data[i] * y.data[i];
    sp += p.data[i];
    sy += y.data[i];
  }
  return 1.0 - (2.0 * num + kDiceSmooth) / (sp + sy + kDiceSmooth);
}

std::vector<double> soft_dice_loss_grad(const ProbMask& p, const BinaryMask& y) {
  require_same_shape(p, y, "soft_dice_loss_grad");
  std::vector<double> yd(p.data.size());
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = y.data[i];
  std::vector<double> out(p.data.size(), 0.0);
  soft_dice_loss_grad_flat(p.data.data(), yd.data(), static_cast<std::int64_t>(p.data.size()), 1.0,
                           out.data());
  return out;
}

BinaryMask binarize(const ProbMask& p, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("binarize: threshold must lie in (0,1), got " +
                                std::to_string(threshold));
  }
  BinaryMask out(p.height, p.width);
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    out.data[i] = p.data[i] >= threshold ? 1 : 0;
  }
  return out;
}

BinaryMask majority_vote(const std::vector<BinaryMask>& masks) {
  if (masks.empty()) throw std::invalid_argument("majority_vote: empty mask list");
  for (std::size_t i = 1; i < masks.size(); ++i) {
    require_same_shape(masks[0], masks[i], "majority_vote");
  }
  const auto n = static_cast<std::int64_t>(masks.size());
  BinaryMask out(masks[0].height, masks[0].width);
  for (std::size_t j = 0; j < out.data.size(); ++j) {
    std::int64_t ones = 0;
    for (const auto& m : masks) ones += m.data[j];
    // strictly more than half; even-count ties go to background
    out.data[j] = (2 * ones > n) ? 1 : 0;
  }
  return out;
}

}  // namespace seqseg

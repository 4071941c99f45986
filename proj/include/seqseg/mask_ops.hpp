#pragma once

#include <cstdint>
#include <vector>

namespace seqseg {

// 2-D {0,1} grid, row-major.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  std::int64_t count() const;
  bool empty_mask() const { return count() == 0; }
  bool same_shape(const BinaryMask& o) const { return height == o.height && width == o.width; }
};

// 2-D grid of reals in [0,1], row-major.
struct ProbMask {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  ProbMask() = default;
  ProbMask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
};

inline constexpr double kDiceSmooth = 1e-6;

double dice(const BinaryMask& a, const BinaryMask& b);
double iou(const BinaryMask& a, const BinaryMask& b);
double dist(const BinaryMask& a, const BinaryMask& b);  // 1 - iou

double soft_dice_loss(const ProbMask& p, const BinaryMask& y);
// d loss / d p, same layout as p.
std::vector<double> soft_dice_loss_grad(const ProbMask& p, const BinaryMask& y);

// Flat variants over probability/label buffers of length n (labels are 0/1
// valued doubles). Used on embedding-resolution grids during training.
double soft_dice_loss_flat(const double* p, const double* y, std::int64_t n);
// out[j] += scale * dL/dp[j]
void soft_dice_loss_grad_flat(const double* p, const double* y, std::int64_t n, double scale,
                              double* out);

BinaryMask binarize(const ProbMask& p, double threshold = 0.5);
BinaryMask majority_vote(const std::vector<BinaryMask>& masks);

}  // namespace seqseg

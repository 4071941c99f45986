#pragma once

#include <utility>
#include <vector>

#include "seqseg/mask_ops.hpp"

namespace seqseg {

// Square pairwise-cost matrix; rows index predictions, columns index labels.
struct CostMatrix {
  int n = 0;
  std::vector<double> entries;  // row-major n*n

  CostMatrix() = default;
  explicit CostMatrix(int size) : n(size), entries(static_cast<std::size_t>(size) * size, 0.0) {}

  double& at(int m, int k) { return entries[static_cast<std::size_t>(m) * n + k]; }
  double at(int m, int k) const { return entries[static_cast<std::size_t>(m) * n + k]; }
};

// mapping[m] = label index assigned to prediction m; a bijection on {0..n-1}.
struct Assignment {
  std::vector<int> mapping;
};

CostMatrix build_cost_matrix(const std::vector<ProbMask>& preds,
                             const std::vector<BinaryMask>& labels);

// Minimum-cost bijection. Ties between equal-cost assignments are broken
// lexicographically (lowest row, then lowest column). Total cost is the
// row-ordered sum of the chosen entries.
std::pair<Assignment, double> hungarian(const CostMatrix& cost);

// Exhaustive oracle over all n! permutations; same tie-break. n <= 8.
std::pair<Assignment, double> brute_force_assignment(const CostMatrix& cost);

struct SetLossResult {
  double loss = 0.0;
  Assignment assignment;
};

// Eq.-style set loss: min over permutations of the summed pairwise soft dice
// losses, solved by the Hungarian assignment.
SetLossResult set_loss(const std::vector<ProbMask>& preds, const std::vector<BinaryMask>& labels);

// Gradient of the set loss w.r.t. each prediction, holding the assignment
// fixed (no gradient through the discrete matching).
std::vector<std::vector<double>> set_loss_grad(const std::vector<ProbMask>& preds,
                                               const std::vector<BinaryMask>& labels,
                                               const Assignment& assignment);

}  // namespace seqseg

#include "seqseg/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace seqseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest-augmenting-path assignment (Jonker-Volgenant style) on an n x n
// matrix given as row-major doubles. Returns row -> column mapping.
std::vector<int> solve_lap(const std::vector<double>& cost, int n) {
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);    // col -> row (1-based)
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);  // augmenting path
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> mapping(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) mapping[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  }
  return mapping;
}

double row_ordered_total(const CostMatrix& cost, const std::vector<int>& mapping) {
  double t = 0.0;
  for (int m = 0; m < cost.n; ++m) t += cost.at(m, mapping[static_cast<std::size_t>(m)]);
  return t;
}

void validate(const CostMatrix& cost) {
  if (cost.n < 1 || cost.entries.size() != static_cast<std::size_t>(cost.n) * cost.n) {
    throw std::invalid_argument("hungarian: cost matrix is not square");
  }
  for (double e : cost.entries) {
    if (!std::isfinite(e)) throw std::invalid_argument("hungarian: non-finite cost entry");
  }
}

// Optimal cost of assigning rows[i..] to the given columns; rows are the
// original row indices, cols the surviving column indices.
double completion_cost(const CostMatrix& cost, const std::vector<int>& rows,
                       const std::vector<int>& cols) {
  const int k = static_cast<int>(rows.size());
  if (k == 0) return 0.0;
  std::vector<double> sub(static_cast<std::size_t>(k) * k);
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      sub[static_cast<std::size_t>(a) * k + b] = cost.at(rows[static_cast<std::size_t>(a)],
                                                         cols[static_cast<std::size_t>(b)]);
    }
  }
  auto sub_map = solve_lap(sub, k);
  double t = 0.0;
  for (int a = 0; a < k; ++a) t += sub[static_cast<std::size_t>(a) * k + sub_map[static_cast<std::size_t>(a)]];
  return t;
}

}  // namespace

CostMatrix build_cost_matrix(const std::vector<ProbMask>& preds,
                             const std::vector<BinaryMask>& labels) {
  if (preds.empty() || preds.size() != labels.size()) {
    throw std::invalid_argument("build_cost_matrix: need |preds| == |labels| >= 1, got " +
                                std::to_string(preds.size()) + " and " +
                                std::to_string(labels.size()));
  }
  const int k = static_cast<int>(preds.size());
  CostMatrix cost(k);
  for (int m = 0; m < k; ++m) {
    for (int j = 0; j < k; ++j) {
      cost.at(m, j) = soft_dice_loss(preds[static_cast<std::size_t>(m)],
                                     labels[static_cast<std::size_t>(j)]);
    }
  }
  return cost;
}

std::pair<Assignment, double> hungarian(const CostMatrix& cost) {
  validate(cost);
  const int n = cost.n;
  auto base = solve_lap(cost.entries, n);
  const double opt = row_ordered_total(cost, base);
  // Refine to the lexicographically smallest optimal mapping: fix rows in
  // order, keeping the smallest column whose completion stays optimal.
  const double tol = 1e-9 * std::max(1.0, std::fabs(opt));
  std::vector<int> mapping(static_cast<std::size_t>(n), -1);
  std::vector<int> avail(static_cast<std::size_t>(n));
  std::iota(avail.begin(), avail.end(), 0);
  double prefix = 0.0;
  for (int r = 0; r < n; ++r) {
    std::vector<int> rest_rows;
    for (int rr = r + 1; rr < n; ++rr) rest_rows.push_back(rr);
    int chosen = -1;
    for (std::size_t ci = 0; ci < avail.size(); ++ci) {
      int c = avail[ci];
      std::vector<int> rest_cols;
      for (std::size_t cj = 0; cj < avail.size(); ++cj) {
        if (cj != ci) rest_cols.push_back(avail[cj]);
      }
      double total = prefix + cost.at(r, c) + completion_cost(cost, rest_rows, rest_cols);
      if (total <= opt + tol) {
        chosen = c;
        avail.erase(avail.begin() + static_cast<std::ptrdiff_t>(ci));
        break;
      }
    }
    if (chosen < 0) {  // numerical fallback; keep the unrefined optimum
      mapping = base;
      break;
    }
    mapping[static_cast<std::size_t>(r)] = chosen;
    prefix += cost.at(r, chosen);
  }
  return {Assignment{mapping}, row_ordered_total(cost, mapping)};
}

std::pair<Assignment, double> brute_force_assignment(const CostMatrix& cost) {
  validate(cost);
  const int n = cost.n;
  if (n > 8) throw std::length_error("brute_force_assignment: size limit is 8, got " +
                                     std::to_string(n));
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_total = row_ordered_total(cost, perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    double t = row_ordered_total(cost, perm);
    if (t < best_total) {  // keep the first (lexicographically smallest) minimizer
      best_total = t;
      best = perm;
    }
  }
  return {Assignment{best}, best_total};
}

SetLossResult set_loss(const std::vector<ProbMask>& preds, const std::vector<BinaryMask>& labels) {
  auto cost = build_cost_matrix(preds, labels);
  auto [assignment, total] = hungarian(cost);
  return {total, std::move(assignment)};
}

std::vector<std::vector<double>> set_loss_grad(const std::vector<ProbMask>& preds,
                                               const std::vector<BinaryMask>& labels,
                                               const Assignment& assignment) {
  if (assignment.mapping.size() != preds.size()) {
    throw std::invalid_argument("set_loss_grad: assignment size mismatch");
  }
  std::vector<std::vector<double>> grads;
  grads.reserve(preds.size());
  for (std::size_t m = 0; m < preds.size(); ++m) {
    grads.push_back(soft_dice_loss_grad(
        preds[m], labels[static_cast<std::size_t>(assignment.mapping[m])]));
  }
  return grads;
}

}  // namespace seqseg

#pragma once

#include <string>
#include <vector>

#include "seqseg/mask_ops.hpp"

namespace seqseg {

// Generalised energy distance between a predicted and a reference mask set,
// with pairwise distance 1 - IoU. Expectations are empirical means over all
// ordered pairs, self-pairs included, so ged(A, A) == 0 exactly. Finite-sample
// values may be negative; they are reported as computed.
double ged(const std::vector<BinaryMask>& pred_masks, const std::vector<BinaryMask>& label_masks);

// Majority-vote the predictions, then mean dice against each label.
double dice_avg(const std::vector<BinaryMask>& pred_masks,
                const std::vector<BinaryMask>& label_masks);

struct WilcoxonResult {
  double statistic = 0.0;    // W = min(W+, W-)
  double p_two_sided = 1.0;
};

// Paired two-sided Wilcoxon signed-rank test. Zero differences are dropped,
// tied |differences| get average ranks. Exact p by enumerating all 2^n sign
// patterns for n <= 12, normal approximation with continuity correction above.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& scores_a,
                                    const std::vector<double>& scores_b);

struct EvalScores {
  std::vector<std::string> sample_ids;
  std::vector<double> per_sample_ged;
  std::vector<double> per_sample_dice_avg;
  double mean_ged = 0.0;
  double mean_dice_avg = 0.0;
  int num_samples = 0;

  void finalize();  // recompute means and num_samples from the lists
  std::string to_json_string() const;
  static EvalScores from_json_string(const std::string& text);
  void write_csv(const std::string& path) const;
};

}  // namespace seqseg

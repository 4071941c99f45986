#include "seqseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "seqseg/errors.hpp"

namespace seqseg {

namespace {

double mean_pairwise_dist(const std::vector<BinaryMask>& a, const std::vector<BinaryMask>& b) {
  double total = 0.0;
  for (const auto& x : a) {
    for (const auto& y : b) total += dist(x, y);
  }
  return total / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

double ged(const std::vector<BinaryMask>& pred_masks, const std::vector<BinaryMask>& label_masks) {
  if (pred_masks.empty() || label_masks.empty()) {
    throw std::invalid_argument("ged: mask lists must be non-empty");
  }
  const double cross = mean_pairwise_dist(pred_masks, label_masks);
  const double within_labels = mean_pairwise_dist(label_masks, label_masks);
  const double within_preds = mean_pairwise_dist(pred_masks, pred_masks);
  return 2.0 * cross - within_labels - within_preds;
}

double dice_avg(const std::vector<BinaryMask>& pred_masks,
                const std::vector<BinaryMask>& label_masks) {
  if (pred_masks.empty() || label_masks.empty()) {
    throw std::invalid_argument("dice_avg: mask lists must be non-empty");
  }
  BinaryMask vote = majority_vote(pred_masks);
  double total = 0.0;
  for (const auto& y : label_masks) total += dice(vote, y);
  return total / static_cast<double>(label_masks.size());
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& scores_a,
                                    const std::vector<double>& scores_b) {
  if (scores_a.size() != scores_b.size()) {
    throw std::invalid_argument("wilcoxon_signed_rank: paired lists must have equal length");
  }
  if (scores_a.empty()) {
    throw std::invalid_argument("wilcoxon_signed_rank: need at least one pair");
  }

  std::vector<double> diffs;
  diffs.reserve(scores_a.size());
  for (std::size_t i = 0; i < scores_a.size(); ++i) {
    double d = scores_a[i] - scores_b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  const int n = static_cast<int>(diffs.size());
  if (n == 0) return {0.0, 1.0};

  // Rank |d| ascending, average ranks for ties.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return std::fabs(diffs[static_cast<std::size_t>(i)]) <
           std::fabs(diffs[static_cast<std::size_t>(j)]);
  });
  std::vector<double> ranks(static_cast<std::size_t>(n), 0.0);
  std::vector<int> tie_sizes;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && std::fabs(diffs[static_cast<std::size_t>(order[static_cast<std::size_t>(j + 1)])]) ==
                            std::fabs(diffs[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])])) {
      ++j;
    }
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (int t = i; t <= j; ++t) ranks[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])] = avg_rank;
    tie_sizes.push_back(j - i + 1);
    i = j + 1;
  }

  double w_plus = 0.0, w_minus = 0.0;
  for (int k = 0; k < n; ++k) {
    if (diffs[static_cast<std::size_t>(k)] > 0.0) {
      w_plus += ranks[static_cast<std::size_t>(k)];
    } else {
      w_minus += ranks[static_cast<std::size_t>(k)];
    }
  }
  const double w = std::min(w_plus, w_minus);

  double p;
  if (n <= 12) {
    const std::uint32_t patterns = 1u << n;
    std::uint32_t count = 0;
    const double rank_sum = std::accumulate(ranks.begin(), ranks.end(), 0.0);
    for (std::uint32_t mask = 0; mask < patterns; ++mask) {
      double wp = 0.0;
      for (int k = 0; k < n; ++k) {
        if (mask & (1u << k)) wp += ranks[static_cast<std::size_t>(k)];
      }
      if (std::min(wp, rank_sum - wp) <= w + 1e-12) ++count;
    }
    p = static_cast<double>(count) / static_cast<double>(patterns);
  } else {
    const double nn = static_cast<double>(n);
    double tie_corr = 0.0;
    for (int t : tie_sizes) {
      double td = static_cast<double>(t);
      tie_corr += td * td * td - td;
    }
    const double mu = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_corr / 48.0;
    if (var <= 0.0) return {w, 1.0};
    const double z = (w - mu + 0.5) / std::sqrt(var);  // continuity correction toward the mean
    p = std::min(1.0, 2.0 * std_normal_cdf(z));
  }
  return {w, std::min(1.0, std::max(0.0, p))};
}

void EvalScores::finalize() {
  num_samples = static_cast<int>(per_sample_ged.size());
  if (per_sample_dice_avg.size() != per_sample_ged.size() ||
      sample_ids.size() != per_sample_ged.size()) {
    throw std::invalid_argument("EvalScores: per-sample lists must share one length");
  }
  mean_ged = num_samples == 0
                 ? 0.0
                 : std::accumulate(per_sample_ged.begin(), per_sample_ged.end(), 0.0) / num_samples;
  mean_dice_avg = num_samples == 0 ? 0.0
                                   : std::accumulate(per_sample_dice_avg.begin(),
                                                     per_sample_dice_avg.end(), 0.0) /
                                         num_samples;
}

std::string EvalScores::to_json_string() const {
  nlohmann::json j;
  j["num_samples"] = num_samples;
  j["mean_ged"] = mean_ged;
  j["mean_dice_avg"] = mean_dice_avg;
  j["sample_ids"] = sample_ids;
  j["per_sample_ged"] = per_sample_ged;
  j["per_sample_dice_avg"] = per_sample_dice_avg;
  return j.dump(2);
}

EvalScores EvalScores::from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("EvalScores: bad JSON: ") + e.what());
  }
  EvalScores s;
  try {
    s.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    s.per_sample_ged = j.at("per_sample_ged").get<std::vector<double>>();
    s.per_sample_dice_avg = j.at("per_sample_dice_avg").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("EvalScores: missing field: ") + e.what());
  }
  s.finalize();
  return s;
}

void EvalScores::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("EvalScores: cannot write " + path);
  out << "sample_id,ged,dice_avg\n";
  out.precision(17);
  for (std::size_t i = 0; i < sample_ids.size(); ++i) {
    out << sample_ids[i] << "," << per_sample_ged[i] << "," << per_sample_dice_avg[i] << "\n";
  }
}

}  // namespace seqseg

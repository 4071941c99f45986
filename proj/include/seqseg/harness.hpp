#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqseg/metrics.hpp"
#include "seqseg/model.hpp"
#include "seqseg/synthdata.hpp"

namespace seqseg {

struct TrainConfig {
  std::string dataset_dir;
  std::string variant = "seqsam";  // "seqsam" | "mcl"
  int M_train = 3;
  int K = 3;
  bool bptt = true;
  std::string selector = "chunked";  // "chunked" | "random_k" | "first_k"
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  int batch_size = 2;
  int max_epochs = 200;
  int patience = 10;
  std::uint64_t seed = 0;
  std::string checkpoint_path = "checkpoint.bin";
  ModelConfig model;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// SEQSEG_SEED, when set, overrides the seed of any config loaded for a run.
std::optional<std::uint64_t> env_seed_override();
TrainConfig load_train_config(const std::string& path);
DatasetConfig load_dataset_config(const std::string& path);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  double initial_val_loss = 0.0;  // validation loss of the untrained model
  int best_epoch = 0;             // 0 = initialization
  double best_val_loss = 0.0;
  std::string checkpoint_path;
  std::string log_path;
};

TrainResult train(const TrainConfig& cfg);

struct EvalReport {
  EvalScores scores;
  std::string variant;
  int M_inference = 0;
  std::uint64_t seed = 0;
  std::string split;
  std::string dataset_dir;
  std::uint32_t data_checksum = 0;
  double wall_clock_seconds = 0.0;
  std::string csv_path;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

EvalReport evaluate(const std::string& checkpoint_path, const std::string& dataset_dir,
                    const std::string& split, int M_inference);
// Writes <path> (JSON) and the per-sample CSV next to it.
void write_report(EvalReport& report, const std::string& path);
EvalReport read_report(const std::string& path);

struct CompareResult {
  std::string metric;
  double p_value = 1.0;
  double statistic = 0.0;
  std::string better;  // report name or "tie"
  double mean_a = 0.0;
  double mean_b = 0.0;
  bool significant = false;  // at the configured threshold

  nlohmann::json to_json() const;
};

CompareResult compare(const EvalReport& a, const EvalReport& b, const std::string& metric,
                      double significance_threshold = 0.01);

struct AblationRow {
  std::string variant;
  double dice_avg = 0.0;
  double ged = 0.0;
  double dice_avg_m10 = 0.0;
  double ged_m10 = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  int eval_m = 0;
  int m10 = 10;
  std::uint64_t seed = 0;
  std::uint32_t data_checksum = 0;
  std::string dataset_dir;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Trains and evaluates full / random_k / first_k / no_bptt with a shared seed
// and dataset; writes per-variant artifacts plus ablation.json/ablation.txt.
AblationTable ablate(const TrainConfig& base, const std::string& out_dir);

// One grid image per sample: input | K labels | M binarized predictions.
std::vector<std::string> render_panels(const std::string& checkpoint_path,
                                       const std::string& dataset_dir, const std::string& split,
                                       int M, const std::string& out_dir);

}  // namespace seqseg

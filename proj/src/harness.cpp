#include "seqseg/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "seqseg/errors.hpp"
#include "seqseg/image_io.hpp"
#include "seqseg/optimizer.hpp"
#include "seqseg/sequence_control.hpp"

namespace fs = std::filesystem;

namespace seqseg {

void TrainConfig::validate() const {
  if (dataset_dir.empty()) throw std::invalid_argument("TrainConfig: dataset_dir is required");
  if (variant != "seqsam" && variant != "mcl") {
    throw std::invalid_argument("TrainConfig: unknown variant " + variant);
  }
  if (selector != "chunked" && selector != "random_k" && selector != "first_k") {
    throw std::invalid_argument("TrainConfig: unknown selector " + selector);
  }
  if (K < 1 || M_train < 1) throw std::invalid_argument("TrainConfig: K and M_train must be >= 1");
  if (M_train < K) {
    throw std::invalid_argument("TrainConfig: M_train must be >= K (M_train == K is the "
                                "degenerate case)");
  }
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (max_epochs < 0) throw std::invalid_argument("TrainConfig: max_epochs must be >= 0");
  if (patience < 0) throw std::invalid_argument("TrainConfig: patience must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (checkpoint_path.empty()) throw std::invalid_argument("TrainConfig: checkpoint_path required");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"dataset_dir", dataset_dir},
          {"variant", variant},
          {"M_train", M_train},
          {"K", K},
          {"bptt", bptt},
          {"selector", selector},
          {"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"seed", seed},
          {"checkpoint_path", checkpoint_path},
          {"model", model.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
  c.variant = j.value("variant", c.variant);
  c.M_train = j.value("M_train", c.M_train);
  c.K = j.value("K", c.K);
  c.bptt = j.value("bptt", c.bptt);
  c.selector = j.value("selector", c.selector);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_path = j.value("checkpoint_path", c.checkpoint_path);
  if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
  return c;
}

std::optional<std::uint64_t> env_seed_override() {
  const char* v = std::getenv("SEQSEG_SEED");
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  unsigned long long parsed = std::strtoull(v, &end, 10);
  if (end == v || *end != '\0') {
    throw std::invalid_argument("SEQSEG_SEED must be a non-negative integer, got: " +
                                std::string(v));
  }
  return static_cast<std::uint64_t>(parsed);
}

namespace {

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad JSON in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

TrainConfig load_train_config(const std::string& path) {
  TrainConfig cfg = TrainConfig::from_json(load_json_file(path));
  if (auto s = env_seed_override()) cfg.seed = *s;
  return cfg;
}

DatasetConfig load_dataset_config(const std::string& path) {
  DatasetConfig cfg = DatasetConfig::from_json(load_json_file(path));
  if (auto s = env_seed_override()) cfg.seed = *s;
  return cfg;
}

namespace {

struct PreparedSample {
  const Sample* sample = nullptr;
  std::vector<Tensor> labels_embed;  // K labels at embedding resolution
};

std::vector<PreparedSample> prepare(const std::vector<Sample>& samples, int downsample) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    PreparedSample p;
    p.sample = &s;
    for (const auto& label : s.labels) {
      p.labels_embed.push_back(downsample_label(label, downsample));
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<int> training_selection(const std::string& selector, int M, int K, Rng& rng) {
  if (selector == "chunked") return sample_per_chunk(partition(M, K), rng);
  if (selector == "random_k") return select_ablation_indices(M, K, AblationMode::kRandomK, rng);
  return select_ablation_indices(M, K, AblationMode::kFirstK, rng);
}

ModelConfig resolve_model_config(const TrainConfig& cfg) {
  ModelConfig mc = cfg.model;
  mc.variant = cfg.variant;
  if (cfg.variant == "mcl") mc.mcl_heads = cfg.M_train;
  return mc;
}

// Forward one sample to its training loss node; `selection` is the
// pre-drawn mask selection (ignored for the mcl variant).
Tape::NodeId sample_loss(Tape& tape, Model& model, const TrainConfig& cfg,
                         const PreparedSample& ps, const std::vector<int>& selection) {
  if (cfg.variant == "mcl") {
    auto logits = model.mcl_forward(tape, ps.sample->image, ps.sample->bbox);
    return build_mcl_loss(tape, logits, ps.labels_embed);
  }
  auto unrolled = model.unroll(tape, ps.sample->image, ps.sample->bbox, cfg.M_train, cfg.bptt);
  std::vector<Tape::NodeId> selected;
  selected.reserve(selection.size());
  for (int i : selection) selected.push_back(unrolled.logits[static_cast<std::size_t>(i)]);
  return build_set_loss(tape, selected, ps.labels_embed).loss;
}

// Evaluate `jobs` concurrently on `workers` threads. Selections are drawn by
// the caller so rng order is independent of scheduling; results land in
// per-job slots, keeping every later reduction deterministic.
void run_jobs(int n, int workers, const std::function<void(int)>& job) {
  if (n <= 1 || workers <= 1) {
    for (int i = 0; i < n; ++i) job(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int i = w; i < n; i += workers) job(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

int hardware_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(std::min(hc, 8u));
}

double validation_loss(Model& model, const TrainConfig& cfg,
                       const std::vector<PreparedSample>& val, int epoch) {
  if (val.empty()) return 0.0;
  Rng vrng(Rng::derive(cfg.seed ^ 0x5A11DA7EULL, static_cast<std::uint64_t>(epoch)));
  const int n = static_cast<int>(val.size());
  std::vector<std::vector<int>> selections(static_cast<std::size_t>(n));
  if (cfg.variant != "mcl") {
    for (auto& s : selections) s = training_selection(cfg.selector, cfg.M_train, cfg.K, vrng);
  }
  std::vector<double> losses(static_cast<std::size_t>(n), 0.0);
  run_jobs(n, hardware_workers(), [&](int i) {
    Tape tape;
    losses[static_cast<std::size_t>(i)] = tape.scalar(
        sample_loss(tape, model, cfg, val[static_cast<std::size_t>(i)],
                    selections[static_cast<std::size_t>(i)]));
  });
  double total = 0.0;
  for (double l : losses) total += l;  // fixed order
  return total / static_cast<double>(n);
}

nlohmann::json checkpoint_extra(const TrainConfig& cfg) {
  return {{"variant", cfg.variant}, {"M_train", cfg.M_train},   {"K", cfg.K},
          {"seed", cfg.seed},       {"selector", cfg.selector}, {"bptt", cfg.bptt},
          {"dataset_dir", cfg.dataset_dir}};
}

void write_train_log(const TrainConfig& cfg, const TrainResult& result) {
  nlohmann::json log;
  log["config"] = cfg.to_json();
  log["initial_val_loss"] = result.initial_val_loss;
  log["best_epoch"] = result.best_epoch;
  log["best_val_loss"] = result.best_val_loss;
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : result.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  }
  log["epochs"] = std::move(epochs);
  std::ofstream out(result.log_path);
  if (!out) throw FormatError("cannot write training log: " + result.log_path);
  out << log.dump(2) << "\n";
}

}  // namespace

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  Dataset ds = read_dataset(cfg.dataset_dir);
  if (ds.config.num_annotators != cfg.K) {
    throw std::invalid_argument("TrainConfig: K=" + std::to_string(cfg.K) +
                                " but dataset has K=" + std::to_string(ds.config.num_annotators));
  }
  ModelConfig mc = resolve_model_config(cfg);
  if (mc.image_size != ds.config.image_size) {
    throw std::invalid_argument("TrainConfig: model image_size does not match dataset");
  }

  Model model(mc, cfg.seed);
  AdamWConfig ocfg;
  ocfg.lr = cfg.learning_rate;
  ocfg.weight_decay = cfg.weight_decay;
  AdamW opt(ocfg, model.params());

  auto train_set = prepare(ds.train, mc.downsample);
  auto val_set = prepare(ds.val, mc.downsample);

  TrainResult result;
  result.checkpoint_path = cfg.checkpoint_path;
  result.log_path = cfg.checkpoint_path + ".log.json";
  result.best_epoch = 0;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  model.save_checkpoint(cfg.checkpoint_path, checkpoint_extra(cfg));
  result.initial_val_loss = validation_loss(model, cfg, val_set, 0);

  Rng rng(Rng::derive(cfg.seed, 0x7EA11ULL));
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  // Per-batch-member gradient buffers: workers write disjoint slots, the
  // reduce below runs in sample order, so results match a sequential pass.
  const int workers = hardware_workers();
  std::vector<std::vector<Tensor>> member_grads(static_cast<std::size_t>(cfg.batch_size));
  for (auto& bufs : member_grads) {
    bufs.reserve(model.params().size());
    for (const auto& p : model.params()) bufs.push_back(Tensor::zeros(p.value.shape()));
  }

  int epochs_since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    long seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const int members = static_cast<int>(end - start);
      const double inv_batch = 1.0 / static_cast<double>(members);

      std::vector<std::vector<int>> selections(static_cast<std::size_t>(members));
      if (cfg.variant != "mcl") {
        for (auto& s : selections) s = training_selection(cfg.selector, cfg.M_train, cfg.K, rng);
      }
      std::vector<double> losses(static_cast<std::size_t>(members), 0.0);
      run_jobs(members, workers, [&](int i) {
        auto& bufs = member_grads[static_cast<std::size_t>(i)];
        for (auto& b : bufs) std::fill(b.vec().begin(), b.vec().end(), 0.0);
        const auto& ps = train_set[static_cast<std::size_t>(order[start + i])];
        Tape tape;
        tape.set_param_grad_buffers(&bufs);
        auto loss_node = sample_loss(tape, model, cfg, ps, selections[static_cast<std::size_t>(i)]);
        losses[static_cast<std::size_t>(i)] = tape.scalar(loss_node);
        tape.backward(loss_node, inv_batch);
      });

      opt.zero_grad();
      for (int i = 0; i < members; ++i) {
        const double loss = losses[static_cast<std::size_t>(i)];
        if (!std::isfinite(loss)) {
          throw TrainingDivergenceError(
              "training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
              std::to_string(start / cfg.batch_size) + " (sample " +
              train_set[static_cast<std::size_t>(order[start + i])].sample->id + ")");
        }
        epoch_loss += loss;
        ++seen;
        for (std::size_t pi = 0; pi < model.params().size(); ++pi) {
          auto& dst = model.params()[pi].grad;
          const auto& src = member_grads[static_cast<std::size_t>(i)][pi];
          for (std::int64_t j = 0; j < dst.numel(); ++j) dst[j] += src[j];
        }
      }
      opt.step();
    }
    const double train_loss = seen > 0 ? epoch_loss / static_cast<double>(seen) : 0.0;
    const double val_loss = validation_loss(model, cfg, val_set, epoch);
    result.epochs.push_back({epoch, train_loss, val_loss});
    std::cerr << "epoch " << epoch << ": train " << train_loss << " val " << val_loss << "\n";

    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      epochs_since_best = 0;
      model.save_checkpoint(cfg.checkpoint_path, checkpoint_extra(cfg));
    } else {
      ++epochs_since_best;
    }
    write_train_log(cfg, result);
    if (epochs_since_best > cfg.patience) break;
  }
  if (result.epochs.empty()) write_train_log(cfg, result);

  return result;
}

namespace {

BinaryMask logits_to_mask(const Tensor& logits, int factor) {
  Tensor prob(logits.shape());
  for (std::int64_t i = 0; i < logits.numel(); ++i) prob[i] = 1.0 / (1.0 + std::exp(-logits[i]));
  return binarize(upsample_prob_nearest(prob, factor), 0.5);
}

std::vector<BinaryMask> predict_masks(Model& model, const Sample& s, int M) {
  Tape tape;
  std::vector<Tape::NodeId> logit_nodes;
  if (model.config().variant == "seqsam") {
    logit_nodes = model.unroll(tape, s.image, s.bbox, M, /*bptt=*/true).logits;
  } else {
    auto heads = model.mcl_forward(tape, s.image, s.bbox);
    logit_nodes = select_inference(heads, M);
  }
  std::vector<BinaryMask> masks;
  masks.reserve(logit_nodes.size());
  for (auto id : logit_nodes) {
    masks.push_back(logits_to_mask(tape.value(id), model.config().downsample));
  }
  return masks;
}

}  // namespace

EvalReport evaluate(const std::string& checkpoint_path, const std::string& dataset_dir,
                    const std::string& split, int M_inference) {
  if (M_inference < 1) throw std::invalid_argument("evaluate: M_inference must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();

  nlohmann::json extra;
  Model model = Model::load_checkpoint(checkpoint_path, &extra);
  if (model.config().variant == "mcl" && M_inference > model.config().mcl_heads) {
    throw std::invalid_argument("evaluate: mcl checkpoint has " +
                                std::to_string(model.config().mcl_heads) + " heads, cannot emit " +
                                std::to_string(M_inference) + " masks");
  }
  Dataset ds = read_dataset(dataset_dir);
  if (ds.config.image_size != model.config().image_size) {
    throw FormatError("evaluate: checkpoint image_size does not match dataset " + dataset_dir);
  }
  const auto& samples = ds.split(split);

  EvalReport report;
  report.variant = extra.value("variant", model.config().variant);
  report.M_inference = M_inference;
  report.seed = extra.value("seed", 0ULL);
  report.split = split;
  report.dataset_dir = dataset_dir;
  report.data_checksum = dataset_checksum(dataset_dir);

  const int n = static_cast<int>(samples.size());
  report.scores.sample_ids.resize(static_cast<std::size_t>(n));
  report.scores.per_sample_ged.resize(static_cast<std::size_t>(n));
  report.scores.per_sample_dice_avg.resize(static_cast<std::size_t>(n));
  run_jobs(n, hardware_workers(), [&](int i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    auto preds = predict_masks(model, s, M_inference);
    report.scores.sample_ids[static_cast<std::size_t>(i)] = s.id;
    report.scores.per_sample_ged[static_cast<std::size_t>(i)] = ged(preds, s.labels);
    report.scores.per_sample_dice_avg[static_cast<std::size_t>(i)] = dice_avg(preds, s.labels);
  });
  report.scores.finalize();
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["variant"] = variant;
  j["M_inference"] = M_inference;
  j["seed"] = seed;
  j["split"] = split;
  j["dataset_dir"] = dataset_dir;
  j["dataset_checksum"] = data_checksum;
  j["wall_clock_seconds"] = wall_clock_seconds;
  j["csv_path"] = csv_path;
  j["scores"] = nlohmann::json::parse(scores.to_json_string());
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.variant = j.at("variant").get<std::string>();
    r.M_inference = j.at("M_inference").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.split = j.at("split").get<std::string>();
    r.dataset_dir = j.at("dataset_dir").get<std::string>();
    r.data_checksum = j.at("dataset_checksum").get<std::uint32_t>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    r.csv_path = j.value("csv_path", "");
    r.scores = EvalScores::from_json_string(j.at("scores").dump());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("EvalReport: missing or bad field: ") + e.what());
  }
  return r;
}

void write_report(EvalReport& report, const std::string& path) {
  fs::path p(path);
  fs::path csv = p;
  csv.replace_extension(".csv");
  report.csv_path = csv.string();
  report.scores.write_csv(report.csv_path);
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write report: " + path);
  out << report.to_json().dump(2) << "\n";
}

EvalReport read_report(const std::string& path) {
  return EvalReport::from_json(load_json_file(path));
}

nlohmann::json CompareResult::to_json() const {
  return {{"metric", metric},   {"p_value", p_value}, {"statistic", statistic},
          {"better", better},   {"mean_a", mean_a},   {"mean_b", mean_b},
          {"significant", significant}};
}

CompareResult compare(const EvalReport& a, const EvalReport& b, const std::string& metric,
                      double significance_threshold) {
  if (metric != "ged" && metric != "dice_avg") {
    throw std::invalid_argument("compare: metric must be ged or dice_avg, got " + metric);
  }
  if (a.scores.sample_ids != b.scores.sample_ids) {
    throw std::invalid_argument("compare: reports are not paired (sample ids differ)");
  }
  const auto& sa = metric == "ged" ? a.scores.per_sample_ged : a.scores.per_sample_dice_avg;
  const auto& sb = metric == "ged" ? b.scores.per_sample_ged : b.scores.per_sample_dice_avg;
  auto wr = wilcoxon_signed_rank(sa, sb);

  CompareResult r;
  r.metric = metric;
  r.p_value = wr.p_two_sided;
  r.statistic = wr.statistic;
  r.mean_a = metric == "ged" ? a.scores.mean_ged : a.scores.mean_dice_avg;
  r.mean_b = metric == "ged" ? b.scores.mean_ged : b.scores.mean_dice_avg;
  const bool lower_better = metric == "ged";
  if (r.mean_a == r.mean_b) {
    r.better = "tie";
  } else if ((lower_better && r.mean_a < r.mean_b) || (!lower_better && r.mean_a > r.mean_b)) {
    r.better = "a";
  } else {
    r.better = "b";
  }
  r.significant = r.p_value < significance_threshold && r.better != "tie";
  return r;
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"variant", r.variant},
                         {"dice_avg", r.dice_avg},
                         {"ged", r.ged},
                         {"dice_avg_m10", r.dice_avg_m10},
                         {"ged_m10", r.ged_m10}});
  }
  return {{"eval_m", eval_m},
          {"m10", m10},
          {"seed", seed},
          {"dataset_checksum", data_checksum},
          {"dataset_dir", dataset_dir},
          {"rows", rows_json}};
}

std::string AblationTable::to_text() const {
  char line[160];
  std::string out;
  std::snprintf(line, sizeof(line), "ablation (seed %llu, eval M=%d / M=%d, dataset crc %08x)\n",
                static_cast<unsigned long long>(seed), eval_m, m10, data_checksum);
  out += line;
  std::snprintf(line, sizeof(line), "%-10s %12s %12s %14s %14s\n", "variant", "dice_avg", "ged",
                "dice_avg@M10", "ged@M10");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-10s %12.4f %12.4f %14.4f %14.4f\n", r.variant.c_str(),
                  r.dice_avg, r.ged, r.dice_avg_m10, r.ged_m10);
    out += line;
  }
  return out;
}

AblationTable ablate(const TrainConfig& base, const std::string& out_dir) {
  base.validate();
  if (base.variant != "seqsam") {
    throw std::invalid_argument("ablate: ablations are defined for the seqsam variant");
  }
  if (base.M_train <= base.K) {
    throw std::invalid_argument("ablate: requires M_train > K so selection is non-trivial");
  }
  fs::create_directories(out_dir);

  struct VariantSpec {
    const char* name;
    const char* selector;
    bool bptt;
  };
  const VariantSpec variants[4] = {{"full", "chunked", true},
                                   {"random_k", "random_k", true},
                                   {"first_k", "first_k", true},
                                   {"no_bptt", "chunked", false}};

  AblationTable table;
  table.eval_m = base.M_train;
  table.m10 = 10;
  table.seed = base.seed;
  table.dataset_dir = base.dataset_dir;
  table.data_checksum = dataset_checksum(base.dataset_dir);

  for (const auto& v : variants) {
    TrainConfig cfg = base;
    cfg.selector = v.selector;
    cfg.bptt = v.bptt;
    const fs::path vdir = fs::path(out_dir) / v.name;
    fs::create_directories(vdir);
    cfg.checkpoint_path = (vdir / "checkpoint.bin").string();
    train(cfg);

    EvalReport main_report = evaluate(cfg.checkpoint_path, cfg.dataset_dir, "test", table.eval_m);
    write_report(main_report, (vdir / ("report_m" + std::to_string(table.eval_m) + ".json")).string());
    EvalReport m10_report = evaluate(cfg.checkpoint_path, cfg.dataset_dir, "test", table.m10);
    write_report(m10_report, (vdir / ("report_m" + std::to_string(table.m10) + ".json")).string());

    AblationRow row;
    row.variant = v.name;
    row.dice_avg = main_report.scores.mean_dice_avg;
    row.ged = main_report.scores.mean_ged;
    row.dice_avg_m10 = m10_report.scores.mean_dice_avg;
    row.ged_m10 = m10_report.scores.mean_ged;
    table.rows.push_back(row);
  }

  std::ofstream jout(fs::path(out_dir) / "ablation.json");
  jout << table.to_json().dump(2) << "\n";
  std::ofstream tout(fs::path(out_dir) / "ablation.txt");
  tout << table.to_text();
  if (!jout || !tout) throw FormatError("cannot write ablation outputs to " + out_dir);
  return table;
}

std::vector<std::string> render_panels(const std::string& checkpoint_path,
                                       const std::string& dataset_dir, const std::string& split,
                                       int M, const std::string& out_dir) {
  Model model = Model::load_checkpoint(checkpoint_path);
  Dataset ds = read_dataset(dataset_dir);
  const auto& samples = ds.split(split);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw FormatError("cannot create panel directory " + out_dir + ": " + ec.message());

  const int s = ds.config.image_size;
  std::vector<std::string> written;
  for (const auto& sample : samples) {
    auto preds = predict_masks(model, sample, M);
    const int tiles = 1 + static_cast<int>(sample.labels.size()) + M;
    GrayImage grid;
    grid.height = s;
    grid.width = tiles * s;
    grid.pixels.assign(static_cast<std::size_t>(grid.height) * grid.width, 0);

    auto blit_mask = [&](const BinaryMask& m, int tile) {
      for (int r = 0; r < s; ++r) {
        for (int c = 0; c < s; ++c) {
          grid.pixels[static_cast<std::size_t>(r) * grid.width + tile * s + c] =
              m.at(r, c) ? 255 : 0;
        }
      }
    };
    for (int r = 0; r < s; ++r) {
      for (int c = 0; c < s; ++c) {
        const double v = std::clamp(sample.image[static_cast<std::int64_t>(r) * s + c], 0.0, 1.0);
        grid.pixels[static_cast<std::size_t>(r) * grid.width + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
    int tile = 1;
    for (const auto& label : sample.labels) blit_mask(label, tile++);
    for (const auto& pred : preds) blit_mask(pred, tile++);

    const std::string path = (fs::path(out_dir) / (sample.id + "_panel.pgm")).string();
    write_pgm(path, grid);
    written.push_back(path);
  }
  return written;
}

}  // namespace seqseg

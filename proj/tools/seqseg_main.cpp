#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "seqseg/errors.hpp"
#include "seqseg/harness.hpp"
#include "seqseg/synthdata.hpp"

using namespace seqseg;

namespace {

int run(int argc, char** argv) {
  CLI::App app{"seqseg: sequential multi-hypothesis segmentation on synthetic data"};
  app.require_subcommand(1);

  // gen-data
  std::string gd_config, gd_out;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic multi-annotator dataset");
  gen->add_option("--config", gd_config, "Dataset config JSON")->required();
  gen->add_option("--out", gd_out, "Output dataset directory")->required();

  // train
  std::string tr_config;
  auto* tr = app.add_subcommand("train", "Train a model per the config");
  tr->add_option("--config", tr_config, "Training config JSON")->required();

  // eval
  std::string ev_checkpoint, ev_data, ev_split = "test", ev_out;
  int ev_masks = 0;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", ev_checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--split", ev_split, "Dataset split (train|val|test)");
  ev->add_option("--num-masks", ev_masks, "Number of masks to generate")->required();
  ev->add_option("--out", ev_out, "Report JSON output path")->required();

  // compare
  std::string cp_a, cp_b, cp_metric = "ged";
  auto* cp = app.add_subcommand("compare", "Paired significance test between two reports");
  cp->add_option("--a", cp_a, "First report JSON")->required();
  cp->add_option("--b", cp_b, "Second report JSON")->required();
  cp->add_option("--metric", cp_metric, "Metric: ged or dice_avg");

  // ablate
  std::string ab_config, ab_out;
  auto* ab = app.add_subcommand("ablate", "Train and evaluate the ablation grid");
  ab->add_option("--config", ab_config, "Training config JSON")->required();
  ab->add_option("--out", ab_out, "Output directory")->required();

  // panels
  std::string pn_checkpoint, pn_data, pn_split = "test", pn_out;
  int pn_masks = 3;
  auto* pn = app.add_subcommand("panels", "Render qualitative panels");
  pn->add_option("--checkpoint", pn_checkpoint, "Checkpoint file")->required();
  pn->add_option("--data", pn_data, "Dataset directory")->required();
  pn->add_option("--split", pn_split, "Dataset split");
  pn->add_option("--num-masks", pn_masks, "Predictions per panel");
  pn->add_option("--out", pn_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    DatasetConfig cfg = load_dataset_config(gd_config);
    Dataset ds = generate_dataset(cfg);
    write_dataset(ds, gd_out);
    std::cout << "wrote " << ds.train.size() << "/" << ds.val.size() << "/" << ds.test.size()
              << " train/val/test samples to " << gd_out << "\n";
  } else if (tr->parsed()) {
    TrainConfig cfg = load_train_config(tr_config);
    TrainResult result = train(cfg);
    std::cout << "trained " << result.epochs.size() << " epochs, best val loss "
              << result.best_val_loss << " at epoch " << result.best_epoch << "\n"
              << "checkpoint: " << result.checkpoint_path << "\n"
              << "log: " << result.log_path << "\n";
  } else if (ev->parsed()) {
    EvalReport report = evaluate(ev_checkpoint, ev_data, ev_split, ev_masks);
    write_report(report, ev_out);
    std::cout << "evaluated " << report.scores.num_samples << " samples: mean ged "
              << report.scores.mean_ged << ", mean dice_avg " << report.scores.mean_dice_avg
              << "\nreport: " << ev_out << "\n";
  } else if (cp->parsed()) {
    EvalReport a = read_report(cp_a);
    EvalReport b = read_report(cp_b);
    CompareResult r = compare(a, b, cp_metric);
    std::cout << r.to_json().dump(2) << "\n";
  } else if (ab->parsed()) {
    TrainConfig cfg = load_train_config(ab_config);
    AblationTable table = ablate(cfg, ab_out);
    std::cout << table.to_text();
  } else if (pn->parsed()) {
    auto files = render_panels(pn_checkpoint, pn_data, pn_split, pn_masks, pn_out);
    std::cout << "wrote " << files.size() << " panels to " << pn_out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const FormatError& e) {
    std::cerr << "error: format: " << e.what() << "\n";
  } catch (const TrainingDivergenceError& e) {
    std::cerr << "error: divergence: " << e.what() << "\n";
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid-argument: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return 1;
}

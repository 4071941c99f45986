#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "seqseg/errors.hpp"
#include "seqseg/harness.hpp"
#include "seqseg/image_io.hpp"

using namespace seqseg;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Shared tiny fixture: dataset plus a briefly trained checkpoint.
struct Fixture {
  fs::path root;
  std::string data_dir;
  TrainConfig cfg;

  Fixture() {
    root = fs::temp_directory_path() / "seqseg_harness_fixture";
    fs::remove_all(root);
    fs::create_directories(root);
    data_dir = (root / "data").string();

    DatasetConfig dcfg;
    dcfg.num_samples = 40;
    dcfg.image_size = 32;
    dcfg.radius_min = 4.0;
    dcfg.radius_max = 8.0;
    dcfg.train_frac = 0.5;
    dcfg.val_frac = 0.25;
    dcfg.test_frac = 0.25;
    dcfg.seed = 11;
    write_dataset(generate_dataset(dcfg), data_dir);

    cfg.dataset_dir = data_dir;
    cfg.M_train = 3;
    cfg.K = 3;
    cfg.max_epochs = 2;
    cfg.patience = 5;
    cfg.batch_size = 2;
    cfg.seed = 1;
    cfg.model.image_size = 32;
    cfg.model.embed_channels = 8;
    cfg.model.hidden_channels = 4;
    cfg.checkpoint_path = (root / "ckpt.bin").string();
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

const std::string& trained_checkpoint() {
  static std::string path = [] {
    auto& f = fixture();
    train(f.cfg);
    return f.cfg.checkpoint_path;
  }();
  return path;
}

}  // namespace

TEST_CASE("train writes a log and is bit-deterministic") {
  auto& f = fixture();
  TrainConfig cfg = f.cfg;
  cfg.checkpoint_path = (f.root / "det_a.bin").string();
  auto r1 = train(cfg);
  REQUIRE(static_cast<int>(r1.epochs.size()) <= cfg.max_epochs);
  REQUIRE(!r1.epochs.empty());
  const std::string log_a = read_bytes(r1.log_path);
  const std::string ckpt_a = read_bytes(cfg.checkpoint_path);

  TrainConfig cfg2 = f.cfg;
  cfg2.checkpoint_path = (f.root / "det_b.bin").string();
  auto r2 = train(cfg2);
  std::string log_b = read_bytes(r2.log_path);
  // logs embed the checkpoint path; normalize it before comparing
  std::size_t pos;
  while ((pos = log_b.find("det_b.bin")) != std::string::npos) log_b.replace(pos, 9, "det_a.bin");
  CHECK(log_a == log_b);
  CHECK(ckpt_a == read_bytes(cfg2.checkpoint_path));

  for (const auto& e : r1.epochs) {
    CHECK(std::isfinite(e.train_loss));
    CHECK(std::isfinite(e.val_loss));
  }
}

TEST_CASE("max_epochs = 0 leaves the initialization checkpoint") {
  auto& f = fixture();
  TrainConfig cfg = f.cfg;
  cfg.max_epochs = 0;
  cfg.checkpoint_path = (f.root / "init.bin").string();
  auto r = train(cfg);
  CHECK(r.epochs.empty());
  CHECK(r.best_epoch == 0);

  Model loaded = Model::load_checkpoint(cfg.checkpoint_path);
  ModelConfig mc = cfg.model;
  mc.variant = "seqsam";
  Model fresh(mc, cfg.seed);
  REQUIRE(loaded.params().size() == fresh.params().size());
  for (std::size_t i = 0; i < fresh.params().size(); ++i) {
    const auto& a = fresh.params()[i];
    const auto& b = loaded.params()[i];
    for (std::int64_t j = 0; j < a.value.numel(); ++j) {
      CHECK(static_cast<double>(static_cast<float>(a.value[j])) == b.value[j]);
    }
  }
}

TEST_CASE("train rejects missing datasets and K mismatches") {
  auto& f = fixture();
  TrainConfig missing = f.cfg;
  missing.dataset_dir = (f.root / "no_such_dir").string();
  CHECK_THROWS_AS(train(missing), FormatError);

  TrainConfig bad_k = f.cfg;
  bad_k.K = 4;
  bad_k.M_train = 4;
  CHECK_THROWS_AS(train(bad_k), std::invalid_argument);

  TrainConfig bad_sel = f.cfg;
  bad_sel.selector = "mystery";
  CHECK_THROWS_AS(train(bad_sel), std::invalid_argument);
}

TEST_CASE("evaluate is deterministic and leaves the checkpoint untouched") {
  auto& f = fixture();
  const auto& ckpt = trained_checkpoint();
  const std::string before = read_bytes(ckpt);
  EvalReport r1 = evaluate(ckpt, f.data_dir, "test", 3);
  EvalReport r2 = evaluate(ckpt, f.data_dir, "test", 3);
  CHECK(read_bytes(ckpt) == before);

  CHECK(r1.scores.sample_ids == r2.scores.sample_ids);
  CHECK(r1.scores.per_sample_ged == r2.scores.per_sample_ged);
  CHECK(r1.scores.per_sample_dice_avg == r2.scores.per_sample_dice_avg);
  CHECK(r1.scores.num_samples == 10);
  CHECK(r1.M_inference == 3);
  CHECK(r1.variant == "seqsam");
  for (double g : r1.scores.per_sample_ged) CHECK(std::isfinite(g));

  // arbitrary M beyond the trained length still works for seqsam
  EvalReport r10 = evaluate(ckpt, f.data_dir, "test", 10);
  CHECK(r10.scores.num_samples == 10);
}

TEST_CASE("report write/read round-trip") {
  auto& f = fixture();
  EvalReport report = evaluate(trained_checkpoint(), f.data_dir, "test", 3);
  const std::string path = (f.root / "report.json").string();
  write_report(report, path);
  CHECK(fs::exists(f.root / "report.csv"));

  EvalReport back = read_report(path);
  CHECK(back.scores.sample_ids == report.scores.sample_ids);
  CHECK(back.scores.mean_dice_avg == doctest::Approx(report.scores.mean_dice_avg));
  CHECK(back.M_inference == report.M_inference);
  CHECK(back.data_checksum == report.data_checksum);

  std::ifstream csv(f.root / "report.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "sample_id,ged,dice_avg");
}

TEST_CASE("compare: identity, large shift, and exact small-n agreement") {
  auto make_report = [](int n, double ged_base, double shift) {
    EvalReport r;
    for (int i = 0; i < n; ++i) {
      r.scores.sample_ids.push_back("s" + std::to_string(i));
      r.scores.per_sample_ged.push_back(ged_base + 0.003 * i + shift);
      r.scores.per_sample_dice_avg.push_back(0.8 - 0.001 * i);
    }
    r.scores.finalize();
    return r;
  };

  auto a = make_report(100, 0.2, 0.0);
  auto self = compare(a, a, "ged");
  CHECK(self.p_value == 1.0);
  CHECK(self.better == "tie");

  auto b = make_report(100, 0.2, 0.1);  // every ged shifted +0.1
  auto r = compare(a, b, "ged");
  CHECK(r.p_value < 0.01);
  CHECK(r.better == "a");
  CHECK(r.significant);

  auto a5 = make_report(5, 0.3, 0.0);
  auto b5 = make_report(5, 0.3, 0.05);
  auto r5 = compare(a5, b5, "ged");
  auto direct = wilcoxon_signed_rank(a5.scores.per_sample_ged, b5.scores.per_sample_ged);
  CHECK(r5.p_value == direct.p_two_sided);

  auto unpaired = make_report(99, 0.2, 0.0);
  CHECK_THROWS_AS(compare(a, unpaired, "ged"), std::invalid_argument);
  CHECK_THROWS_AS(compare(a, b, "accuracy"), std::invalid_argument);

  // dice_avg: higher is better
  auto hi = make_report(100, 0.2, 0.0);
  auto lo = make_report(100, 0.2, 0.0);
  for (auto& v : lo.scores.per_sample_dice_avg) v -= 0.2;
  lo.scores.finalize();
  auto rd = compare(hi, lo, "dice_avg");
  CHECK(rd.better == "a");
  CHECK(rd.p_value < 0.01);
}

TEST_CASE("mcl variant trains and evaluates with head-count limits") {
  auto& f = fixture();
  TrainConfig cfg = f.cfg;
  cfg.variant = "mcl";
  cfg.max_epochs = 1;
  cfg.checkpoint_path = (f.root / "mcl.bin").string();
  train(cfg);

  EvalReport r = evaluate(cfg.checkpoint_path, f.data_dir, "test", 3);
  CHECK(r.variant == "mcl");
  CHECK(r.scores.num_samples == 10);
  EvalReport r2 = evaluate(cfg.checkpoint_path, f.data_dir, "test", 2);  // truncation
  CHECK(r2.scores.num_samples == 10);
  CHECK_THROWS_AS(evaluate(cfg.checkpoint_path, f.data_dir, "test", 5), std::invalid_argument);
}

TEST_CASE("ablate produces the four paired variants") {
  auto& f = fixture();
  TrainConfig cfg = f.cfg;
  cfg.M_train = 4;
  cfg.max_epochs = 1;
  const std::string out_dir = (f.root / "ablation").string();
  auto table = ablate(cfg, out_dir);

  REQUIRE(table.rows.size() == 4);
  CHECK(table.rows[0].variant == "full");
  CHECK(table.rows[1].variant == "random_k");
  CHECK(table.rows[2].variant == "first_k");
  CHECK(table.rows[3].variant == "no_bptt");
  CHECK(table.eval_m == 4);
  CHECK(table.data_checksum == dataset_checksum(f.data_dir));
  for (const auto& row : table.rows) {
    CHECK(std::isfinite(row.dice_avg));
    CHECK(std::isfinite(row.ged));
    CHECK(std::isfinite(row.dice_avg_m10));
  }
  CHECK(fs::exists(fs::path(out_dir) / "ablation.json"));
  CHECK(fs::exists(fs::path(out_dir) / "ablation.txt"));
  CHECK(fs::exists(fs::path(out_dir) / "full" / "checkpoint.bin"));

  TrainConfig degenerate = f.cfg;  // M_train == K
  CHECK_THROWS_AS(ablate(degenerate, out_dir), std::invalid_argument);
}

TEST_CASE("panels have the tile layout and are render-deterministic") {
  auto& f = fixture();
  const std::string out_dir = (f.root / "panels").string();
  auto files = render_panels(trained_checkpoint(), f.data_dir, "test", 4, out_dir);
  REQUIRE(files.size() == 10);

  GrayImage grid = read_pgm(files[0]);
  CHECK(grid.height == 32);
  CHECK(grid.width == (1 + 3 + 4) * 32);

  // label tiles are exact copies of the stored label files
  Dataset ds = read_dataset(f.data_dir);
  const auto& sample = ds.test[0];
  for (int k = 0; k < 3; ++k) {
    const GrayImage stored =
        read_pgm((fs::path(f.data_dir) / "test" / (sample.id + "_lab" + std::to_string(k) +
                                                   ".pgm")).string());
    for (int r = 0; r < 32; ++r) {
      for (int c = 0; c < 32; ++c) {
        CHECK(grid.pixels[static_cast<std::size_t>(r) * grid.width + (1 + k) * 32 + c] ==
              stored.pixels[static_cast<std::size_t>(r) * 32 + c]);
      }
    }
  }

  const std::string first = read_bytes(files[0]);
  render_panels(trained_checkpoint(), f.data_dir, "test", 4, out_dir);
  CHECK(read_bytes(files[0]) == first);
}

TEST_CASE("SEQSEG_SEED overrides config seeds") {
  auto& f = fixture();
  const std::string cfg_path = (f.root / "cfg.json").string();
  {
    std::ofstream out(cfg_path);
    out << f.cfg.to_json().dump(2);
  }
  setenv("SEQSEG_SEED", "4242", 1);
  auto cfg = load_train_config(cfg_path);
  CHECK(cfg.seed == 4242);

  setenv("SEQSEG_SEED", "not_a_number", 1);
  CHECK_THROWS_AS(load_train_config(cfg_path), std::invalid_argument);
  unsetenv("SEQSEG_SEED");
  auto cfg2 = load_train_config(cfg_path);
  CHECK(cfg2.seed == f.cfg.seed);
}

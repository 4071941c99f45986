#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "seqseg/errors.hpp"
#include "seqseg/mask_ops.hpp"
#include "seqseg/synthdata.hpp"

using namespace seqseg;
namespace fs = std::filesystem;

namespace {

DatasetConfig small_config() {
  DatasetConfig cfg;
  cfg.num_samples = 24;
  cfg.image_size = 32;
  cfg.radius_min = 4.0;
  cfg.radius_max = 8.0;
  cfg.train_frac = 0.5;
  cfg.val_frac = 0.25;
  cfg.test_frac = 0.25;
  cfg.seed = 7;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("generate_sample invariants and determinism") {
  DatasetConfig cfg = small_config();
  Rng r1(99), r2(99);
  auto s1 = generate_sample(cfg, r1, "s0");
  auto s2 = generate_sample(cfg, r2, "s0");
  CHECK(s1.image.vec() == s2.image.vec());
  REQUIRE(s1.labels.size() == s2.labels.size());
  for (std::size_t k = 0; k < s1.labels.size(); ++k) {
    CHECK(s1.labels[k].data == s2.labels[k].data);
  }
  CHECK(s1.bbox.x_min == s2.bbox.x_min);
  CHECK(s1.bbox.y_max == s2.bbox.y_max);

  CHECK(static_cast<int>(s1.labels.size()) == cfg.num_annotators);
  bool any_non_empty = false;
  for (const auto& l : s1.labels) {
    CHECK(l.height == cfg.image_size);
    CHECK(l.width == cfg.image_size);
    if (!l.empty_mask()) any_non_empty = true;
  }
  CHECK(any_non_empty);
  for (std::int64_t i = 0; i < s1.image.numel(); ++i) {
    CHECK(s1.image[i] >= 0.0);
    CHECK(s1.image[i] <= 1.0);
  }
}

TEST_CASE("empty_annotation_prob zero yields all non-empty labels") {
  DatasetConfig cfg = small_config();
  cfg.empty_annotation_prob = 0.0;
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    auto s = generate_sample(cfg, rng, "x");
    for (const auto& l : s.labels) CHECK_FALSE(l.empty_mask());
  }
}

TEST_CASE("annotator disagreement is present but labels share a mode") {
  DatasetConfig cfg;  // default 64x64 parameters
  cfg.seed = 3;
  Rng rng(3);
  double iou_sum = 0.0;
  long iou_count = 0;
  for (int i = 0; i < 1000; ++i) {
    auto s = generate_sample(cfg, rng, "x");
    for (std::size_t a = 0; a < s.labels.size(); ++a) {
      for (std::size_t b = a + 1; b < s.labels.size(); ++b) {
        if (s.labels[a].empty_mask() || s.labels[b].empty_mask()) continue;
        iou_sum += iou(s.labels[a], s.labels[b]);
        ++iou_count;
      }
    }
  }
  const double mean_iou = iou_sum / static_cast<double>(iou_count);
  CHECK(mean_iou > 0.3);
  CHECK(mean_iou < 0.95);
}

TEST_CASE("bbox_from_labels extremity points") {
  BinaryMask m(8, 10);
  for (int r = 2; r <= 5; ++r) {
    for (int c = 3; c <= 7; ++c) m.at(r, c) = 1;
  }
  Rng rng(1);
  auto b = bbox_from_labels({m}, rng);
  CHECK(b.x_min == 3);
  CHECK(b.y_min == 2);
  CHECK(b.x_max == 7);
  CHECK(b.y_max == 5);

  BinaryMask full(4, 4);
  for (auto& v : full.data) v = 1;
  auto fb = bbox_from_labels({full}, rng);
  CHECK(fb.x_min == 0);
  CHECK(fb.y_min == 0);
  CHECK(fb.x_max == 3);
  CHECK(fb.y_max == 3);

  BinaryMask empty(4, 4);
  CHECK_THROWS_AS(bbox_from_labels({empty, empty}, rng), std::invalid_argument);
}

TEST_CASE("bbox tightly bounds one of the labels") {
  DatasetConfig cfg = small_config();
  Rng rng(17);
  for (int i = 0; i < 30; ++i) {
    auto s = generate_sample(cfg, rng, "x");
    bool tight_for_some = false;
    for (const auto& l : s.labels) {
      if (l.empty_mask()) continue;
      Rng probe(0);
      auto lb = bbox_from_labels({l}, probe);
      if (lb.x_min == s.bbox.x_min && lb.x_max == s.bbox.x_max && lb.y_min == s.bbox.y_min &&
          lb.y_max == s.bbox.y_max) {
        tight_for_some = true;
        break;
      }
    }
    CHECK(tight_for_some);
  }
}

TEST_CASE("dataset generation, split sizes, and round-trip") {
  TempDir dir("seqseg_ds_test");
  DatasetConfig cfg = small_config();
  Dataset ds = generate_dataset(cfg);
  CHECK(ds.train.size() == 12);
  CHECK(ds.val.size() == 6);
  CHECK(ds.test.size() == 6);

  write_dataset(ds, dir.path.string());
  Dataset back = read_dataset(dir.path.string());
  CHECK(back.train.size() == ds.train.size());
  CHECK(back.test.size() == ds.test.size());
  CHECK(back.config.seed == cfg.seed);

  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    const auto& a = ds.train[i];
    const auto& b = back.train[i];
    CHECK(a.id == b.id);
    CHECK(a.bbox.x_min == b.bbox.x_min);
    REQUIRE(a.labels.size() == b.labels.size());
    for (std::size_t k = 0; k < a.labels.size(); ++k) {
      CHECK(a.labels[k].data == b.labels[k].data);  // masks bit-exact
    }
    for (std::int64_t j = 0; j < a.image.numel(); ++j) {
      CHECK(std::fabs(a.image[j] - b.image[j]) <= 0.5 / 255.0 + 1e-12);  // 8-bit quantization
    }
  }

  // regeneration from the same config is bit-identical
  Dataset again = generate_dataset(cfg);
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(again.train[i].image.vec() == ds.train[i].image.vec());
  }
}

TEST_CASE("corrupted files and manifests are rejected with the offending path") {
  TempDir dir("seqseg_ds_corrupt");
  DatasetConfig cfg = small_config();
  cfg.num_samples = 8;
  Dataset ds = generate_dataset(cfg);
  write_dataset(ds, dir.path.string());

  // tamper with one mask payload byte
  const fs::path victim = dir.path / "train" / (ds.train[0].id + "_lab0.pgm");
  {
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    char byte;
    f.seekg(-1, std::ios::end);
    f.read(&byte, 1);
    byte = byte == 0 ? static_cast<char>(255) : 0;
    f.seekp(-1, std::ios::end);
    f.write(&byte, 1);
  }
  try {
    read_dataset(dir.path.string());
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("lab0.pgm") != std::string::npos);
  }

  // missing dataset.json
  fs::remove(dir.path / "dataset.json");
  CHECK_THROWS_AS(read_dataset(dir.path.string()), FormatError);
}

TEST_CASE("dataset checksum is stable and changes with the data") {
  TempDir dir_a("seqseg_ds_crc_a");
  TempDir dir_b("seqseg_ds_crc_b");
  DatasetConfig cfg = small_config();
  cfg.num_samples = 8;
  write_dataset(generate_dataset(cfg), dir_a.path.string());
  const auto crc1 = dataset_checksum(dir_a.path.string());
  const auto crc2 = dataset_checksum(dir_a.path.string());
  CHECK(crc1 == crc2);

  cfg.seed = 1234;
  write_dataset(generate_dataset(cfg), dir_b.path.string());
  CHECK(dataset_checksum(dir_b.path.string()) != crc1);
}

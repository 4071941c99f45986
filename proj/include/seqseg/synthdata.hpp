#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqseg/mask_ops.hpp"
#include "seqseg/model.hpp"
#include "seqseg/rng.hpp"
#include "seqseg/tensor.hpp"

namespace seqseg {

// One image with its unordered set of plausible masks and a box prompt.
struct Sample {
  std::string id;
  Tensor image;  // (size,size) reals in [0,1]
  std::vector<BinaryMask> labels;
  BBoxPrompt bbox;
};

struct DatasetConfig {
  int num_samples = 1200;
  int image_size = 64;
  int num_annotators = 3;  // K
  double radius_min = 8.0;
  double radius_max = 16.0;
  double boundary_noise_amp = 0.10;
  int morph_radius_max = 1;  // per-label dilation/erosion radius drawn from [-max, max]
  double empty_annotation_prob = 0.1;
  double train_frac = 5.0 / 6.0;
  double val_frac = 1.0 / 12.0;
  double test_frac = 1.0 / 12.0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static DatasetConfig from_json(const nlohmann::json& j);
};

// Deterministic in (cfg, rng state): a blob image plus K independently
// perturbed annotations, at least one non-empty.
Sample generate_sample(const DatasetConfig& cfg, Rng& rng, const std::string& id);

// Extremity-point box of a uniformly chosen non-empty label.
BBoxPrompt bbox_from_labels(const std::vector<BinaryMask>& labels, Rng& rng);

struct Dataset {
  DatasetConfig config;
  std::vector<Sample> train, val, test;

  const std::vector<Sample>& split(const std::string& name) const;
};

Dataset generate_dataset(const DatasetConfig& cfg);

// Layout: <dir>/dataset.json plus one directory per split, each holding
// <id>_img.pgm / <id>_lab<k>.pgm files and a manifest.json with per-file
// CRC32 checksums. Masks are strictly {0,255} on disk.
void write_dataset(const Dataset& ds, const std::string& directory);
Dataset read_dataset(const std::string& directory);

// CRC over the split manifests; identifies a dataset for paired comparisons.
std::uint32_t dataset_checksum(const std::string& directory);

}  // namespace seqseg

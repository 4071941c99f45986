#include "seqseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <zlib.h>

#include "seqseg/errors.hpp"
#include "seqseg/image_io.hpp"

namespace fs = std::filesystem;

namespace seqseg {

void DatasetConfig::validate() const {
  if (num_samples < 1) throw std::invalid_argument("DatasetConfig: num_samples must be >= 1");
  if (image_size < 16) throw std::invalid_argument("DatasetConfig: image_size must be >= 16");
  if (num_annotators < 2) throw std::invalid_argument("DatasetConfig: need K >= 2 annotators");
  if (!(empty_annotation_prob >= 0.0 && empty_annotation_prob < 1.0)) {
    throw std::invalid_argument("DatasetConfig: empty_annotation_prob must lie in [0,1)");
  }
  if (!(radius_min > 0.0 && radius_max >= radius_min)) {
    throw std::invalid_argument("DatasetConfig: bad radius range");
  }
  const double total = train_frac + val_frac + test_frac;
  if (std::fabs(total - 1.0) > 1e-9 || train_frac <= 0.0 || val_frac < 0.0 || test_frac < 0.0) {
    throw std::invalid_argument("DatasetConfig: split fractions must be non-negative and sum to 1");
  }
}

nlohmann::json DatasetConfig::to_json() const {
  return {{"num_samples", num_samples},
          {"image_size", image_size},
          {"num_annotators", num_annotators},
          {"radius_min", radius_min},
          {"radius_max", radius_max},
          {"boundary_noise_amp", boundary_noise_amp},
          {"morph_radius_max", morph_radius_max},
          {"empty_annotation_prob", empty_annotation_prob},
          {"train_frac", train_frac},
          {"val_frac", val_frac},
          {"test_frac", test_frac},
          {"seed", seed}};
}

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.num_samples = j.value("num_samples", c.num_samples);
  c.image_size = j.value("image_size", c.image_size);
  c.num_annotators = j.value("num_annotators", c.num_annotators);
  c.radius_min = j.value("radius_min", c.radius_min);
  c.radius_max = j.value("radius_max", c.radius_max);
  c.boundary_noise_amp = j.value("boundary_noise_amp", c.boundary_noise_amp);
  c.morph_radius_max = j.value("morph_radius_max", c.morph_radius_max);
  c.empty_annotation_prob = j.value("empty_annotation_prob", c.empty_annotation_prob);
  c.train_frac = j.value("train_frac", c.train_frac);
  c.val_frac = j.value("val_frac", c.val_frac);
  c.test_frac = j.value("test_frac", c.test_frac);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

namespace {

// Low-frequency angular wobble of the blob boundary: random harmonics 2..4.
struct BoundaryNoise {
  double a[3], b[3];

  static BoundaryNoise draw(Rng& rng, double amp) {
    BoundaryNoise n;
    const double scale = amp / std::sqrt(6.0);
    for (int h = 0; h < 3; ++h) {
      n.a[h] = scale * rng.normal();
      n.b[h] = scale * rng.normal();
    }
    return n;
  }

  double at(double phi) const {
    double s = 0.0;
    for (int h = 0; h < 3; ++h) {
      const double hh = static_cast<double>(h + 2);
      s += a[h] * std::cos(hh * phi) + b[h] * std::sin(hh * phi);
    }
    return s;
  }
};

// Warped ellipse with a circular bite taken out of one side. The concavity
// keeps the blob from filling its bounding box, so the box prompt alone does
// not give the contour away.
struct BlobShape {
  double cx, cy, rx, ry, theta;
  double bite_x, bite_y, bite_r;

  static BlobShape draw(const DatasetConfig& cfg, Rng& rng) {
    BlobShape s;
    const double size = cfg.image_size;
    s.cx = rng.uniform(0.35 * size, 0.65 * size);
    s.cy = rng.uniform(0.35 * size, 0.65 * size);
    s.rx = rng.uniform(cfg.radius_min, cfg.radius_max);
    s.ry = rng.uniform(cfg.radius_min, cfg.radius_max);
    s.theta = rng.uniform(0.0, M_PI);
    const double beta = rng.uniform(0.0, 2.0 * M_PI);
    const double reach = rng.uniform(0.6, 0.95);
    const double ct = std::cos(s.theta), st = std::sin(s.theta);
    const double bx = reach * s.rx * std::cos(beta);
    const double by = reach * s.ry * std::sin(beta);
    s.bite_x = s.cx + bx * ct - by * st;
    s.bite_y = s.cy + bx * st + by * ct;
    s.bite_r = rng.uniform(0.65, 0.9) * std::min(s.rx, s.ry);
    return s;
  }
};

BinaryMask render_blob(const BlobShape& shape, const BoundaryNoise& noise, int size) {
  BinaryMask mask(size, size);
  const double ct = std::cos(shape.theta), st = std::sin(shape.theta);
  const double bite_r2 = shape.bite_r * shape.bite_r;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = x - shape.cx, dy = y - shape.cy;
      const double u = (dx * ct + dy * st) / shape.rx;
      const double v = (-dx * st + dy * ct) / shape.ry;
      const double r = std::hypot(u, v);
      const double phi = std::atan2(v, u);
      if (r > 1.0 + noise.at(phi)) continue;
      const double bx = x - shape.bite_x, by = y - shape.bite_y;
      if (bx * bx + by * by <= bite_r2) continue;
      mask.at(y, x) = 1;
    }
  }
  return mask;
}

BinaryMask morph_disk(const BinaryMask& in, int radius) {
  if (radius == 0) return in;
  const bool dilate = radius > 0;
  const int r = std::abs(radius);
  const int r2 = r * r;
  BinaryMask out(in.height, in.width);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      bool hit = dilate ? false : true;
      for (int dy = -r; dy <= r && (dilate ? !hit : hit); ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (dx * dx + dy * dy > r2) continue;
          const int yy = y + dy, xx = x + dx;
          const bool v = (yy >= 0 && yy < in.height && xx >= 0 && xx < in.width)
                             ? in.at(yy, xx) != 0
                             : false;
          if (dilate && v) {
            hit = true;
            break;
          }
          if (!dilate && !v) {
            hit = false;
            break;
          }
        }
      }
      out.at(y, x) = hit ? 1 : 0;
    }
  }
  return out;
}

// Coarse 8px-grid uniform field, bilinearly interpolated.
Tensor smooth_background(int size, Rng& rng) {
  const int step = 8;
  const int nodes = size / step + 2;
  std::vector<double> grid(static_cast<std::size_t>(nodes) * nodes);
  for (auto& g : grid) g = rng.uniform();
  Tensor bg({size, size});
  for (int y = 0; y < size; ++y) {
    const double gy = static_cast<double>(y) / step;
    const int y0 = static_cast<int>(gy);
    const double fy = gy - y0;
    for (int x = 0; x < size; ++x) {
      const double gx = static_cast<double>(x) / step;
      const int x0 = static_cast<int>(gx);
      const double fx = gx - x0;
      const double v00 = grid[static_cast<std::size_t>(y0) * nodes + x0];
      const double v01 = grid[static_cast<std::size_t>(y0) * nodes + x0 + 1];
      const double v10 = grid[static_cast<std::size_t>(y0 + 1) * nodes + x0];
      const double v11 = grid[static_cast<std::size_t>(y0 + 1) * nodes + x0 + 1];
      bg[static_cast<std::int64_t>(y) * size + x] =
          (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
    }
  }
  return bg;
}

GrayImage image_to_gray(const Tensor& image) {
  GrayImage g;
  g.height = image.dim(0);
  g.width = image.dim(1);
  g.pixels.resize(static_cast<std::size_t>(g.height) * g.width);
  for (std::int64_t i = 0; i < image.numel(); ++i) {
    double v = std::clamp(image[i], 0.0, 1.0);
    g.pixels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return g;
}

GrayImage mask_to_gray(const BinaryMask& m) {
  GrayImage g;
  g.height = m.height;
  g.width = m.width;
  g.pixels.resize(m.data.size());
  for (std::size_t i = 0; i < m.data.size(); ++i) g.pixels[i] = m.data[i] ? 255 : 0;
  return g;
}

BinaryMask gray_to_mask(const GrayImage& g, const std::string& path) {
  BinaryMask m(g.height, g.width);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    if (g.pixels[i] == 255) {
      m.data[i] = 1;
    } else if (g.pixels[i] != 0) {
      throw FormatError("mask file is not strictly {0,255}: " + path);
    }
  }
  return m;
}

}  // namespace

Sample generate_sample(const DatasetConfig& cfg, Rng& rng, const std::string& id) {
  cfg.validate();
  const int size = cfg.image_size;
  Sample s;
  s.id = id;

  const BlobShape shape = BlobShape::draw(cfg, rng);
  const BoundaryNoise image_noise = BoundaryNoise::draw(rng, cfg.boundary_noise_amp);
  const BinaryMask blob = render_blob(shape, image_noise, size);

  // Faint blob on a textured background: bright enough to segment from the
  // box prompt, subtle enough that the encoder takes real training to find it.
  Tensor image = smooth_background(size, rng);
  for (std::int64_t i = 0; i < image.numel(); ++i) {
    image[i] = std::clamp(0.35 * image[i] + 0.22 * blob.data[static_cast<std::size_t>(i)] +
                              0.05 * rng.normal(),
                          0.0, 1.0);
  }
  s.image = std::move(image);

  // Annotations: fresh boundary noise plus a random dilation/erosion each,
  // occasionally empty; redraw the whole set until one is non-empty.
  for (int attempt = 0; attempt < 10000; ++attempt) {
    s.labels.clear();
    bool any = false;
    for (int k = 0; k < cfg.num_annotators; ++k) {
      const BoundaryNoise ln = BoundaryNoise::draw(rng, cfg.boundary_noise_amp);
      const int morph = rng.uniform_int(-cfg.morph_radius_max, cfg.morph_radius_max);
      const bool empty = rng.uniform() < cfg.empty_annotation_prob;
      if (empty) {
        s.labels.emplace_back(size, size);
      } else {
        s.labels.push_back(morph_disk(render_blob(shape, ln, size), morph));
        if (!s.labels.back().empty_mask()) any = true;
      }
    }
    if (any) break;
    if (attempt == 9999) throw std::logic_error("generate_sample: could not draw non-empty labels");
  }

  s.bbox = bbox_from_labels(s.labels, rng);
  return s;
}

BBoxPrompt bbox_from_labels(const std::vector<BinaryMask>& labels, Rng& rng) {
  std::vector<int> non_empty;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (!labels[k].empty_mask()) non_empty.push_back(static_cast<int>(k));
  }
  if (non_empty.empty()) {
    throw std::invalid_argument("bbox_from_labels: all labels are empty");
  }
  const BinaryMask& m =
      labels[static_cast<std::size_t>(non_empty[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(non_empty.size()) - 1))])];
  BBoxPrompt b;
  b.x_min = m.width;
  b.y_min = m.height;
  b.x_max = -1;
  b.y_max = -1;
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      if (!m.at(r, c)) continue;
      b.x_min = std::min(b.x_min, c);
      b.x_max = std::max(b.x_max, c);
      b.y_min = std::min(b.y_min, r);
      b.y_max = std::max(b.y_max, r);
    }
  }
  return b;
}

const std::vector<Sample>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw std::invalid_argument("unknown split: " + name);
}

Dataset generate_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  const int n_train = static_cast<int>(std::lround(cfg.num_samples * cfg.train_frac));
  const int n_val = static_cast<int>(std::lround(cfg.num_samples * cfg.val_frac));
  const int n_test = cfg.num_samples - n_train - n_val;
  if (n_test < 0) throw std::invalid_argument("DatasetConfig: split fractions overflow num_samples");
  for (int i = 0; i < cfg.num_samples; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "s%06d", i);
    Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(i)));
    Sample s = generate_sample(cfg, rng, id);
    if (i < n_train) {
      ds.train.push_back(std::move(s));
    } else if (i < n_train + n_val) {
      ds.val.push_back(std::move(s));
    } else {
      ds.test.push_back(std::move(s));
    }
  }
  return ds;
}

namespace {

const char* kSplitNames[3] = {"train", "val", "test"};

nlohmann::json write_split(const std::vector<Sample>& samples, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& s : samples) {
    nlohmann::json e;
    e["id"] = s.id;
    e["K"] = static_cast<int>(s.labels.size());
    e["bbox"] = {s.bbox.x_min, s.bbox.y_min, s.bbox.x_max, s.bbox.y_max};
    const std::string img_file = s.id + "_img.pgm";
    write_pgm((dir / img_file).string(), image_to_gray(s.image));
    e["image"] = {{"file", img_file}, {"crc32", crc32_file((dir / img_file).string())}};
    nlohmann::json labels = nlohmann::json::array();
    for (std::size_t k = 0; k < s.labels.size(); ++k) {
      const std::string lab_file = s.id + "_lab" + std::to_string(k) + ".pgm";
      write_pgm((dir / lab_file).string(), mask_to_gray(s.labels[k]));
      labels.push_back({{"file", lab_file}, {"crc32", crc32_file((dir / lab_file).string())}});
    }
    e["labels"] = std::move(labels);
    entries.push_back(std::move(e));
  }
  manifest["samples"] = std::move(entries);
  return manifest;
}

std::vector<Sample> read_split(const fs::path& dir, const nlohmann::json& manifest) {
  std::vector<Sample> samples;
  for (const auto& e : manifest.at("samples")) {
    Sample s;
    s.id = e.at("id").get<std::string>();
    const auto bbox = e.at("bbox").get<std::vector<int>>();
    if (bbox.size() != 4) throw FormatError("bad bbox for sample " + s.id);
    s.bbox = {bbox[0], bbox[1], bbox[2], bbox[3]};

    const auto img_entry = e.at("image");
    const fs::path img_path = dir / img_entry.at("file").get<std::string>();
    if (!fs::exists(img_path)) throw FormatError("missing file: " + img_path.string());
    if (crc32_file(img_path.string()) != img_entry.at("crc32").get<std::uint32_t>()) {
      throw FormatError("checksum mismatch: " + img_path.string());
    }
    const GrayImage img = read_pgm(img_path.string());
    s.image = Tensor({img.height, img.width});
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      s.image[static_cast<std::int64_t>(i)] = img.pixels[i] / 255.0;
    }

    for (const auto& le : e.at("labels")) {
      const fs::path lab_path = dir / le.at("file").get<std::string>();
      if (!fs::exists(lab_path)) throw FormatError("missing file: " + lab_path.string());
      if (crc32_file(lab_path.string()) != le.at("crc32").get<std::uint32_t>()) {
        throw FormatError("checksum mismatch: " + lab_path.string());
      }
      s.labels.push_back(gray_to_mask(read_pgm(lab_path.string()), lab_path.string()));
    }
    const int expected_k = e.at("K").get<int>();
    if (static_cast<int>(s.labels.size()) != expected_k) {
      throw FormatError("label count mismatch for sample " + s.id);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& directory) {
  const fs::path root(directory);
  fs::create_directories(root);
  nlohmann::json top;
  top["config"] = ds.config.to_json();
  top["splits"] = {{"train", ds.train.size()}, {"val", ds.val.size()}, {"test", ds.test.size()}};
  for (const char* name : kSplitNames) {
    const auto& samples = ds.split(name);
    nlohmann::json manifest = write_split(samples, root / name);
    manifest["split"] = name;
    manifest["image_size"] = ds.config.image_size;
    std::ofstream out(root / name / "manifest.json");
    out << manifest.dump(2);
    if (!out) throw FormatError("cannot write manifest for split " + std::string(name));
  }
  std::ofstream out(root / "dataset.json");
  out << top.dump(2);
  if (!out) throw FormatError("cannot write dataset.json");
}

Dataset read_dataset(const std::string& directory) {
  const fs::path root(directory);
  const fs::path top_path = root / "dataset.json";
  std::ifstream top_in(top_path);
  if (!top_in) throw FormatError("missing manifest: " + top_path.string());
  nlohmann::json top;
  try {
    top_in >> top;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt manifest " + top_path.string() + ": " + e.what());
  }
  Dataset ds;
  ds.config = DatasetConfig::from_json(top.at("config"));
  for (const char* name : kSplitNames) {
    const fs::path mpath = root / name / "manifest.json";
    std::ifstream min(mpath);
    if (!min) throw FormatError("missing manifest: " + mpath.string());
    nlohmann::json manifest;
    try {
      min >> manifest;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("corrupt manifest " + mpath.string() + ": " + e.what());
    }
    auto samples = read_split(root / name, manifest);
    if (std::string(name) == "train") {
      ds.train = std::move(samples);
    } else if (std::string(name) == "val") {
      ds.val = std::move(samples);
    } else {
      ds.test = std::move(samples);
    }
  }
  const auto declared = top.at("splits");
  if (ds.train.size() != declared.at("train").get<std::size_t>() ||
      ds.val.size() != declared.at("val").get<std::size_t>() ||
      ds.test.size() != declared.at("test").get<std::size_t>()) {
    throw FormatError("split sizes disagree with dataset.json in " + directory);
  }
  return ds;
}

std::uint32_t dataset_checksum(const std::string& directory) {
  const fs::path root(directory);
  uLong crc = ::crc32(0L, Z_NULL, 0);
  for (const char* name : kSplitNames) {
    const fs::path mpath = root / name / "manifest.json";
    std::ifstream in(mpath, std::ios::binary);
    if (!in) throw FormatError("missing manifest: " + mpath.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()),
                  static_cast<uInt>(bytes.size()));
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace seqseg

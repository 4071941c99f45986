#include "seqseg/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "seqseg/errors.hpp"
#include "seqseg/rng.hpp"

namespace seqseg {

void validate_bbox(const BBoxPrompt& b, int image_size) {
  if (b.x_min < 0 || b.y_min < 0 || b.x_min > b.x_max || b.y_min > b.y_max ||
      b.x_max >= image_size || b.y_max >= image_size) {
    throw std::invalid_argument("invalid bbox (" + std::to_string(b.x_min) + "," +
                                std::to_string(b.y_min) + "," + std::to_string(b.x_max) + "," +
                                std::to_string(b.y_max) + ") for image size " +
                                std::to_string(image_size));
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"image_size", image_size},     {"downsample", downsample},
          {"embed_channels", embed_channels}, {"hidden_channels", hidden_channels},
          {"mcl_heads", mcl_heads},       {"variant", variant},
          {"frozen_encoder", frozen_encoder}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.downsample = j.value("downsample", c.downsample);
  c.embed_channels = j.value("embed_channels", c.embed_channels);
  c.hidden_channels = j.value("hidden_channels", c.hidden_channels);
  c.mcl_heads = j.value("mcl_heads", c.mcl_heads);
  c.variant = j.value("variant", c.variant);
  c.frozen_encoder = j.value("frozen_encoder", c.frozen_encoder);
  return c;
}

Tensor rasterize_bbox(const BBoxPrompt& b, int image_size, int downsample) {
  validate_bbox(b, image_size);
  const int e = image_size / downsample;
  Tensor raster({1, e, e});
  for (int r = 0; r < e; ++r) {
    const int row_lo = r * downsample, row_hi = r * downsample + downsample - 1;
    for (int c = 0; c < e; ++c) {
      const int col_lo = c * downsample, col_hi = c * downsample + downsample - 1;
      const bool hit = b.x_min <= col_hi && b.x_max >= col_lo && b.y_min <= row_hi &&
                       b.y_max >= row_lo;
      raster.at3(0, r, c) = hit ? 1.0 : 0.0;
    }
  }
  return raster;
}

Tensor downsample_label(const BinaryMask& label, int factor, double thresh) {
  if (label.height % factor != 0 || label.width % factor != 0) {
    throw std::invalid_argument("downsample_label: size not divisible by factor");
  }
  const int h = label.height / factor, w = label.width / factor;
  Tensor out({h, w});
  const double block = static_cast<double>(factor) * factor;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int ones = 0;
      for (int i = 0; i < factor; ++i) {
        for (int j = 0; j < factor; ++j) ones += label.at(r * factor + i, c * factor + j);
      }
      out[static_cast<std::int64_t>(r) * w + c] = (ones / block >= thresh) ? 1.0 : 0.0;
    }
  }
  return out;
}

ProbMask upsample_prob_nearest(const Tensor& prob, int factor) {
  int h, w;
  const double* src = prob.data();
  if (prob.ndim() == 3 && prob.dim(0) == 1) {
    h = prob.dim(1);
    w = prob.dim(2);
  } else if (prob.ndim() == 2) {
    h = prob.dim(0);
    w = prob.dim(1);
  } else {
    throw std::invalid_argument("upsample_prob_nearest: expected (1,h,w) or (h,w)");
  }
  ProbMask out(h * factor, w * factor);
  for (int r = 0; r < h * factor; ++r) {
    for (int c = 0; c < w * factor; ++c) {
      out.at(r, c) = src[static_cast<std::size_t>(r / factor) * w + c / factor];
    }
  }
  return out;
}

namespace {

Tensor glorot_uniform(std::vector<int> shape, Rng& rng) {
  Tensor t(shape);
  const int kh = shape[2], kw = shape[3];
  const double fan_in = static_cast<double>(shape[1]) * kh * kw;
  const double fan_out = static_cast<double>(shape[0]) * kh * kw;
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.image_size < cfg_.downsample || cfg_.image_size % cfg_.downsample != 0) {
    throw std::invalid_argument("ModelConfig: image_size must be a multiple of downsample");
  }
  if (cfg_.downsample != 4) {
    throw std::invalid_argument("ModelConfig: the 3-conv encoder realizes downsample 4 only");
  }
  if (cfg_.variant != "seqsam" && cfg_.variant != "mcl") {
    throw std::invalid_argument("ModelConfig: unknown variant " + cfg_.variant);
  }
  Rng rng(Rng::derive(seed, 0xA0D));
  const int c = cfg_.embed_channels;
  const int ch = cfg_.hidden_channels;
  const int cmid = std::max(1, c / 2);
  const bool train_enc = !cfg_.frozen_encoder;

  auto add_conv = [&](const std::string& name, int cout, int cin, bool trainable) {
    params_.emplace_back(name + ".weight", glorot_uniform({cout, cin, 3, 3}, rng), trainable);
    params_.emplace_back(name + ".bias", Tensor::zeros({cout}), trainable);
  };

  add_conv("encoder.conv1", cmid, 1, train_enc);
  add_conv("encoder.conv2", c, cmid, train_enc);
  add_conv("encoder.conv3", c, c, train_enc);
  add_conv("bbox_proj", c, 1, true);
  add_conv("decoder.conv1", c, c, true);
  if (cfg_.variant == "seqsam") {
    add_conv("decoder.conv2", 1, c, true);
    add_conv("recurrent.conv1", c, ch + 1, true);  // sequence-aware prompt embedding
    add_conv("recurrent.conv2", ch, ch + 1, true);  // hidden state update
  } else {
    if (cfg_.mcl_heads < 1) throw std::invalid_argument("ModelConfig: mcl_heads must be >= 1");
    for (int m = 0; m < cfg_.mcl_heads; ++m) {
      add_conv("mcl_head." + std::to_string(m), 1, c, true);
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i].index = static_cast<int>(i);
}

Param& Model::param(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("no such param: " + name);
}

Tape::NodeId Model::encode(Tape& t, const Tensor& image) {
  const int s = cfg_.image_size;
  Tensor img3;
  if (image.ndim() == 2 && image.dim(0) == s && image.dim(1) == s) {
    img3 = Tensor({1, s, s});
    std::copy(image.data(), image.data() + image.numel(), img3.data());
  } else if (image.ndim() == 3 && image.dim(0) == 1 && image.dim(1) == s && image.dim(2) == s) {
    img3 = image;
  } else {
    throw std::invalid_argument("encode: expected a " + std::to_string(s) + "x" +
                                std::to_string(s) + " image, got " + image.shape_string());
  }
  ++encode_calls_;
  auto x = t.constant(std::move(img3));
  auto h1 = t.tanh_act(t.conv2d(x, t.param(param("encoder.conv1.weight")),
                                t.param(param("encoder.conv1.bias")), 2, 1));
  auto h2 = t.tanh_act(t.conv2d(h1, t.param(param("encoder.conv2.weight")),
                                t.param(param("encoder.conv2.bias")), 2, 1));
  auto h3 = t.tanh_act(t.conv2d(h2, t.param(param("encoder.conv3.weight")),
                                t.param(param("encoder.conv3.bias")), 1, 1));
  return h3;
}

Tape::NodeId Model::embed_bbox(Tape& t, const BBoxPrompt& b) {
  auto raster = t.constant(rasterize_bbox(b, cfg_.image_size, cfg_.downsample));
  return t.conv2d(raster, t.param(param("bbox_proj.weight")), t.param(param("bbox_proj.bias")), 1,
                  1);
}

Tape::NodeId Model::decode_step(Tape& t, Tape::NodeId embedding, Tape::NodeId bbox_embed,
                                Tape::NodeId prompt) {
  auto x = t.add(embedding, bbox_embed);
  if (prompt >= 0) x = t.add(x, prompt);
  auto h = t.tanh_act(t.conv2d(x, t.param(param("decoder.conv1.weight")),
                               t.param(param("decoder.conv1.bias")), 1, 1));
  return t.conv2d(h, t.param(param("decoder.conv2.weight")), t.param(param("decoder.conv2.bias")),
                  1, 1);
}

Model::RecurrentOut Model::recurrent_update(Tape& t, Tape::NodeId hidden, Tape::NodeId logits,
                                            bool bptt) {
  auto cat_full = t.concat_channels(hidden, logits);  // conv2 path, always connected
  auto cat_prompt = bptt ? cat_full : t.concat_channels(hidden, t.detach(logits));
  auto prompt = t.conv2d(cat_prompt, t.param(param("recurrent.conv1.weight")),
                         t.param(param("recurrent.conv1.bias")), 1, 1);
  auto hidden_next = t.conv2d(cat_full, t.param(param("recurrent.conv2.weight")),
                              t.param(param("recurrent.conv2.bias")), 1, 1);
  return {hidden_next, prompt};
}

Model::Unrolled Model::unroll(Tape& t, const Tensor& image, const BBoxPrompt& b, int M,
                              bool bptt) {
  if (cfg_.variant != "seqsam") throw std::invalid_argument("unroll: seqsam variant only");
  if (M < 1) throw std::invalid_argument("unroll: M must be >= 1, got " + std::to_string(M));
  Unrolled out;
  out.embedding = encode(t, image);
  auto bbox_embed = embed_bbox(t, b);
  const int e = cfg_.embed_size();
  auto hidden = t.constant(Tensor::zeros({cfg_.hidden_channels, e, e}));
  Tape::NodeId prompt = -1;
  for (int m = 0; m < M; ++m) {
    out.hiddens.push_back(hidden);
    auto logits = decode_step(t, out.embedding, bbox_embed, prompt);
    out.logits.push_back(logits);
    if (m + 1 < M) {
      auto rec = recurrent_update(t, hidden, logits, bptt);
      hidden = rec.hidden_next;
      prompt = rec.prompt_embed;
      out.prompts.push_back(prompt);
    }
  }
  return out;
}

std::vector<Tape::NodeId> Model::mcl_forward(Tape& t, const Tensor& image, const BBoxPrompt& b) {
  if (cfg_.variant != "mcl") throw std::invalid_argument("mcl_forward: mcl variant only");
  auto embedding = encode(t, image);
  auto bbox_embed = embed_bbox(t, b);
  auto x = t.add(embedding, bbox_embed);
  auto trunk = t.tanh_act(t.conv2d(x, t.param(param("decoder.conv1.weight")),
                                   t.param(param("decoder.conv1.bias")), 1, 1));
  std::vector<Tape::NodeId> logits;
  logits.reserve(static_cast<std::size_t>(cfg_.mcl_heads));
  for (int m = 0; m < cfg_.mcl_heads; ++m) {
    const std::string head = "mcl_head." + std::to_string(m);
    logits.push_back(t.conv2d(trunk, t.param(param(head + ".weight")),
                              t.param(param(head + ".bias")), 1, 1));
  }
  return logits;
}

SetLossNodes build_set_loss(Tape& t, const std::vector<Tape::NodeId>& logits,
                            const std::vector<Tensor>& labels, const Assignment* forced) {
  if (logits.empty() || logits.size() != labels.size()) {
    throw std::invalid_argument("build_set_loss: need |logits| == |labels| >= 1");
  }
  const int k = static_cast<int>(logits.size());
  std::vector<Tape::NodeId> probs;
  probs.reserve(logits.size());
  for (auto z : logits) probs.push_back(t.sigmoid(z));

  std::vector<std::vector<Tape::NodeId>> pair_loss(static_cast<std::size_t>(k));
  CostMatrix cost(k);
  for (int m = 0; m < k; ++m) {
    for (int j = 0; j < k; ++j) {
      auto node = t.dice_pair_loss(probs[static_cast<std::size_t>(m)],
                                   labels[static_cast<std::size_t>(j)]);
      pair_loss[static_cast<std::size_t>(m)].push_back(node);
      cost.at(m, j) = t.scalar(node);
    }
  }

  SetLossNodes out;
  out.assignment = forced ? *forced : hungarian(cost).first;
  std::vector<Tape::NodeId> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  for (int m = 0; m < k; ++m) {
    chosen.push_back(
        pair_loss[static_cast<std::size_t>(m)]
                 [static_cast<std::size_t>(out.assignment.mapping[static_cast<std::size_t>(m)])]);
  }
  out.loss = t.sum_scalars(chosen, 1.0);
  return out;
}

Tape::NodeId build_mcl_loss(Tape& t, const std::vector<Tape::NodeId>& logits,
                            const std::vector<Tensor>& labels) {
  if (logits.empty() || labels.empty()) {
    throw std::invalid_argument("build_mcl_loss: need non-empty logits and labels");
  }
  std::vector<Tape::NodeId> probs;
  probs.reserve(logits.size());
  for (auto z : logits) probs.push_back(t.sigmoid(z));

  std::vector<Tape::NodeId> winners;
  for (const auto& label : labels) {
    Tape::NodeId best = -1;
    double best_val = 0.0;
    for (auto p : probs) {
      auto node = t.dice_pair_loss(p, label);
      if (best < 0 || t.scalar(node) < best_val) {
        best = node;
        best_val = t.scalar(node);
      }
    }
    winners.push_back(best);
  }
  return t.sum_scalars(winners, 1.0 / static_cast<double>(labels.size()));
}

// Checkpoint container: magic, u64 little-endian header length, JSON header
// (config, extra metadata, array directory), then raw float32 data.
namespace {
constexpr char kMagic[8] = {'S', 'E', 'Q', 'S', 'E', 'G', 'C', '1'};
}

void Model::save_checkpoint(const std::string& path, const nlohmann::json& extra) const {
  nlohmann::json header;
  header["config"] = cfg_.to_json();
  header["extra"] = extra;
  nlohmann::json arrays = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : params_) {
    const auto nbytes = static_cast<std::uint64_t>(p.value.numel()) * sizeof(float);
    arrays.push_back({{"name", p.name},
                      {"shape", p.value.shape()},
                      {"dtype", "f32"},
                      {"offset", offset},
                      {"nbytes", nbytes}});
    offset += nbytes;
  }
  header["arrays"] = arrays;
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t hlen = header_text.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  std::vector<float> buf;
  for (const auto& p : params_) {
    buf.resize(static_cast<std::size_t>(p.value.numel()));
    for (std::int64_t i = 0; i < p.value.numel(); ++i) buf[static_cast<std::size_t>(i)] =
        static_cast<float>(p.value[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw FormatError("checkpoint: short write to " + path);
}

Model Model::load_checkpoint(const std::string& path, nlohmann::json* extra_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint: bad magic in " + path);
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen == 0 || hlen > (1u << 26)) throw FormatError("checkpoint: bad header in " + path);
  std::string header_text(hlen, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw FormatError("checkpoint: truncated header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: bad header JSON in " + path + ": " + e.what());
  }

  Model model(ModelConfig::from_json(header.at("config")), /*seed=*/0);
  if (extra_out) *extra_out = header.value("extra", nlohmann::json::object());

  const auto& arrays = header.at("arrays");
  if (arrays.size() != model.params_.size()) {
    throw FormatError("checkpoint: array count mismatch in " + path);
  }
  std::vector<float> buf;
  for (std::size_t i = 0; i < model.params_.size(); ++i) {
    auto& p = model.params_[i];
    const auto& a = arrays[i];
    if (a.at("name").get<std::string>() != p.name ||
        a.at("shape").get<std::vector<int>>() != p.value.shape()) {
      throw FormatError("checkpoint: array mismatch for " + p.name + " in " + path);
    }
    buf.resize(static_cast<std::size_t>(p.value.numel()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw FormatError("checkpoint: truncated data for " + p.name + " in " + path);
    for (std::int64_t j = 0; j < p.value.numel(); ++j) p.value[j] = buf[static_cast<std::size_t>(j)];
  }
  return model;
}

}  // namespace seqseg

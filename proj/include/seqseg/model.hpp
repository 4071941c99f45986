#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqseg/autodiff.hpp"
#include "seqseg/mask_ops.hpp"
#include "seqseg/matching.hpp"
#include "seqseg/tensor.hpp"

namespace seqseg {

// Box prompt in input-image pixel coordinates, inclusive corners.
struct BBoxPrompt {
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

void validate_bbox(const BBoxPrompt& b, int image_size);

struct ModelConfig {
  int image_size = 64;
  int downsample = 4;       // fixed by the encoder stride pattern (2,2,1)
  int embed_channels = 32;  // C
  int hidden_channels = 8;  // C_h
  int mcl_heads = 3;        // output heads, mcl variant only
  std::string variant = "seqsam";  // "seqsam" | "mcl"
  bool frozen_encoder = false;

  int embed_size() const { return image_size / downsample; }
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Box raster at embedding resolution: a cell is set iff its pixel block
// intersects the box.
Tensor rasterize_bbox(const BBoxPrompt& b, int image_size, int downsample);

// Area downsample of a full-resolution label to embedding resolution:
// block mean >= thresh -> 1. Returns an (h,w) 0/1-valued tensor.
Tensor downsample_label(const BinaryMask& label, int factor, double thresh = 0.5);

// Nearest-neighbor upsample of an embedding-resolution probability grid
// ((1,h,w) or (h,w)) back to pixel resolution.
ProbMask upsample_prob_nearest(const Tensor& prob, int factor);

// Toy promptable segmentation backbone with a recurrent prompt-feedback
// module. All forward passes build nodes on a caller-owned Tape.
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);
  Model(Model&& o) noexcept
      : cfg_(std::move(o.cfg_)), params_(std::move(o.params_)),
        encode_calls_(o.encode_calls_.load()) {}
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  Param& param(const std::string& name);

  Tape::NodeId encode(Tape& t, const Tensor& image);
  Tape::NodeId embed_bbox(Tape& t, const BBoxPrompt& b);
  // prompt < 0 means no mask prompt (step 1); injection is additive.
  Tape::NodeId decode_step(Tape& t, Tape::NodeId embedding, Tape::NodeId bbox_embed,
                           Tape::NodeId prompt);

  struct RecurrentOut {
    Tape::NodeId hidden_next;
    Tape::NodeId prompt_embed;
  };
  // H_next = conv2([H,Z]); Z_plus = conv1([H,Z]). With bptt off, the logits
  // entering the conv1 path are detached; the conv2 path stays connected.
  RecurrentOut recurrent_update(Tape& t, Tape::NodeId hidden, Tape::NodeId logits,
                                bool bptt = true);

  struct Unrolled {
    Tape::NodeId embedding = -1;
    std::vector<Tape::NodeId> logits;   // M nodes, each (1,h,w)
    std::vector<Tape::NodeId> hiddens;  // hidden state entering each step
    std::vector<Tape::NodeId> prompts;  // prompt embedding entering steps 2..M
  };
  Unrolled unroll(Tape& t, const Tensor& image, const BBoxPrompt& b, int M, bool bptt);

  // One decode, mcl_heads parallel output heads.
  std::vector<Tape::NodeId> mcl_forward(Tape& t, const Tensor& image, const BBoxPrompt& b);

  long encode_calls() const { return encode_calls_.load(); }
  void reset_encode_calls() { encode_calls_ = 0; }

  void save_checkpoint(const std::string& path, const nlohmann::json& extra) const;
  static Model load_checkpoint(const std::string& path, nlohmann::json* extra_out = nullptr);

 private:
  ModelConfig cfg_;
  std::vector<Param> params_;
  std::atomic<long> encode_calls_ = 0;
};

struct SetLossNodes {
  Tape::NodeId loss = -1;
  Assignment assignment;
};

// Hungarian-matched sum of pairwise soft dice losses over sigmoid(logits).
// The assignment is recomputed from current values (or forced) and is a
// constant for the backward pass.
SetLossNodes build_set_loss(Tape& t, const std::vector<Tape::NodeId>& logits,
                            const std::vector<Tensor>& labels,
                            const Assignment* forced = nullptr);

// Winner-takes-all baseline objective: mean over labels of the minimum
// pairwise soft dice loss across heads.
Tape::NodeId build_mcl_loss(Tape& t, const std::vector<Tape::NodeId>& logits,
                            const std::vector<Tensor>& labels);

}  // namespace seqseg

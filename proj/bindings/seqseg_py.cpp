#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "seqseg/harness.hpp"
#include "seqseg/mask_ops.hpp"
#include "seqseg/matching.hpp"
#include "seqseg/metrics.hpp"
#include "seqseg/model.hpp"
#include "seqseg/sequence_control.hpp"
#include "seqseg/synthdata.hpp"

namespace py = pybind11;
using namespace seqseg;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

BinaryMask to_mask(const DArray& arr) {
  if (arr.ndim() != 2) throw std::invalid_argument("mask must be 2-D");
  BinaryMask m(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
  const double* src = arr.data();
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = src[i] != 0.0 ? 1 : 0;
  return m;
}

ProbMask to_prob(const DArray& arr) {
  if (arr.ndim() != 2) throw std::invalid_argument("probability mask must be 2-D");
  ProbMask p(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
  std::copy(arr.data(), arr.data() + p.data.size(), p.data.begin());
  return p;
}

py::array_t<std::uint8_t> from_mask(const BinaryMask& m) {
  py::array_t<std::uint8_t> out({m.height, m.width});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

py::array_t<double> from_vec2d(const std::vector<double>& v, int h, int w) {
  py::array_t<double> out({h, w});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<BinaryMask> to_masks(const std::vector<DArray>& arrs) {
  std::vector<BinaryMask> out;
  out.reserve(arrs.size());
  for (const auto& a : arrs) out.push_back(to_mask(a));
  return out;
}

std::vector<ProbMask> to_probs(const std::vector<DArray>& arrs) {
  std::vector<ProbMask> out;
  out.reserve(arrs.size());
  for (const auto& a : arrs) out.push_back(to_prob(a));
  return out;
}

CostMatrix to_cost(const DArray& arr) {
  if (arr.ndim() != 2 || arr.shape(0) != arr.shape(1)) {
    throw std::invalid_argument("cost matrix must be square");
  }
  CostMatrix c(static_cast<int>(arr.shape(0)));
  std::copy(arr.data(), arr.data() + c.entries.size(), c.entries.begin());
  return c;
}

}  // namespace

PYBIND11_MODULE(_seqseg, m) {
  m.doc() = "Sequential multi-hypothesis segmentation core";

  // mask ops
  m.def("dice", [](const DArray& a, const DArray& b) { return dice(to_mask(a), to_mask(b)); });
  m.def("iou", [](const DArray& a, const DArray& b) { return iou(to_mask(a), to_mask(b)); });
  m.def("dist", [](const DArray& a, const DArray& b) { return dist(to_mask(a), to_mask(b)); });
  m.def("soft_dice_loss", [](const DArray& p, const DArray& y) {
    return soft_dice_loss(to_prob(p), to_mask(y));
  });
  m.def("soft_dice_loss_grad", [](const DArray& p, const DArray& y) {
    ProbMask pm = to_prob(p);
    auto g = soft_dice_loss_grad(pm, to_mask(y));
    return from_vec2d(g, pm.height, pm.width);
  });
  m.def("binarize", [](const DArray& p, double threshold) {
    return from_mask(binarize(to_prob(p), threshold));
  }, py::arg("p"), py::arg("threshold") = 0.5);
  m.def("majority_vote", [](const std::vector<DArray>& masks) {
    return from_mask(majority_vote(to_masks(masks)));
  });

  // matching
  m.def("build_cost_matrix", [](const std::vector<DArray>& preds,
                                const std::vector<DArray>& labels) {
    auto c = build_cost_matrix(to_probs(preds), to_masks(labels));
    return from_vec2d(c.entries, c.n, c.n);
  });
  m.def("hungarian", [](const DArray& cost) {
    auto [a, total] = hungarian(to_cost(cost));
    return py::make_tuple(a.mapping, total);
  });
  m.def("brute_force_assignment", [](const DArray& cost) {
    auto [a, total] = brute_force_assignment(to_cost(cost));
    return py::make_tuple(a.mapping, total);
  });
  m.def("set_loss", [](const std::vector<DArray>& preds, const std::vector<DArray>& labels) {
    auto r = set_loss(to_probs(preds), to_masks(labels));
    return py::make_tuple(r.loss, r.assignment.mapping);
  });
  m.def("set_loss_grad", [](const std::vector<DArray>& preds, const std::vector<DArray>& labels,
                            std::optional<std::vector<int>> mapping) {
    auto probs = to_probs(preds);
    auto masks = to_masks(labels);
    Assignment a;
    a.mapping = mapping ? *mapping : set_loss(probs, masks).assignment.mapping;
    auto grads = set_loss_grad(probs, masks, a);
    py::list out;
    for (std::size_t i = 0; i < grads.size(); ++i) {
      out.append(from_vec2d(grads[i], probs[i].height, probs[i].width));
    }
    return out;
  }, py::arg("preds"), py::arg("labels"), py::arg("mapping") = std::nullopt);

  // metrics
  m.def("ged", [](const std::vector<DArray>& preds, const std::vector<DArray>& labels) {
    return ged(to_masks(preds), to_masks(labels));
  });
  m.def("dice_avg", [](const std::vector<DArray>& preds, const std::vector<DArray>& labels) {
    return dice_avg(to_masks(preds), to_masks(labels));
  });
  m.def("wilcoxon_signed_rank", [](const std::vector<double>& a, const std::vector<double>& b) {
    auto r = wilcoxon_signed_rank(a, b);
    return py::make_tuple(r.statistic, r.p_two_sided);
  });

  // sequence control
  m.def("partition", [](int M, int K) {
    auto p = partition(M, K);
    std::vector<std::pair<int, int>> out;
    for (const auto& r : p.ranges) out.emplace_back(r.begin, r.size);
    return out;
  });
  m.def("sample_per_chunk", [](int M, int K, std::uint64_t seed) {
    Rng rng(seed);
    return sample_per_chunk(partition(M, K), rng);
  }, py::arg("M"), py::arg("K"), py::arg("seed"));
  m.def("select_ablation_indices", [](int seq_len, int K, const std::string& mode,
                                      std::uint64_t seed) {
    Rng rng(seed);
    return select_ablation_indices(seq_len, K, ablation_mode_from_string(mode), rng);
  }, py::arg("seq_len"), py::arg("K"), py::arg("mode"), py::arg("seed"));

  // data and harness (JSON-string interface; the python package wraps dicts)
  m.def("generate_dataset_json", [](const std::string& config_json, const std::string& out_dir) {
    DatasetConfig cfg = DatasetConfig::from_json(nlohmann::json::parse(config_json));
    Dataset ds = generate_dataset(cfg);
    write_dataset(ds, out_dir);
    nlohmann::json summary = {{"train", ds.train.size()},
                              {"val", ds.val.size()},
                              {"test", ds.test.size()},
                              {"checksum", dataset_checksum(out_dir)}};
    return summary.dump();
  });
  m.def("train_json", [](const std::string& config_json) {
    TrainConfig cfg = TrainConfig::from_json(nlohmann::json::parse(config_json));
    if (auto s = env_seed_override()) cfg.seed = *s;
    TrainResult r = train(cfg);
    nlohmann::json j = {{"best_epoch", r.best_epoch},
                        {"best_val_loss", r.best_val_loss},
                        {"checkpoint_path", r.checkpoint_path},
                        {"log_path", r.log_path},
                        {"num_epochs", r.epochs.size()}};
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : r.epochs) {
      epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss},
                        {"val_loss", e.val_loss}});
    }
    j["epochs"] = std::move(epochs);
    return j.dump();
  }, py::call_guard<py::gil_scoped_release>());
  m.def("evaluate_json", [](const std::string& checkpoint, const std::string& data_dir,
                            const std::string& split, int num_masks) {
    return evaluate(checkpoint, data_dir, split, num_masks).to_json().dump();
  }, py::call_guard<py::gil_scoped_release>());
  m.def("compare_json", [](const std::string& report_a, const std::string& report_b,
                           const std::string& metric) {
    return compare(read_report(report_a), read_report(report_b), metric).to_json().dump();
  });
  m.def("ablate_json", [](const std::string& config_json, const std::string& out_dir) {
    TrainConfig cfg = TrainConfig::from_json(nlohmann::json::parse(config_json));
    if (auto s = env_seed_override()) cfg.seed = *s;
    return ablate(cfg, out_dir).to_json().dump();
  }, py::call_guard<py::gil_scoped_release>());
  m.def("render_panels", [](const std::string& checkpoint, const std::string& data_dir,
                            const std::string& split, int num_masks, const std::string& out_dir) {
    return render_panels(checkpoint, data_dir, split, num_masks, out_dir);
  });

  // direct model access: probabilities for M masks from a checkpoint
  m.def("predict", [](const std::string& checkpoint, const DArray& image,
                      std::array<int, 4> bbox, int num_masks) {
    Model model = Model::load_checkpoint(checkpoint);
    const int s = model.config().image_size;
    if (image.ndim() != 2 || image.shape(0) != s || image.shape(1) != s) {
      throw std::invalid_argument("predict: image must be " + std::to_string(s) + "x" +
                                  std::to_string(s));
    }
    Tensor img({s, s});
    std::copy(image.data(), image.data() + img.numel(), img.data());
    BBoxPrompt box{bbox[0], bbox[1], bbox[2], bbox[3]};

    Tape tape;
    std::vector<Tape::NodeId> logits;
    if (model.config().variant == "seqsam") {
      logits = model.unroll(tape, img, box, num_masks, true).logits;
    } else {
      logits = select_inference(model.mcl_forward(tape, img, box), num_masks);
    }
    py::array_t<double> out({static_cast<int>(logits.size()), s, s});
    double* dst = out.mutable_data();
    for (std::size_t i = 0; i < logits.size(); ++i) {
      Tensor z = tape.value(logits[i]);
      for (std::int64_t j = 0; j < z.numel(); ++j) z[j] = 1.0 / (1.0 + std::exp(-z[j]));
      ProbMask up = upsample_prob_nearest(z, model.config().downsample);
      std::copy(up.data.begin(), up.data.end(), dst + static_cast<std::ptrdiff_t>(i) * s * s);
    }
    return out;
  });

  m.attr("__version__") = "0.1.0";
}

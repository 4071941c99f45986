#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqseg/tensor.hpp"

namespace seqseg {

// A named trainable array. Gradients accumulate across tape backward passes
// until zero_grad(); frozen params receive no gradient. `index` is the
// position in the owning model's parameter list, used to address external
// per-worker gradient buffers.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  int index = -1;

  Param() = default;
  Param(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())),
        trainable(train) {}

  void zero_grad() { std::fill(grad.vec().begin(), grad.vec().end(), 0.0); }
};

// Reverse-mode tape. Build one per forward pass; node ids index into the tape
// in creation order, and backward() replays them in reverse.
class Tape {
 public:
  using NodeId = int;

  NodeId constant(Tensor value);
  NodeId param(Param& p);  // cached: one leaf per Param per tape

  // Redirect leaf gradient accumulation into an external per-param buffer
  // (indexed by Param::index) instead of Param::grad. Lets concurrent tapes
  // share read-only params while gradients reduce in a deterministic order.
  void set_param_grad_buffers(std::vector<Tensor>* buffers) { grad_buffers_ = buffers; }

  // x:(Cin,H,W) w:(Cout,Cin,kh,kw) b:(Cout) -> (Cout,Ho,Wo)
  NodeId conv2d(NodeId x, NodeId w, NodeId b, int stride, int pad);
  NodeId tanh_act(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId concat_channels(NodeId a, NodeId b);
  // Value copy with no gradient flow to the parent.
  NodeId detach(NodeId x);
  // Scalar node: soft dice loss of a probability map against a constant 0/1
  // label tensor of the same element count.
  NodeId dice_pair_loss(NodeId probs, const Tensor& label);
  // Scalar node: scale * sum of scalar nodes.
  NodeId sum_scalars(const std::vector<NodeId>& ids, double scale);

  void backward(NodeId loss, double seed = 1.0);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  double scalar(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value[0]; }
  bool requires_grad(NodeId id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Param* bound_param = nullptr;
    std::function<void(Tape&, Node&)> backward;
  };

  NodeId push(Node node);
  Node& node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }

  std::vector<Node> nodes_;
  std::unordered_map<const Param*, NodeId> param_nodes_;
  std::vector<Tensor>* grad_buffers_ = nullptr;
};

}  // namespace seqseg

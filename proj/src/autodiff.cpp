#include "seqseg/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "seqseg/mask_ops.hpp"

namespace seqseg {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

struct ConvDims {
  int cin, h, w, cout, kh, kw, ho, wo, stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  if (x.ndim() != 3 || w.ndim() != 4) {
    throw std::invalid_argument("conv2d: expected x rank 3 and w rank 4, got x " +
                                x.shape_string() + " w " + w.shape_string());
  }
  ConvDims d;
  d.cin = x.dim(0);
  d.h = x.dim(1);
  d.w = x.dim(2);
  d.cout = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = pad;
  if (w.dim(1) != d.cin) {
    throw std::invalid_argument("conv2d: channel mismatch, x " + x.shape_string() + " w " +
                                w.shape_string());
  }
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.ho < 1 || d.wo < 1) throw std::invalid_argument("conv2d: kernel larger than padded input");
  return d;
}

// col: (cin*kh*kw) x (ho*wo) row-major
void im2col(const Tensor& x, const ConvDims& d, double* col) {
  const int patch = d.kh * d.kw;
  for (int c = 0; c < d.cin; ++c) {
    const double* xc = x.data() + static_cast<std::size_t>(c) * d.h * d.w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        double* row = col + (static_cast<std::size_t>(c) * patch + ki * d.kw + kj) *
                                (static_cast<std::size_t>(d.ho) * d.wo);
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.stride + ki - d.pad;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * d.stride + kj - d.pad;
            row[static_cast<std::size_t>(oy) * d.wo + ox] =
                (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                    ? xc[static_cast<std::size_t>(iy) * d.w + ix]
                    : 0.0;
          }
        }
      }
    }
  }
}

void col2im_accum(const double* col, const ConvDims& d, Tensor& dx) {
  const int patch = d.kh * d.kw;
  for (int c = 0; c < d.cin; ++c) {
    double* xc = dx.data() + static_cast<std::size_t>(c) * d.h * d.w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        const double* row = col + (static_cast<std::size_t>(c) * patch + ki * d.kw + kj) *
                                      (static_cast<std::size_t>(d.ho) * d.wo);
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.stride + ki - d.pad;
          if (iy < 0 || iy >= d.h) continue;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * d.stride + kj - d.pad;
            if (ix < 0 || ix >= d.w) continue;
            xc[static_cast<std::size_t>(iy) * d.w + ix] +=
                row[static_cast<std::size_t>(oy) * d.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tape::NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::constant(Tensor value) {
  Node n;
  n.grad = Tensor::zeros(value.shape());
  n.value = std::move(value);
  n.requires_grad = false;
  return push(std::move(n));
}

Tape::NodeId Tape::param(Param& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return it->second;
  Node n;
  n.value = p.value;
  n.grad = Tensor::zeros(p.value.shape());
  n.requires_grad = p.trainable;
  n.bound_param = &p;
  n.backward = [](Tape& t, Node& self) {
    Param* prm = self.bound_param;
    Tensor& sink = t.grad_buffers_ ? (*t.grad_buffers_)[static_cast<std::size_t>(prm->index)]
                                   : prm->grad;
    for (std::int64_t i = 0; i < self.grad.numel(); ++i) sink[i] += self.grad[i];
  };
  NodeId id = push(std::move(n));
  param_nodes_.emplace(&p, id);
  return id;
}

Tape::NodeId Tape::conv2d(NodeId x, NodeId w, NodeId b, int stride, int pad) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  ConvDims d = conv_dims(xv, wv, stride, pad);
  if (bv.numel() != d.cout) throw std::invalid_argument("conv2d: bias size mismatch");

  const std::int64_t ckk = static_cast<std::int64_t>(d.cin) * d.kh * d.kw;
  const std::int64_t hw = static_cast<std::int64_t>(d.ho) * d.wo;
  auto col = std::make_shared<Tensor>(Tensor::zeros({static_cast<int>(ckk), static_cast<int>(hw)}));
  im2col(xv, d, col->data());

  Tensor out({d.cout, d.ho, d.wo});
  {
    MapConstMat wm(wv.data(), d.cout, ckk);
    MapConstMat cm(col->data(), ckk, hw);
    MapMat om(out.data(), d.cout, hw);
    om.noalias() = wm * cm;
    for (int o = 0; o < d.cout; ++o) om.row(o).array() += bv[o];
  }

  Node n;
  n.grad = Tensor::zeros(out.shape());
  n.value = std::move(out);
  n.requires_grad = requires_grad(x) || requires_grad(w) || requires_grad(b);
  n.backward = [x, w, b, d, ckk, hw, col](Tape& t, Node& self) {
    MapConstMat gy(self.grad.data(), d.cout, hw);
    if (t.requires_grad(w)) {
      MapConstMat cm(col->data(), ckk, hw);
      MapMat gw(t.node(w).grad.data(), d.cout, ckk);
      gw.noalias() += gy * cm.transpose();
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.node(b).grad;
      for (int o = 0; o < d.cout; ++o) gb[o] += gy.row(o).sum();
    }
    if (t.requires_grad(x)) {
      RowMat gcol(ckk, hw);
      MapConstMat wm(t.node(w).value.data(), d.cout, ckk);
      gcol.noalias() = wm.transpose() * gy;
      col2im_accum(gcol.data(), d, t.node(x).grad);
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::tanh_act(NodeId x) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < xv.numel(); ++i) out[i] = std::tanh(xv[i]);
  Node n;
  n.grad = Tensor::zeros(out.shape());
  n.value = std::move(out);
  n.requires_grad = requires_grad(x);
  n.backward = [x](Tape& t, Node& self) {
    if (!t.requires_grad(x)) return;
    Tensor& gx = t.node(x).grad;
    for (std::int64_t i = 0; i < self.value.numel(); ++i) {
      gx[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::sigmoid(NodeId x) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < xv.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  Node n;
  n.grad = Tensor::zeros(out.shape());
  n.value = std::move(out);
  n.requires_grad = requires_grad(x);
  n.backward = [x](Tape& t, Node& self) {
    if (!t.requires_grad(x)) return;
    Tensor& gx = t.node(x).grad;
    for (std::int64_t i = 0; i < self.value.numel(); ++i) {
      gx[i] += self.grad[i] * self.value[i] * (1.0 - self.value[i]);
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) {
    throw std::invalid_argument("add: shape mismatch " + av.shape_string() + " vs " +
                                bv.shape_string());
  }
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[i];
  Node n;
  n.grad = Tensor::zeros(out.shape());
  n.value = std::move(out);
  n.requires_grad = requires_grad(a) || requires_grad(b);
  n.backward = [a, b](Tape& t, Node& self) {
    for (NodeId src : {a, b}) {
      if (!t.requires_grad(src)) continue;
      Tensor& g = t.node(src).grad;
      for (std::int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i];
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::concat_channels(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.ndim() != 3 || bv.ndim() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2)) {
    throw std::invalid_argument("concat_channels: incompatible shapes " + av.shape_string() +
                                " vs " + bv.shape_string());
  }
  Tensor out({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
  std::copy(av.data(), av.data() + av.numel(), out.data());
  std::copy(bv.data(), bv.data() + bv.numel(), out.data() + av.numel());
  Node n;
  n.grad = Tensor::zeros(out.shape());
  n.value = std::move(out);
  n.requires_grad = requires_grad(a) || requires_grad(b);
  const std::int64_t na = av.numel();
  n.backward = [a, b, na](Tape& t, Node& self) {
    if (t.requires_grad(a)) {
      Tensor& g = t.node(a).grad;
      for (std::int64_t i = 0; i < na; ++i) g[i] += self.grad[i];
    }
    if (t.requires_grad(b)) {
      Tensor& g = t.node(b).grad;
      for (std::int64_t i = na; i < self.grad.numel(); ++i) g[i - na] += self.grad[i];
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::detach(NodeId x) {
  Node n;
  n.value = value(x);
  n.grad = Tensor::zeros(n.value.shape());
  n.requires_grad = false;
  return push(std::move(n));
}

Tape::NodeId Tape::dice_pair_loss(NodeId probs, const Tensor& label) {
  const Tensor& pv = value(probs);
  if (pv.numel() != label.numel()) {
    throw std::invalid_argument("dice_pair_loss: element count mismatch " + pv.shape_string() +
                                " vs " + label.shape_string());
  }
  Tensor out({1});
  out[0] = soft_dice_loss_flat(pv.data(), label.data(), pv.numel());
  Node n;
  n.grad = Tensor::zeros({1});
  n.value = std::move(out);
  n.requires_grad = requires_grad(probs);
  auto lbl = std::make_shared<Tensor>(label);
  n.backward = [probs, lbl](Tape& t, Node& self) {
    if (!t.requires_grad(probs)) return;
    const Tensor& pv = t.node(probs).value;
    soft_dice_loss_grad_flat(pv.data(), lbl->data(), pv.numel(), self.grad[0],
                             t.node(probs).grad.data());
  };
  return push(std::move(n));
}

Tape::NodeId Tape::sum_scalars(const std::vector<NodeId>& ids, double scale) {
  if (ids.empty()) throw std::invalid_argument("sum_scalars: empty list");
  Tensor out({1});
  double total = 0.0;
  bool req = false;
  for (NodeId id : ids) {
    if (value(id).numel() != 1) throw std::invalid_argument("sum_scalars: non-scalar node");
    total += scalar(id);
    req = req || requires_grad(id);
  }
  out[0] = total * scale;
  Node n;
  n.grad = Tensor::zeros({1});
  n.value = std::move(out);
  n.requires_grad = req;
  auto parents = ids;
  n.backward = [parents, scale](Tape& t, Node& self) {
    for (NodeId id : parents) {
      if (t.requires_grad(id)) t.node(id).grad[0] += self.grad[0] * scale;
    }
  };
  return push(std::move(n));
}

void Tape::backward(NodeId loss, double seed) {
  Node& ln = node(loss);
  if (ln.value.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  ln.grad[0] += seed;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad && n.backward) n.backward(*this, n);
  }
}

}  // namespace seqseg

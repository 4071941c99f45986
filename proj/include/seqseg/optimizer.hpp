#pragma once

#include <vector>

#include "seqseg/autodiff.hpp"

namespace seqseg {

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// AdamW with decoupled weight decay. Frozen params are skipped entirely.
class AdamW {
 public:
  AdamW(AdamWConfig cfg, std::vector<Param>& params);

  void step();
  void zero_grad();

 private:
  AdamWConfig cfg_;
  std::vector<Param>* params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long t_ = 0;
};

}  // namespace seqseg

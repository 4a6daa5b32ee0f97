#pragma once

#include <vector>

#include "satv2x/nn/tensor.hpp"

namespace satv2x::nn {

// Adam with bias correction; moment buffers persist across steps.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, double lr,
       double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Applies one update from the gradients currently stored in the
  // parameters. Does not zero them.
  void step();

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  struct Slot {
    Tensor m, v;
  };
  std::vector<Parameter*> params_;
  std::vector<Slot> slots_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace satv2x::nn

#pragma once

#include <vector>

#include "cmask/tensor.hpp"

namespace cmask {

// Adam with bias correction. Parameters without an accumulated gradient are
// treated as having a zero gradient for the step.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();

  long step_count() const { return t_; }
  double lr() const { return lr_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace cmask

#pragma once

// Finite-difference verification harness for the compute graph. `make_loss`
// must rebuild a fresh scalar graph from the leaf's current values on every
// call; the leaf's analytic gradient is then compared against central
// differences coordinate by coordinate.

#include <algorithm>
#include <cmath>
#include <functional>

#include "cmask/tensor.hpp"

namespace oracle {

struct GradCheckResult {
  double max_abs_err = 0.0;
  double max_analytic = 0.0;
};

inline GradCheckResult grad_check(const std::function<cmask::Tensor()>& make_loss,
                                  cmask::Tensor leaf, double h = 1e-6) {
  leaf.zero_grad();
  cmask::Tensor loss = make_loss();
  loss.backward();
  std::vector<double> analytic = leaf.grad();

  GradCheckResult res;
  auto& v = leaf.value();
  for (size_t i = 0; i < v.size(); ++i) {
    double saved = v[i];
    v[i] = saved + h;
    double up = make_loss().item();
    v[i] = saved - h;
    double down = make_loss().item();
    v[i] = saved;
    double fd = (up - down) / (2.0 * h);
    res.max_abs_err = std::max(res.max_abs_err, std::abs(fd - analytic[i]));
    res.max_analytic = std::max(res.max_analytic, std::abs(analytic[i]));
  }
  return res;
}

}  // namespace oracle

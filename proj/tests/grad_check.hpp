#pragma once
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "car/tensor.hpp"

namespace car::testing {

// Central-difference gradient check. `f` must rebuild the computation from
// the leaves on every call and return a scalar. Returns the worst relative
// error across all leaf entries.
inline double max_grad_rel_error(std::vector<Tensor> leaves,
                                 const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                 double step = 1e-4) {
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = f(leaves);
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) analytic.push_back(leaf.grad());

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].values();
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const double orig = vals[k];
      double up = 0.0, dn = 0.0;
      {
        NoGrad off;
        vals[k] = orig + step;
        up = f(leaves).item();
        vals[k] = orig - step;
        dn = f(leaves).item();
        vals[k] = orig;
      }
      const double fd = (up - dn) / (2.0 * step);
      const double an = analytic[li].empty() ? 0.0 : analytic[li][k];
      const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-4});
      worst = std::max(worst, std::fabs(fd - an) / denom);
    }
  }
  return worst;
}

}  // namespace car::testing

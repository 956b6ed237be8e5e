#pragma once

#include <vector>

namespace iphkit {

// Truncated Poisson(lambda) pmf for uniformization sums.  Weights cover
// k in [left, right]; the neglected mass outside the window is below `tail`.
// Built from the mode outward with the stable ratio recurrence, seeded by one
// log-space evaluation, so it stays finite for large lambda.
struct PoissonWindow {
  int left = 0;
  int right = 0;
  std::vector<double> weights;  // weights[k - left] = pmf(k)

  double pmf(int k) const {
    return (k < left || k > right) ? 0.0 : weights[k - left];
  }
};

PoissonWindow poisson_window(double lambda, double tail);

}  // namespace iphkit

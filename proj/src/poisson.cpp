#include "iphkit/poisson.hpp"

#include <cmath>
#include <deque>

#include "iphkit/errors.hpp"

namespace iphkit {

PoissonWindow poisson_window(double lambda, double tail) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("poisson_window: lambda must be finite and non-negative");
  }
  PoissonWindow win;
  if (lambda == 0.0) {
    win.left = win.right = 0;
    win.weights = {1.0};
    return win;
  }

  int mode = static_cast<int>(lambda);
  double pm = std::exp(mode * std::log(lambda) - lambda - std::lgamma(mode + 1.0));
  std::deque<double> w{pm};
  int left = mode, right = mode;

  // Extend upward: above the mode the pmf decays at least geometrically with
  // ratio lambda/(k+1), which bounds the rest of the upper tail.
  double cur = pm;
  for (;;) {
    double ratio = lambda / (right + 1.0);
    if (ratio < 1.0 && cur * ratio / (1.0 - ratio) < 0.5 * tail) break;
    ++right;
    cur *= lambda / right;
    w.push_back(cur);
    if (right > mode + 10000000) throw ConvergenceError("poisson_window: upper tail not closing");
  }
  // Extend downward symmetrically; ratio k/lambda bounds the lower tail.
  cur = pm;
  while (left > 0) {
    double ratio = left / lambda;
    if (ratio < 1.0 && cur * ratio / (1.0 - ratio) < 0.5 * tail) break;
    cur *= left / lambda;
    --left;
    w.push_front(cur);
  }

  win.left = left;
  win.right = right;
  win.weights.assign(w.begin(), w.end());
  return win;
}

}  // namespace iphkit

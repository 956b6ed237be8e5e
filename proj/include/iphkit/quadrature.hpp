#pragma once

#include <functional>
#include <vector>

namespace iphkit {

struct QuadratureResult {
  double value = 0.0;
  // Largest per-interval tolerance that was actually met.  Equals the request
  // unless some subinterval hit the recursion depth cap.
  double achieved_tol = 0.0;
  bool converged = true;
};

// Adaptive Simpson integration of fn over [a, b].  The interval is first cut
// at the given breakpoints (kinks, support edges, histogram bin edges, segment
// boundaries); each resulting piece is integrated to per-interval tolerance
// `tol` with the usual Richardson (S(a,m)+S(m,b)-S(a,b))/15 error estimate.
// Recursion never exceeds `max_depth` levels per piece.
QuadratureResult integrate_adaptive(const std::function<double(double)>& fn,
                                    double a, double b,
                                    const std::vector<double>& breakpoints = {},
                                    double tol = 1e-9, int max_depth = 40);

}  // namespace iphkit

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "iphkit/chain.hpp"
#include "iphkit/density.hpp"

namespace iphkit {

// L1 distance between the target density and the candidate's absorption-time
// density, integrated over [0, T] with T picked so the neglected tail mass of
// both sides stays below `tail_tol`; the analytic tail difference beyond T is
// added back.  The value always lands in [0, 2].  Point masses the candidate
// places on the grid (deterministic jumps straight to absorption) count with
// their full mass.  Throws ConvergenceError when the quadrature cannot reach
// its per-interval tolerance.
double err_metric(const DensityModel& target, const DensityModel& candidate,
                  double tail_tol = 1e-7);
double err_metric(const DensityModel& target, const PhChain& candidate, double tail_tol = 1e-7);
double err_metric(const DensityModel& target, const DctmcChain& candidate, double tail_tol = 1e-7);

// Raw-function flavour for densities that only exist as code.  The hint gives
// the candidate's support bound (may be +inf); without a cdf the horizon rests
// on the target's tail plus the hint.
double err_metric(const DensityModel& target, const std::function<double(double)>& candidate,
                  double candidate_support_high, double tail_tol = 1e-7);

struct FitOptions {
  int max_rate_evals = 200;           // distance evaluations per rate search
  std::uint64_t em_samples = 100000;  // sample budget for mixture EM
  int em_max_iters = 200;
  double em_tol = 1e-7;               // relative log-likelihood improvement cutoff
  int max_partitions = 200;           // cap on phase-partition candidates
  std::uint64_t seed = 0;             // EM sampling seed
};

struct FitResult {
  PhChain chain;                        // absorbing phase 0, `phases` transient phases
  std::optional<DensityModel> density;  // closed form of the fitted law
  double err = 2.0;                     // L1 distance to the target
  int phases = 0;
  std::string family;                   // "erlang" or "hyper-erlang"
  std::string detail;                   // human-readable parameter summary
  double seconds = 0.0;                 // wall time spent fitting
  bool converged = true;
  std::vector<std::string> warnings;
};

// Fit a chain of `phases` equal-rate phases in series.  The initial mass may
// enter below the top of the chain, so the absorption time is Erlang(k, rate)
// for some k <= phases; candidate entry depths are ranked by the target's
// squared coefficient of variation and each is refined by a golden-section
// search on the log rate, seeded at (depth / mean).  The best distance never
// exceeds the distance at the seed rate.
FitResult fit_erlang(const DensityModel& target, int phases, const FitOptions& opts = {});

// Fit a mixture of `branches` Erlang chains whose phase counts sum to
// `phases`.  Phase partitions are enumerated balanced-first up to the budget;
// each candidate's weights and rates come from expectation-maximization over
// samples of the target, and the candidate with the least L1 distance wins.
// With branches == 1 the plain fit_erlang result competes as a candidate, so
// the mixture fit is never worse than the chain fit.
FitResult fit_hyper_erlang(const DensityModel& target, int phases, int branches,
                           const FitOptions& opts = {});

// Named fitter factory for the pipeline layers: "erlang", "hyper-erlang"
// (defaults to 4 branches), or "hyper-erlang:<b>".
using Fitter = std::function<FitResult(const DensityModel&, int)>;
Fitter make_fitter(const std::string& name, const FitOptions& opts = {});

// Chain builders shared with the interval pipeline and tests.
// A series chain of `phases` phases at one rate, initial mass on `entry`.
PhChain erlang_chain(int phases, int entry, double rate);
// Parallel Erlang branches sharing phase 0; initial mass = branch weights.
PhChain hyper_erlang_chain(const std::vector<DensityModel::HyperBranch>& branches);

}  // namespace iphkit

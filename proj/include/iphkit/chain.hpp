#pragma once

#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "iphkit/gsmp.hpp"

namespace iphkit {

// Absorbing continuous phase process.  Phases are 0..phases with 0 the single
// absorbing phase; every transient phase i >= 1 has an exponential exit rate
// and a successor distribution over all phases.  The absorption time is the
// modelled delay.
struct PhChain {
  struct Exit {
    double rate = 0.0;                          // 0 means no exponential exit
    std::vector<std::pair<int, double>> succ;   // over phases 0..n, empty iff rate == 0
  };

  int phases = 0;
  std::vector<std::pair<int, double>> init;     // mass on transient phases only
  std::vector<Exit> exits;                      // exits[i - 1] belongs to phase i

  void validate() const;  // throws ValidationError
};

// Deterministic-delay event attached to a chain: its clock starts when the
// process enters an active phase from an inactive one and keeps running across
// moves between active phases.
struct ChainDetEvent {
  std::string id;
  double delay = 0.0;
  std::vector<int> active;                                      // ascending phase list
  std::map<int, std::vector<std::pair<int, double>>> succ;      // per active phase
};

// PhChain extended with deterministic events.
struct DctmcChain {
  PhChain ctmc;
  std::vector<ChainDetEvent> det;

  void validate() const;  // throws ValidationError
};

// Absorption-time law of a chain, evaluated by uniformization.  For a chain
// with deterministic events the evaluator requires the segment structure
// where the deterministic firings happen on a fixed time grid: from the init
// support, the exponentially reachable phases must all carry the same single
// deterministic event (or none, for the final unbounded segment), and each
// firing leads to the next such group.  Anything else throws
// PreconditionError("unsupported topology ...").
//
// Per segment the evaluator caches the series c_k = (beta P^k) r so repeated
// density/cdf evaluations cost O(window) each.  Deterministic jumps straight
// into phase 0 are allowed and show up as cdf jumps at the grid point (the
// density reports only the continuous part).  Not thread-safe: the series
// cache grows lazily.
class AbsorptionCurve {
 public:
  explicit AbsorptionCurve(const PhChain& chain, double tol = 1e-12);
  explicit AbsorptionCurve(const DctmcChain& chain, double tol = 1e-12);

  double density(double t) const;
  double cdf(double t) const;

  // Smallest t with cdf(t) >= 1 - tail.
  double upper_quantile(double tail) const;

  // Segment grid times (0 excluded), natural quadrature breakpoints.
  std::vector<double> grid() const;

  // Point masses the deterministic jumps place directly into phase 0, as
  // (time, mass) pairs.  Empty for plain chains.
  const std::vector<std::pair<double, double>>& atoms() const { return atoms_; }

 private:
  struct Segment {
    double start = 0.0;
    double length = std::numeric_limits<double>::infinity();
    std::vector<double> beta;            // transient mass by phase index 0..n-1
    double absorbed_before = 0.0;        // cdf value at `start`
    mutable std::vector<double> dens_coeff;
    mutable std::vector<double> surv_coeff;
    mutable std::vector<double> power;   // beta P^k for the next k to append
  };

  void setup_matrix(const PhChain& chain);
  void build_segments(const DctmcChain& chain);
  void extend(const Segment& seg, int kmax) const;
  std::vector<double> evolve(const std::vector<double>& beta, double dt) const;
  const Segment& segment_at(double t) const;

  int n_ = 0;
  double lambda_ = 0.0;
  double tol_;
  std::vector<std::vector<std::pair<int, double>>> p_rows_;  // uniformized transient matrix
  std::vector<double> absorb_rate_;                          // rate into phase 0 per phase
  std::vector<Segment> segments_;
  std::vector<std::pair<double, double>> atoms_;
};

// One-shot helpers around AbsorptionCurve.
double reach_time_density(const PhChain& chain, double t, double tol = 1e-12);
double dctmc_reach_time_density(const DctmcChain& chain, double t, double tol = 1e-12);

// Chains serialize as ordinary models: states "0".."n", one exponential exit
// event per transient phase, deterministic events carried over.
Gsmp chain_to_gsmp(const DctmcChain& chain);
Gsmp chain_to_gsmp(const PhChain& chain);

// Structural inverse of chain_to_gsmp.  Accepts any model whose states form an
// absorbing chain: exactly one dead state, no general events, at most one
// deterministic event per state; concurrent exponential events are merged into
// the phase exit.  Throws ValidationError when the shape does not fit.
DctmcChain chain_from_gsmp(const Gsmp& m);

}  // namespace iphkit

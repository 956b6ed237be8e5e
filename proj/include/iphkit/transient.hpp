#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "iphkit/gsmp.hpp"

namespace iphkit {

// Dense start distribution, index-aligned with m.states.
std::vector<double> init_vector(const Gsmp& m);

struct TransientResult {
  std::vector<double> dist;  // index-aligned with m.states
  std::vector<std::string> warnings;
};

// Transient distribution at time t of a model whose active events are all
// exponential, by uniformization: the answer is a Poisson-weighted sum of
// powers of the uniformized jump matrix, truncated so the neglected mass
// stays below eps.  The result sums to 1 within eps; entries pushed below
// zero by roundoff are clamped (and reported when below -1e-12).  A model
// with no exit anywhere returns alpha unchanged.  Requires t >= 0 and
// eps in (0, 1e-3].
TransientResult ctmc_transient(const Gsmp& m, std::vector<double> alpha,
                               double t, double eps = 1e-9);

// Tick length that measures every deterministic delay exactly: the greatest
// common divisor of the delays read as decimals with at most 6 fractional
// digits.  Throws PreconditionError when a delay is not such a decimal or
// when the model has no deterministic events.
double default_delta(const Gsmp& m);

struct DeltaOptions {
  double delta = 0.0;              // 0 means default_delta(m)
  double eps = 1e-9;               // total truncation budget over all windows
  std::size_t state_cap = 1000000; // expanded (state, counters) cap
};

// Transient distribution of a model with exponential and deterministic
// events, emulating every deterministic event with one global tick of
// length delta: an event fires at its floor(delay/delta)-th tick after
// activation.  The engine expands states with per-event tick counters,
// alternates uniformization over each tick window with a counter/firing
// step, and projects back to base states.  t is rounded down to a tick
// multiple (with a warning) when it is not one within 1e-12 relative.
TransientResult dctmc_transient_delta(const Gsmp& m, std::vector<double> alpha,
                                      double t, const DeltaOptions& opts = {});

// Discrete-time chain over regeneration configurations of a model with at
// most one deterministic event active per state.  A configuration is either
// a purely exponential state or a (state, its deterministic event) pair;
// kernel entries of the latter come from a CTMC transient over the event's
// delay in which every state not activating the event is frozen.
struct EmbeddedChain {
  struct Config {
    int state = -1;
    int det = -1;  // event index, -1 for purely exponential configurations
  };

  std::vector<Config> configs;
  std::vector<std::vector<std::pair<int, double>>> kernel;  // per config
  std::vector<char> goal;       // reached the goal set (absorbing, success)
  std::vector<char> absorbing;  // no outgoing kernel row (goal or dead end)
};

EmbeddedChain build_embedded_chain(const Gsmp& m, const std::vector<int>& goal,
                                   double window_eps = 1e-12);

struct SubordinatedOptions {
  double window_eps = 1e-12;  // per-window uniformization truncation
  double solve_tol = 1e-10;   // linear-system residual target
  int max_iters = 200000;     // iterative solver cap
  int direct_limit = 2000;    // largest system solved by elimination
};

struct ReachResult {
  double probability = 0.0;
  int configurations = 0;
  std::string solver;  // "direct" or "iterative"
  std::vector<std::string> warnings;
};

// Unbounded probability of reaching any goal state, by absorption analysis
// of the embedded configuration chain.  Time-bounded queries are out of
// scope for this engine: mass leaving a deterministic window is frozen and
// re-dispatched in the next epoch, which keeps reachability exact but
// discards the time coordinate.  States activating two deterministic
// events are rejected with a pointer to the delta engine.
ReachResult dctmc_reach_subordinated(const Gsmp& m,
                                     const std::vector<double>& alpha,
                                     const std::vector<int>& goal,
                                     const SubordinatedOptions& opts = {});

// Same, starting from the model's own initial distribution.
ReachResult dctmc_reach_subordinated(const Gsmp& m,
                                     const std::vector<int>& goal,
                                     const SubordinatedOptions& opts = {});

}  // namespace iphkit

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iphkit/gsmp.hpp"
#include "iphkit/rng.hpp"

namespace iphkit {

// What a batch of runs should estimate.
struct SimQuery {
  enum class Kind {
    kTransient,   // P(state in `states` at time t)
    kReach,       // P(eventually reach `states`), optionally capped by horizon
    kHistogram,   // histogram of first-entry times into `states` (dead states if empty)
  };

  Kind kind = Kind::kTransient;
  double t = 0.0;                    // transient horizon
  std::vector<std::string> states;
  int bins = 50;                     // histogram only
  std::optional<double> horizon;     // reach / histogram cap
};

struct SimConfig {
  std::uint64_t seed = 0;
  std::int64_t runs = 10000;
  int jobs = 1;
  std::uint64_t max_steps = 10000000;  // per-run guard against non-absorbing loops
  bool check_clocks = false;           // verify clock bookkeeping on every transition
};

struct HistogramRow {
  double lo = 0.0;
  double hi = 0.0;
  std::int64_t count = 0;
};

struct SimResult {
  double estimate = 0.0;    // probability estimate for transient / reach
  double std_error = 0.0;   // binomial standard error of `estimate`
  std::int64_t runs = 0;
  std::int64_t hits = 0;
  std::int64_t censored = 0;  // runs stopped by the step guard before resolving
  std::vector<HistogramRow> histogram;
  std::vector<double> raw_times;  // first-entry times backing the histogram
};

struct TraceEntry {
  double time = 0.0;
  int event = -1;
  int from = -1;
  int to = -1;
  // remaining clock readings right after the transition, (event, remaining)
  std::vector<std::pair<int, double>> remaining;
};

// Monte-Carlo estimation with per-run split streams: run i draws from
// SeededStream(cfg.seed, i), so results do not depend on cfg.jobs.
SimResult simulate(const Gsmp& m, const SimQuery& query, const SimConfig& cfg);

// Single run with full trace, driven by an arbitrary stream (typically a
// ScriptedStream when replaying recorded draws).  Stops at the horizon, at a
// dead state, or after max_steps transitions.
std::vector<TraceEntry> simulate_trace(const Gsmp& m, RngStream& stream, double horizon,
                                       std::uint64_t max_steps = 100000,
                                       bool check_clocks = true);

}  // namespace iphkit

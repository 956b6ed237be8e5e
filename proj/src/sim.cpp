#include "iphkit/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "iphkit/errors.hpp"

namespace iphkit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-run engine state.  Clocks are stored as absolute firing times, which
// keeps deterministic delays exact (no repeated subtraction drift) and makes
// "remaining" a derived quantity.
struct Runner {
  const Gsmp& m;
  RngStream& stream;
  std::vector<int> tie_rank;
  std::vector<double> fire_time;  // per event, only meaningful while active
  bool check_clocks = false;

  int state = -1;
  double now = 0.0;

  Runner(const Gsmp& model, RngStream& s, bool check)
      : m(model), stream(s), tie_rank(model.tie_rank()),
        fire_time(model.events.size(), kInf), check_clocks(check) {}

  double draw_delay(const Event& e) {
    switch (e.kind) {
      case Event::Kind::kDeterministic:
        return e.delay;
      case Event::Kind::kExponential:
        if (stream.supplies_delays()) return stream.next_delay();
        return -std::log1p(-stream.uniform()) / e.rate;
      case Event::Kind::kGeneral:
        if (stream.supplies_delays()) return stream.next_delay();
        return e.density->sample(stream);
    }
    return 0.0;
  }

  void enter_initial() {
    double u = m.init.size() == 1 ? 0.0 : stream.uniform();
    state = pick(m.init, u);
    now = 0.0;
    for (int e : m.active[state]) fire_time[e] = now + draw_delay(m.events[e]);
  }

  static int pick(const Branching& b, double u) {
    double acc = 0.0;
    for (const auto& [tgt, p] : b) {
      acc += p;
      if (u < acc) return tgt;
    }
    return b.back().first;
  }

  // next event by (firing time, tie rank); -1 when the state is dead
  int next_event() const {
    int best = -1;
    for (int e : m.active[state]) {
      if (best < 0 || fire_time[e] < fire_time[best] ||
          (fire_time[e] == fire_time[best] && tie_rank[e] < tie_rank[best])) {
        best = e;
      }
    }
    return best;
  }

  // fire the pending event; returns it (or -1 on a dead state)
  int step() {
    int ev = next_event();
    if (ev < 0) return -1;
    double fire_at = fire_time[ev];
    const Branching& branching = m.successors(state, ev);
    double u = branching.size() == 1 ? 0.0 : stream.uniform();
    int target = pick(branching, u);

    if (check_clocks) {
      double sojourn = fire_at - now;
      if (sojourn < 0.0) throw std::logic_error("clock bookkeeping: time ran backwards");
      for (int e : m.active[state]) {
        double remain_before = fire_time[e] - now;
        double remain_at_fire = remain_before - sojourn;  // == fire_time[e] - fire_at
        if (remain_at_fire < 0.0) {
          throw std::logic_error("clock bookkeeping: a pending clock expired unfired");
        }
      }
    }

    int from = state;
    now = fire_at;
    state = target;
    // events no longer active lose their clocks; survivors keep theirs;
    // newly active events (and the fired event, if still active) draw fresh
    for (int e : m.active[from]) {
      if (e != ev && m.is_active(state, e)) continue;
      fire_time[e] = kInf;
    }
    for (int e : m.active[state]) {
      if (fire_time[e] == kInf) fire_time[e] = now + draw_delay(m.events[e]);
    }
    return ev;
  }

  double next_fire_time() const {
    int ev = next_event();
    return ev < 0 ? kInf : fire_time[ev];
  }
};

struct RunOutcome {
  int final_state = -1;
  bool resolved = true;     // false when the step guard tripped
  bool hit = false;         // reach / histogram: goal entered
  double hit_time = 0.0;
};

// Reach / first-entry run: stops on entering the goal (bitmask), a dead state,
// or the horizon / step guard.
RunOutcome run_until(Runner& r, const std::vector<char>& goal, double horizon,
                     std::uint64_t max_steps) {
  RunOutcome out;
  r.enter_initial();
  if (goal[r.state]) {
    out.hit = true;
    out.hit_time = 0.0;
    out.final_state = r.state;
    return out;
  }
  for (std::uint64_t steps = 0;; ++steps) {
    if (steps >= max_steps) {
      out.resolved = false;
      break;
    }
    if (r.next_fire_time() > horizon) break;
    if (r.step() < 0) break;
    if (goal[r.state]) {
      out.hit = true;
      out.hit_time = r.now;
      break;
    }
  }
  out.final_state = r.state;
  return out;
}

// Transient run: state occupied at time t.
RunOutcome run_to_time(const Gsmp& m, Runner& r, double t, std::uint64_t max_steps) {
  (void)m;
  RunOutcome out;
  r.enter_initial();
  for (std::uint64_t steps = 0;; ++steps) {
    if (steps >= max_steps) {
      out.resolved = false;
      break;
    }
    if (r.next_fire_time() > t) break;
    if (r.step() < 0) break;
  }
  out.final_state = r.state;
  return out;
}

std::vector<char> state_mask(const Gsmp& m, const std::vector<std::string>& names,
                             bool default_dead) {
  std::vector<char> mask(m.states.size(), 0);
  if (names.empty() && default_dead) {
    for (std::size_t s = 0; s < m.states.size(); ++s) mask[s] = m.active[s].empty() ? 1 : 0;
    return mask;
  }
  for (const auto& name : names) {
    int idx = m.state_index(name);
    if (idx < 0) throw ValidationError("query refers to unknown state '" + name + "'");
    mask[idx] = 1;
  }
  return mask;
}

}  // namespace

SimResult simulate(const Gsmp& m, const SimQuery& query, const SimConfig& cfg) {
  require_valid(m);
  if (cfg.runs <= 0) throw ValidationError("simulate: runs must be positive");

  bool histogram = query.kind == SimQuery::Kind::kHistogram;
  std::vector<char> mask = state_mask(m, query.states, /*default_dead=*/histogram);
  if (!histogram && query.states.empty()) {
    throw ValidationError("simulate: query needs a target state set");
  }
  double horizon = query.horizon.value_or(kInf);
  if (query.kind == SimQuery::Kind::kTransient) horizon = query.t;

  SimResult res;
  res.runs = cfg.runs;
  std::vector<std::int64_t> hits_chunk;
  std::vector<std::int64_t> censored_chunk;
  std::vector<double> times;
  if (histogram) times.assign(cfg.runs, -1.0);  // -1 marks "never absorbed"

  int jobs = std::max(1, cfg.jobs);
  std::int64_t chunk = (cfg.runs + jobs - 1) / jobs;
  hits_chunk.assign(jobs, 0);
  censored_chunk.assign(jobs, 0);

  auto work = [&](int j) {
    std::int64_t lo = j * chunk;
    std::int64_t hi = std::min<std::int64_t>(cfg.runs, lo + chunk);
    for (std::int64_t run = lo; run < hi; ++run) {
      SeededStream stream(cfg.seed, static_cast<std::uint64_t>(run));
      Runner r(m, stream, cfg.check_clocks);
      RunOutcome out;
      if (query.kind == SimQuery::Kind::kTransient) {
        out = run_to_time(m, r, query.t, cfg.max_steps);
        out.hit = mask[out.final_state];
      } else {
        out = run_until(r, mask, horizon, cfg.max_steps);
      }
      if (!out.resolved) ++censored_chunk[j];
      if (out.hit) {
        ++hits_chunk[j];
        if (histogram) times[run] = out.hit_time;
      }
    }
  };

  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (int j = 0; j < jobs; ++j) pool.emplace_back(work, j);
    for (auto& th : pool) th.join();
  }

  for (int j = 0; j < jobs; ++j) {
    res.hits += hits_chunk[j];
    res.censored += censored_chunk[j];
  }
  double p = static_cast<double>(res.hits) / static_cast<double>(res.runs);
  res.estimate = p;
  res.std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(res.runs));

  if (histogram) {
    double tmax = 0.0;
    for (double t : times) tmax = std::max(tmax, t);
    if (!(tmax > 0.0)) tmax = 1.0;
    int bins = std::max(1, query.bins);
    res.histogram.assign(bins, {});
    double width = tmax / bins;
    for (int b = 0; b < bins; ++b) {
      res.histogram[b].lo = b * width;
      res.histogram[b].hi = (b + 1) * width;
    }
    for (double t : times) {
      if (t < 0.0) continue;
      int b = std::min(bins - 1, static_cast<int>(t / width));
      ++res.histogram[b].count;
    }
    res.raw_times.reserve(res.hits);
    for (double t : times) {
      if (t >= 0.0) res.raw_times.push_back(t);
    }
  }
  return res;
}

std::vector<TraceEntry> simulate_trace(const Gsmp& m, RngStream& stream, double horizon,
                                       std::uint64_t max_steps, bool check_clocks) {
  require_valid(m);
  Runner r(m, stream, check_clocks);
  r.enter_initial();
  std::vector<TraceEntry> trace;
  for (std::uint64_t steps = 0; steps < max_steps; ++steps) {
    if (r.next_fire_time() > horizon) break;
    int from = r.state;
    int ev = r.step();
    if (ev < 0) break;
    TraceEntry entry;
    entry.time = r.now;
    entry.event = ev;
    entry.from = from;
    entry.to = r.state;
    for (int e : m.active[r.state]) entry.remaining.emplace_back(e, r.fire_time[e] - r.now);
    trace.push_back(std::move(entry));
  }
  return trace;
}

}  // namespace iphkit

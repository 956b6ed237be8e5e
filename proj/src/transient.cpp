#include "iphkit/transient.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

#include "iphkit/errors.hpp"
#include "iphkit/poisson.hpp"

namespace iphkit {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void check_eps(double eps, const std::string& who) {
  if (!(eps > 0.0) || eps > 1e-3)
    throw PreconditionError(who + ": tolerance must lie in (0, 1e-3], got " +
                            fmt(eps));
}

void check_alpha(const Gsmp& m, const std::vector<double>& alpha,
                 const std::string& who) {
  if (alpha.size() != m.states.size())
    throw PreconditionError(who + ": alpha has " +
                            std::to_string(alpha.size()) + " entries for " +
                            std::to_string(m.states.size()) + " states");
  for (double p : alpha)
    if (!std::isfinite(p) || p < 0.0)
      throw PreconditionError(who +
                              ": alpha entries must be finite and >= 0");
}

void clamp_negatives(std::vector<double>& v, const Gsmp& m,
                     std::vector<std::string>& warnings) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] >= 0.0) continue;
    if (v[i] < -1e-12)
      warnings.push_back("probability " + fmt(v[i]) + " at state '" +
                         m.states[i] + "' clamped to 0");
    v[i] = 0.0;
  }
}

// Uniformized jump matrix: P = I + Q/lambda with lambda the largest total
// exit rate.  Rows include the diagonal, so v <- vP is one sparse pass.
struct Uniformized {
  double lambda = 0.0;
  std::vector<std::vector<std::pair<int, double>>> rows;
};

Uniformized uniformize(const std::vector<std::map<int, double>>& rates) {
  Uniformized u;
  std::vector<double> total(rates.size(), 0.0);
  for (std::size_t i = 0; i < rates.size(); ++i) {
    for (const auto& [j, r] : rates[i]) total[i] += r;
    u.lambda = std::max(u.lambda, total[i]);
  }
  if (u.lambda == 0.0) return u;
  u.rows.resize(rates.size());
  for (std::size_t i = 0; i < rates.size(); ++i) {
    std::map<int, double> p;
    for (const auto& [j, r] : rates[i]) p[j] += r / u.lambda;
    p[static_cast<int>(i)] += 1.0 - total[i] / u.lambda;
    u.rows[i].assign(p.begin(), p.end());
  }
  return u;
}

std::vector<double> uni_transient(const Uniformized& u, std::vector<double> v,
                                  double t, double eps) {
  if (t <= 0.0 || u.lambda <= 0.0) return v;
  PoissonWindow w = poisson_window(u.lambda * t, eps);
  std::vector<double> out(v.size(), 0.0), next(v.size());
  for (int k = 0;; ++k) {
    if (k >= w.left) {
      double wk = w.pmf(k);
      for (std::size_t i = 0; i < v.size(); ++i) out[i] += wk * v[i];
    }
    if (k >= w.right) break;
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
      double vi = v[i];
      if (vi == 0.0) continue;
      for (const auto& [j, p] : u.rows[i]) next[j] += vi * p;
    }
    v.swap(next);
  }
  return out;
}

void require_no_general(const Gsmp& m, const std::string& who) {
  for (std::size_t s = 0; s < m.states.size(); ++s)
    for (int e : m.active[s])
      if (m.events[e].kind == Event::Kind::kGeneral)
        throw PreconditionError(who + ": event '" + m.events[e].id +
                                "' has a general density; approximate the "
                                "model first");
}

}  // namespace

std::vector<double> init_vector(const Gsmp& m) {
  std::vector<double> v(m.states.size(), 0.0);
  for (const auto& [s, p] : m.init) v[s] += p;
  return v;
}

TransientResult ctmc_transient(const Gsmp& m, std::vector<double> alpha,
                               double t, double eps) {
  const std::string who = "ctmc_transient";
  require_valid(m);
  check_alpha(m, alpha, who);
  check_eps(eps, who);
  if (!(t >= 0.0))
    throw PreconditionError(who + ": t must be >= 0, got " + fmt(t));
  for (std::size_t s = 0; s < m.states.size(); ++s)
    for (int e : m.active[s])
      if (m.events[e].kind != Event::Kind::kExponential)
        throw PreconditionError(who + ": event '" + m.events[e].id +
                                "' is not exponential; use the delta or "
                                "subordinated engine");
  TransientResult res;
  if (t == 0.0) {
    res.dist = std::move(alpha);
    return res;
  }
  std::vector<std::map<int, double>> rates(m.states.size());
  for (std::size_t s = 0; s < m.states.size(); ++s)
    for (int e : m.active[s])
      for (const auto& [to, p] : m.successors(static_cast<int>(s), e))
        rates[s][to] += m.events[e].rate * p;
  res.dist = uni_transient(uniformize(rates), std::move(alpha), t, eps);
  clamp_negatives(res.dist, m, res.warnings);
  return res;
}

double default_delta(const Gsmp& m) {
  long long g = 0;
  for (const Event& e : m.events) {
    if (e.kind != Event::Kind::kDeterministic) continue;
    double scaled = e.delay * 1e6;
    double r = std::round(scaled);
    if (r < 1.0 || std::abs(scaled - r) > 1e-9 * std::max(1.0, scaled))
      throw PreconditionError("default_delta: delay " + fmt(e.delay) +
                              " of event '" + e.id +
                              "' is not a decimal with at most 6 fractional "
                              "digits; supply delta explicitly");
    g = std::gcd(g, static_cast<long long>(r));
  }
  if (g == 0)
    throw PreconditionError(
        "default_delta: the model has no deterministic events");
  return static_cast<double>(g) / 1e6;
}

namespace {

// Expanded state of the delta engine: base state plus, per active
// deterministic event, the number of ticks elapsed since its activation.
struct XKey {
  int base = -1;
  std::vector<std::array<int, 2>> ctr;  // (event, ticks), ascending by event

  bool operator<(const XKey& o) const {
    return std::tie(base, ctr) < std::tie(o.base, o.ctr);
  }
};

struct DeltaBuilder {
  const Gsmp& m;
  const std::vector<long long>& fire_at;  // tick count that fires each det
  std::size_t cap;
  std::vector<int> rank;

  std::map<XKey, int> index;
  std::vector<XKey> xs;
  std::deque<int> todo;
  std::vector<std::map<int, double>> rates;  // exponential moves
  std::vector<Branching> tick;               // counter step + firings

  DeltaBuilder(const Gsmp& model, const std::vector<long long>& thresholds,
               std::size_t state_cap)
      : m(model), fire_at(thresholds), cap(state_cap), rank(m.tie_rank()) {}

  double size_bound() const {
    double total = 0.0;
    for (std::size_t s = 0; s < m.states.size(); ++s) {
      double w = 1.0;
      for (int e : m.active[s])
        if (m.events[e].kind == Event::Kind::kDeterministic)
          w *= static_cast<double>(fire_at[e]);
      total += w;
    }
    return total;
  }

  int intern(const XKey& k) {
    auto [it, fresh] = index.emplace(k, static_cast<int>(xs.size()));
    if (fresh) {
      xs.push_back(k);
      rates.emplace_back();
      tick.emplace_back();
      todo.push_back(it->second);
      if (xs.size() > cap)
        throw PreconditionError(
            "dctmc_transient_delta: expanded space exceeds the cap of " +
            std::to_string(cap) + " states (upper bound ~" +
            fmt(size_bound()) + "); raise state_cap or coarsen delta");
    }
    return it->second;
  }

  static int lookup(const XKey& x, int e) {
    for (const auto& [f, c] : x.ctr)
      if (f == e) return c;
    return -1;
  }

  // Post-transition counters per the activation rules: events active on
  // both sides keep their elapsed ticks, fresh activations (and the fired
  // event itself) start at zero.
  XKey after_move(const XKey& x, int to, int fired) const {
    XKey y;
    y.base = to;
    for (int f : m.active[to]) {
      if (m.events[f].kind != Event::Kind::kDeterministic) continue;
      int c = f == fired ? -1 : lookup(x, f);
      y.ctr.push_back({f, c < 0 ? 0 : c});
    }
    return y;
  }

  // Fire every deterministic event whose counter has reached its tick
  // threshold, in tie order, rechecking after each firing.  Counters are
  // passed already incremented.
  Branching fire_chain(int s, const std::map<int, int>& ctr, int depth) {
    if (depth > static_cast<int>(m.events.size()) + 1)
      throw std::logic_error(
          "dctmc_transient_delta: firing chain did not terminate");
    int next = -1;
    for (const auto& [e, c] : ctr)
      if (c >= fire_at[e] && (next < 0 || rank[e] < rank[next])) next = e;
    if (next < 0) {
      XKey k;
      k.base = s;
      for (const auto& [e, c] : ctr) k.ctr.push_back({e, c});
      return {{intern(k), 1.0}};
    }
    std::map<int, double> acc;
    for (const auto& [to, p] : m.successors(s, next)) {
      std::map<int, int> c2;
      for (int f : m.active[to]) {
        if (m.events[f].kind != Event::Kind::kDeterministic) continue;
        if (f == next) {
          c2[f] = 0;
        } else {
          auto it = ctr.find(f);
          c2[f] = it == ctr.end() ? 0 : it->second;
        }
      }
      for (const auto& [i, w] : fire_chain(to, c2, depth + 1))
        acc[i] += p * w;
    }
    return Branching(acc.begin(), acc.end());
  }

  void close() {
    while (!todo.empty()) {
      int xi = todo.front();
      todo.pop_front();
      const XKey x = xs[xi];  // copy: intern() reallocates xs
      std::map<int, double> row;
      for (int b : m.active[x.base]) {
        const Event& ev = m.events[b];
        if (ev.kind == Event::Kind::kDeterministic) continue;
        for (const auto& [to, p] : m.successors(x.base, b))
          row[intern(after_move(x, to, b))] += ev.rate * p;
      }
      std::map<int, int> bumped;
      for (const auto& [e, c] : x.ctr) bumped[e] = c + 1;
      Branching t = fire_chain(x.base, bumped, 0);
      rates[xi] = std::move(row);
      tick[xi] = std::move(t);
    }
  }
};

}  // namespace

TransientResult dctmc_transient_delta(const Gsmp& m, std::vector<double> alpha,
                                      double t, const DeltaOptions& opts) {
  const std::string who = "dctmc_transient_delta";
  require_valid(m);
  check_alpha(m, alpha, who);
  check_eps(opts.eps, who);
  if (!(t >= 0.0))
    throw PreconditionError(who + ": t must be >= 0, got " + fmt(t));
  require_no_general(m, who);
  if (opts.delta < 0.0)
    throw PreconditionError(who + ": delta must be positive, got " +
                            fmt(opts.delta));

  bool any_det = false;
  for (const Event& e : m.events)
    any_det |= e.kind == Event::Kind::kDeterministic;
  if (!any_det) return ctmc_transient(m, std::move(alpha), t, opts.eps);

  TransientResult res;
  double delta = opts.delta > 0.0 ? opts.delta : default_delta(m);

  long long ticks = 0;
  double q = t / delta;
  double r = std::round(q);
  if (std::abs(q - r) <= 1e-12 * std::max(1.0, std::abs(q))) {
    ticks = static_cast<long long>(r);
  } else {
    ticks = static_cast<long long>(std::floor(q));
    res.warnings.push_back("t=" + fmt(t) + " is not a multiple of delta=" +
                           fmt(delta) + "; analyzing t=" +
                           fmt(static_cast<double>(ticks) * delta) +
                           " instead");
  }
  if (ticks == 0) {
    res.dist = std::move(alpha);
    return res;
  }

  std::vector<long long> fire_at(m.events.size(), 0);
  for (std::size_t e = 0; e < m.events.size(); ++e) {
    const Event& ev = m.events[e];
    if (ev.kind != Event::Kind::kDeterministic) continue;
    double ratio = ev.delay / delta;
    long long f = static_cast<long long>(
        std::floor(ratio + 1e-12 * std::max(1.0, ratio)));
    if (f == 0) {
      f = 1;
      res.warnings.push_back("delay " + fmt(ev.delay) + " of event '" +
                             ev.id +
                             "' is shorter than the tick; it fires at the "
                             "first tick");
    }
    fire_at[e] = f;
  }

  DeltaBuilder bld(m, fire_at, opts.state_cap);
  for (std::size_t s = 0; s < m.states.size(); ++s)
    if (alpha[s] > 0.0)
      bld.intern(bld.after_move(XKey{static_cast<int>(s), {}},
                                static_cast<int>(s), -1));
  bld.close();

  std::vector<double> v(bld.xs.size(), 0.0);
  for (std::size_t s = 0; s < m.states.size(); ++s)
    if (alpha[s] > 0.0)
      v[bld.index.at(bld.after_move(XKey{static_cast<int>(s), {}},
                                    static_cast<int>(s), -1))] += alpha[s];

  Uniformized u = uniformize(bld.rates);
  double eps_w = opts.eps / static_cast<double>(ticks);
  std::vector<double> next(v.size());
  for (long long k = 0; k < ticks; ++k) {
    v = uni_transient(u, std::move(v), delta, eps_w);
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == 0.0) continue;
      for (const auto& [j, p] : bld.tick[i]) next[j] += v[i] * p;
    }
    v.swap(next);
  }

  res.dist.assign(m.states.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) res.dist[bld.xs[i].base] += v[i];
  clamp_negatives(res.dist, m, res.warnings);
  return res;
}

namespace {

// Index of the single deterministic event active in each non-goal state,
// -1 when the state is purely exponential.  Goal states are absorbing by
// construction, so whatever they activate never fires.
std::vector<int> single_det_map(const Gsmp& m, const std::set<int>& goalset,
                                const std::string& who) {
  std::vector<int> det(m.states.size(), -1);
  for (std::size_t s = 0; s < m.states.size(); ++s) {
    if (goalset.count(static_cast<int>(s))) continue;
    for (int e : m.active[s]) {
      if (m.events[e].kind != Event::Kind::kDeterministic) continue;
      if (det[s] >= 0)
        throw PreconditionError(
            who + ": state '" + m.states[s] +
            "' activates two deterministic events; use Δ-discretization "
            "(dctmc_transient_delta)");
      det[s] = e;
    }
  }
  return det;
}

EmbeddedChain build_embedded(const Gsmp& m, const std::vector<int>& goal,
                             const std::vector<int>& seeds, double window_eps,
                             const std::string& who) {
  require_valid(m);
  for (int g : goal)
    if (g < 0 || g >= static_cast<int>(m.states.size()))
      throw PreconditionError(who + ": goal state index " +
                              std::to_string(g) + " is out of range");
  std::set<int> goalset(goal.begin(), goal.end());
  for (std::size_t s = 0; s < m.states.size(); ++s) {
    if (goalset.count(static_cast<int>(s))) continue;
    for (int e : m.active[s])
      if (m.events[e].kind == Event::Kind::kGeneral)
        throw PreconditionError(who + ": event '" + m.events[e].id +
                                "' has a general density; approximate the "
                                "model first");
  }
  std::vector<int> sdet = single_det_map(m, goalset, who);

  EmbeddedChain ch;
  std::map<int, int> cfg_of;
  std::deque<int> todo;
  auto intern = [&](int s) {
    auto [it, fresh] = cfg_of.emplace(s, static_cast<int>(ch.configs.size()));
    if (fresh) {
      bool is_goal = goalset.count(s) > 0;
      ch.configs.push_back({s, is_goal ? -1 : sdet[s]});
      ch.kernel.emplace_back();
      ch.goal.push_back(is_goal ? 1 : 0);
      ch.absorbing.push_back(0);
      todo.push_back(it->second);
    }
    return it->second;
  };
  for (int s : seeds) intern(s);

  // Frozen window systems, one per deterministic event: only the states
  // that run this event's clock evolve; everything else holds its mass
  // until the window closes.
  std::map<int, Uniformized> window_sys;
  auto window_for = [&](int d) -> const Uniformized& {
    auto it = window_sys.find(d);
    if (it != window_sys.end()) return it->second;
    std::vector<std::map<int, double>> rates(m.states.size());
    for (std::size_t s = 0; s < m.states.size(); ++s) {
      if (goalset.count(static_cast<int>(s)) || sdet[s] != d) continue;
      for (int e : m.active[s]) {
        if (m.events[e].kind != Event::Kind::kExponential) continue;
        for (const auto& [to, p] : m.successors(static_cast<int>(s), e))
          rates[s][to] += m.events[e].rate * p;
      }
    }
    return window_sys.emplace(d, uniformize(rates)).first->second;
  };

  while (!todo.empty()) {
    int ci = todo.front();
    todo.pop_front();
    const auto cfg = ch.configs[ci];  // copy: intern() grows configs
    if (ch.goal[ci]) {
      ch.absorbing[ci] = 1;
      continue;
    }
    std::map<int, double> row;
    if (cfg.det < 0) {
      double total = 0.0;
      for (int e : m.active[cfg.state]) total += m.events[e].rate;
      if (total == 0.0) {
        ch.absorbing[ci] = 1;
        continue;
      }
      for (int e : m.active[cfg.state]) {
        double w = m.events[e].rate / total;
        for (const auto& [to, p] : m.successors(cfg.state, e))
          row[intern(to)] += w * p;
      }
    } else {
      std::vector<double> beta(m.states.size(), 0.0);
      beta[cfg.state] = 1.0;
      beta = uni_transient(window_for(cfg.det), std::move(beta),
                           m.events[cfg.det].delay, window_eps);
      for (std::size_t s = 0; s < m.states.size(); ++s) {
        if (beta[s] <= 0.0) continue;
        bool fires = !goalset.count(static_cast<int>(s)) &&
                     sdet[s] == cfg.det;
        if (fires) {
          for (const auto& [to, p] :
               m.successors(static_cast<int>(s), cfg.det))
            row[intern(to)] += beta[s] * p;
        } else {
          row[intern(static_cast<int>(s))] += beta[s];
        }
      }
    }
    double sum = 0.0;
    for (const auto& [j, p] : row) sum += p;
    if (std::abs(sum - 1.0) > 1e-10)
      throw ConvergenceError(who + ": embedded kernel row for state '" +
                             m.states[cfg.state] + "' sums to " + fmt(sum) +
                             "; tighten window_eps");
    ch.kernel[ci].assign(row.begin(), row.end());
  }
  return ch;
}

}  // namespace

EmbeddedChain build_embedded_chain(const Gsmp& m, const std::vector<int>& goal,
                                   double window_eps) {
  std::vector<int> seeds;
  for (const auto& [s, p] : m.init)
    if (p > 0.0) seeds.push_back(s);
  return build_embedded(m, goal, seeds, window_eps, "build_embedded_chain");
}

ReachResult dctmc_reach_subordinated(const Gsmp& m,
                                     const std::vector<double>& alpha,
                                     const std::vector<int>& goal,
                                     const SubordinatedOptions& opts) {
  const std::string who = "dctmc_reach_subordinated";
  check_alpha(m, alpha, who);
  std::vector<int> seeds;
  for (std::size_t s = 0; s < alpha.size(); ++s)
    if (alpha[s] > 0.0) seeds.push_back(static_cast<int>(s));
  EmbeddedChain ch = build_embedded(m, goal, seeds, opts.window_eps, who);
  int n = static_cast<int>(ch.configs.size());

  // Configurations with no path into the goal contribute exactly zero;
  // dropping them keeps the linear system nonsingular.
  std::vector<std::vector<int>> rev(n);
  for (int c = 0; c < n; ++c)
    for (const auto& [t, p] : ch.kernel[c])
      if (p > 0.0) rev[t].push_back(c);
  std::vector<char> can(n, 0);
  std::deque<int> bfs;
  for (int c = 0; c < n; ++c)
    if (ch.goal[c]) {
      can[c] = 1;
      bfs.push_back(c);
    }
  while (!bfs.empty()) {
    int c = bfs.front();
    bfs.pop_front();
    for (int f : rev[c])
      if (!can[f]) {
        can[f] = 1;
        bfs.push_back(f);
      }
  }

  std::vector<int> unknown;  // non-absorbing configs that can reach the goal
  std::vector<int> slot(n, -1);
  for (int c = 0; c < n; ++c)
    if (can[c] && !ch.absorbing[c]) {
      slot[c] = static_cast<int>(unknown.size());
      unknown.push_back(c);
    }

  ReachResult res;
  res.configurations = n;
  int nu = static_cast<int>(unknown.size());
  std::vector<double> x(nu, 0.0), b(nu, 0.0);
  for (int k = 0; k < nu; ++k)
    for (const auto& [t, p] : ch.kernel[unknown[k]])
      if (ch.goal[t]) b[k] += p;

  if (nu == 0) {
    res.solver = "direct";
  } else if (nu <= opts.direct_limit) {
    res.solver = "direct";
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(nu, nu);
    Eigen::VectorXd rhs(nu);
    for (int k = 0; k < nu; ++k) {
      rhs(k) = b[k];
      for (const auto& [t, p] : ch.kernel[unknown[k]])
        if (slot[t] >= 0) A(k, slot[t]) -= p;
    }
    Eigen::VectorXd sol = A.partialPivLu().solve(rhs);
    for (int k = 0; k < nu; ++k) x[k] = sol(k);
  } else {
    res.solver = "iterative";
    const double omega = 0.9;
    double residual = 0.0;
    int it = 0;
    for (; it < opts.max_iters; ++it) {
      residual = 0.0;
      std::vector<double> nx(nu, 0.0);
      for (int k = 0; k < nu; ++k) {
        double v = b[k];
        for (const auto& [t, p] : ch.kernel[unknown[k]])
          if (slot[t] >= 0) v += p * x[slot[t]];
        residual = std::max(residual, std::abs(v - x[k]));
        nx[k] = (1.0 - omega) * x[k] + omega * v;
      }
      x.swap(nx);
      if (residual <= opts.solve_tol) break;
    }
    if (it >= opts.max_iters)
      throw ConvergenceError(
          who + ": iteration cap " + std::to_string(opts.max_iters) +
          " reached with residual " + fmt(residual) +
          "; the embedded chain may cycle without progress");
  }

  double prob = 0.0;
  std::map<int, int> cfg_by_state;
  for (int c = 0; c < n; ++c) cfg_by_state[ch.configs[c].state] = c;
  for (std::size_t s = 0; s < alpha.size(); ++s) {
    if (alpha[s] <= 0.0) continue;
    int c = cfg_by_state.at(static_cast<int>(s));
    double v = ch.goal[c] ? 1.0 : (slot[c] >= 0 ? x[slot[c]] : 0.0);
    prob += alpha[s] * v;
  }
  if (prob < 0.0 || prob > 1.0 + 1e-9)
    res.warnings.push_back("probability " + fmt(prob) + " clamped to [0, 1]");
  res.probability = std::min(1.0, std::max(0.0, prob));
  return res;
}

ReachResult dctmc_reach_subordinated(const Gsmp& m,
                                     const std::vector<int>& goal,
                                     const SubordinatedOptions& opts) {
  return dctmc_reach_subordinated(m, init_vector(m), goal, opts);
}

}  // namespace iphkit

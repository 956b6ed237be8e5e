#include "iphkit/chain.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "iphkit/errors.hpp"
#include "iphkit/poisson.hpp"

namespace iphkit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool normalized(const std::vector<std::pair<int, double>>& dist) {
  double total = 0.0;
  for (const auto& [i, p] : dist) {
    (void)i;
    if (!(p >= 0.0) || !std::isfinite(p)) return false;
    total += p;
  }
  return std::abs(total - 1.0) <= 1e-12 * std::max<double>(1, dist.size());
}

}  // namespace

void PhChain::validate() const {
  if (phases < 1) throw ValidationError("chain: needs at least one transient phase");
  if (static_cast<int>(exits.size()) != phases) {
    throw ValidationError("chain: exit table does not cover every phase");
  }
  if (init.empty() || !normalized(init)) {
    throw ValidationError("chain: unnormalized initial distribution");
  }
  for (const auto& [ph, p] : init) {
    (void)p;
    if (ph < 1 || ph > phases) {
      throw ValidationError("chain: initial mass must sit on transient phases");
    }
  }
  for (int ph = 1; ph <= phases; ++ph) {
    const Exit& e = exits[ph - 1];
    if (!(e.rate >= 0.0) || !std::isfinite(e.rate)) {
      throw ValidationError("chain: phase " + std::to_string(ph) + " has an invalid rate");
    }
    if (e.rate > 0.0) {
      if (e.succ.empty() || !normalized(e.succ)) {
        throw ValidationError("chain: phase " + std::to_string(ph) +
                              " has an unnormalized successor distribution");
      }
      for (const auto& [tgt, p] : e.succ) {
        (void)p;
        if (tgt < 0 || tgt > phases) {
          throw ValidationError("chain: phase " + std::to_string(ph) + " exits to an unknown phase");
        }
      }
    } else if (!e.succ.empty()) {
      throw ValidationError("chain: phase " + std::to_string(ph) +
                            " has successors but no exit rate");
    }
  }
}

void DctmcChain::validate() const {
  ctmc.validate();
  std::vector<int> det_of(ctmc.phases + 1, -1);
  std::set<std::string> ids;
  for (std::size_t di = 0; di < det.size(); ++di) {
    const ChainDetEvent& d = det[di];
    if (d.id.empty() || !ids.insert(d.id).second) {
      throw ValidationError("chain: deterministic events need unique non-empty ids");
    }
    if (!(d.delay > 0.0) || !std::isfinite(d.delay)) {
      throw ValidationError("chain: deterministic event '" + d.id + "' has a nonpositive delay");
    }
    if (d.active.empty()) {
      throw ValidationError("chain: deterministic event '" + d.id + "' is active nowhere");
    }
    for (int ph : d.active) {
      if (ph < 1 || ph > ctmc.phases) {
        throw ValidationError("chain: deterministic event '" + d.id + "' active in unknown phase");
      }
      if (det_of[ph] != -1) {
        throw ValidationError("chain: more than one deterministic event active in phase " +
                              std::to_string(ph));
      }
      det_of[ph] = static_cast<int>(di);
      auto it = d.succ.find(ph);
      if (it == d.succ.end() || !normalized(it->second)) {
        throw ValidationError("chain: deterministic event '" + d.id +
                              "' has an unnormalized successor distribution in phase " +
                              std::to_string(ph));
      }
      for (const auto& [tgt, p] : it->second) {
        (void)p;
        if (tgt < 0 || tgt > ctmc.phases) {
          throw ValidationError("chain: deterministic event '" + d.id +
                                "' jumps to an unknown phase");
        }
      }
    }
  }

  // phase 0 must stay reachable from everywhere the initial mass can sit
  std::vector<char> seen(ctmc.phases + 1, 0);
  std::vector<int> stack;
  for (const auto& [ph, p] : ctmc.init) {
    if (p > 0.0 && !seen[ph]) {
      seen[ph] = 1;
      stack.push_back(ph);
    }
  }
  bool zero_reached = false;
  while (!stack.empty() && !zero_reached) {
    int ph = stack.back();
    stack.pop_back();
    auto visit = [&](int tgt) {
      if (tgt == 0) zero_reached = true;
      else if (!seen[tgt]) {
        seen[tgt] = 1;
        stack.push_back(tgt);
      }
    };
    const PhChain::Exit& e = ctmc.exits[ph - 1];
    for (const auto& [tgt, p] : e.succ) {
      if (p > 0.0) visit(tgt);
    }
    if (det_of[ph] >= 0) {
      for (const auto& [tgt, p] : det[det_of[ph]].succ.at(ph)) {
        if (p > 0.0) visit(tgt);
      }
    }
  }
  // a chain whose initial support cannot absorb is a modelling error
  if (!zero_reached) throw ValidationError("chain: absorbing phase unreachable from the initial mass");
}

void AbsorptionCurve::setup_matrix(const PhChain& chain) {
  chain.validate();
  n_ = chain.phases;
  lambda_ = 0.0;
  for (const auto& e : chain.exits) lambda_ = std::max(lambda_, e.rate);
  p_rows_.assign(n_, {});
  absorb_rate_.assign(n_, 0.0);
  for (int ph = 1; ph <= n_; ++ph) {
    const PhChain::Exit& e = chain.exits[ph - 1];
    auto& row = p_rows_[ph - 1];
    double self = lambda_ > 0.0 ? 1.0 - e.rate / lambda_ : 1.0;
    if (e.rate > 0.0) {
      for (const auto& [tgt, p] : e.succ) {
        if (tgt == 0) {
          absorb_rate_[ph - 1] += e.rate * p;
        } else if (tgt == ph) {
          self += e.rate * p / lambda_;
        } else if (p > 0.0) {
          row.emplace_back(tgt - 1, e.rate * p / lambda_);
        }
      }
    }
    if (self > 0.0) row.emplace_back(ph - 1, self);
  }
}

void AbsorptionCurve::extend(const Segment& seg, int kmax) const {
  while (static_cast<int>(seg.dens_coeff.size()) <= kmax) {
    double dens = 0.0, surv = 0.0;
    for (int i = 0; i < n_; ++i) {
      dens += seg.power[i] * absorb_rate_[i];
      surv += seg.power[i];
    }
    seg.dens_coeff.push_back(dens);
    seg.surv_coeff.push_back(surv);
    std::vector<double> next(n_, 0.0);
    for (int i = 0; i < n_; ++i) {
      double v = seg.power[i];
      if (v == 0.0) continue;
      for (const auto& [j, p] : p_rows_[i]) next[j] += v * p;
    }
    seg.power = std::move(next);
  }
}

std::vector<double> AbsorptionCurve::evolve(const std::vector<double>& beta, double dt) const {
  PoissonWindow win = poisson_window(lambda_ * dt, tol_);
  std::vector<double> out(n_, 0.0);
  std::vector<double> power = beta;
  for (int k = 0; k <= win.right; ++k) {
    double w = win.pmf(k);
    if (w > 0.0) {
      for (int i = 0; i < n_; ++i) out[i] += w * power[i];
    }
    if (k == win.right) break;
    std::vector<double> next(n_, 0.0);
    for (int i = 0; i < n_; ++i) {
      double v = power[i];
      if (v == 0.0) continue;
      for (const auto& [j, p] : p_rows_[i]) next[j] += v * p;
    }
    power = std::move(next);
  }
  return out;
}

AbsorptionCurve::AbsorptionCurve(const PhChain& chain, double tol) : tol_(tol) {
  setup_matrix(chain);
  Segment seg;
  seg.beta.assign(n_, 0.0);
  for (const auto& [ph, p] : chain.init) seg.beta[ph - 1] += p;
  seg.power = seg.beta;
  segments_.push_back(std::move(seg));
}

AbsorptionCurve::AbsorptionCurve(const DctmcChain& chain, double tol) : tol_(tol) {
  build_segments(chain);
}

void AbsorptionCurve::build_segments(const DctmcChain& chain) {
  chain.validate();
  setup_matrix(chain.ctmc);

  std::vector<int> det_of(n_ + 1, -1);
  for (std::size_t di = 0; di < chain.det.size(); ++di) {
    for (int ph : chain.det[di].active) det_of[ph] = static_cast<int>(di);
  }

  std::vector<double> beta(n_, 0.0);
  for (const auto& [ph, p] : chain.ctmc.init) beta[ph - 1] += p;
  double absorbed = 0.0;
  double start = 0.0;
  std::vector<char> used(chain.det.size(), 0);

  for (;;) {
    // exponential reachability closure of the current support
    std::vector<char> inclo(n_ + 1, 0);
    std::vector<int> stack;
    for (int i = 0; i < n_; ++i) {
      if (beta[i] > 0.0) {
        inclo[i + 1] = 1;
        stack.push_back(i + 1);
      }
    }
    while (!stack.empty()) {
      int ph = stack.back();
      stack.pop_back();
      for (const auto& [tgt, p] : chain.ctmc.exits[ph - 1].succ) {
        if (tgt >= 1 && p > 0.0 && !inclo[tgt]) {
          inclo[tgt] = 1;
          stack.push_back(tgt);
        }
      }
    }

    // the closure must agree on a single upcoming deterministic event
    int chosen = -2;  // -2 unset, -1 none
    bool mixed = false;
    for (int ph = 1; ph <= n_; ++ph) {
      if (!inclo[ph]) continue;
      int d = det_of[ph];
      if (chosen == -2) chosen = d;
      else if (chosen != d) mixed = true;
    }
    if (mixed) {
      throw PreconditionError(
          "unsupported topology: deterministic events do not fire on a fixed grid");
    }

    Segment seg;
    seg.start = start;
    seg.beta = beta;
    seg.power = beta;
    seg.absorbed_before = absorbed;

    if (chosen < 0) {  // no deterministic event ahead: final open segment
      segments_.push_back(std::move(seg));
      return;
    }
    const ChainDetEvent& d = chain.det[chosen];
    if (used[chosen]) {
      throw PreconditionError("unsupported topology: deterministic event '" + d.id +
                              "' would restart mid-run");
    }
    used[chosen] = 1;
    seg.length = d.delay;
    segments_.push_back(std::move(seg));

    // transient mass at the grid point, then the deterministic jump
    std::vector<double> v = evolve(beta, d.delay);
    std::vector<double> next(n_, 0.0);
    double before = 0.0, after = 0.0, jumped_out = 0.0;
    for (double b : beta) before += b;
    for (int i = 0; i < n_; ++i) {
      double mass = v[i];
      if (mass == 0.0) continue;
      after += mass;
      if (det_of[i + 1] == chosen) {
        for (const auto& [tgt, p] : d.succ.at(i + 1)) {
          if (tgt == 0) jumped_out += mass * p;
          else next[tgt - 1] += mass * p;
        }
      } else {
        next[i] += mass;
      }
    }
    absorbed += (before - after) + jumped_out;
    start += d.delay;
    if (jumped_out > 0.0) atoms_.emplace_back(start, jumped_out);
    beta = std::move(next);
  }
}

const AbsorptionCurve::Segment& AbsorptionCurve::segment_at(double t) const {
  std::size_t lo = 0;
  for (std::size_t i = segments_.size(); i-- > 0;) {
    if (segments_[i].start <= t) {
      lo = i;
      break;
    }
  }
  return segments_[lo];
}

double AbsorptionCurve::density(double t) const {
  if (t < 0.0) return 0.0;
  const Segment& seg = segment_at(t);
  double dt = t - seg.start;
  PoissonWindow win = poisson_window(lambda_ * dt, tol_);
  extend(seg, win.right);
  double out = 0.0;
  for (int k = win.left; k <= win.right; ++k) {
    out += win.pmf(k) * seg.dens_coeff[k];
  }
  return out;
}

double AbsorptionCurve::cdf(double t) const {
  if (t < 0.0) return 0.0;
  const Segment& seg = segment_at(t);
  double dt = t - seg.start;
  PoissonWindow win = poisson_window(lambda_ * dt, tol_);
  extend(seg, win.right);
  double survival = 0.0;
  for (int k = win.left; k <= win.right; ++k) {
    survival += win.pmf(k) * seg.surv_coeff[k];
  }
  double entering = 0.0;
  for (double b : seg.beta) entering += b;
  return seg.absorbed_before + (entering - survival);
}

double AbsorptionCurve::upper_quantile(double tail) const {
  double target = 1.0 - tail;
  double hi = std::max(segments_.back().start, 1.0);
  int guard = 0;
  while (cdf(hi) < target) {
    hi *= 2.0;
    if (++guard > 300) {
      throw ConvergenceError("absorption cdf does not reach " + std::to_string(target));
    }
  }
  double lo = 0.0;
  for (int i = 0; i < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++i) {
    double mid = 0.5 * (lo + hi);
    (cdf(mid) < target ? lo : hi) = mid;
  }
  return hi;
}

std::vector<double> AbsorptionCurve::grid() const {
  std::vector<double> out;
  for (std::size_t i = 1; i < segments_.size(); ++i) out.push_back(segments_[i].start);
  return out;
}

double reach_time_density(const PhChain& chain, double t, double tol) {
  return AbsorptionCurve(chain, tol).density(t);
}

double dctmc_reach_time_density(const DctmcChain& chain, double t, double tol) {
  return AbsorptionCurve(chain, tol).density(t);
}

Gsmp chain_to_gsmp(const DctmcChain& chain) {
  chain.validate();
  const PhChain& c = chain.ctmc;
  Gsmp m;
  m.states.reserve(c.phases + 1);
  for (int ph = 0; ph <= c.phases; ++ph) m.states.push_back(std::to_string(ph));
  m.active.assign(c.phases + 1, {});

  for (const auto& d : chain.det) {
    Event e;
    e.id = d.id;
    e.kind = Event::Kind::kDeterministic;
    e.delay = d.delay;
    int idx = static_cast<int>(m.events.size());
    m.events.push_back(std::move(e));
    for (int ph : d.active) {
      m.active[ph].push_back(idx);
      m.succ[{ph, idx}] = d.succ.at(ph);
    }
  }
  for (int ph = 1; ph <= c.phases; ++ph) {
    const PhChain::Exit& ex = c.exits[ph - 1];
    if (ex.rate <= 0.0) continue;
    Event e;
    e.id = "exit@" + std::to_string(ph);
    e.kind = Event::Kind::kExponential;
    e.rate = ex.rate;
    int idx = static_cast<int>(m.events.size());
    m.events.push_back(std::move(e));
    m.active[ph].push_back(idx);
    m.succ[{ph, idx}] = ex.succ;
  }
  for (auto& a : m.active) std::sort(a.begin(), a.end());
  m.init = c.init;
  m.tie_order.resize(m.events.size());
  for (std::size_t i = 0; i < m.events.size(); ++i) m.tie_order[i] = static_cast<int>(i);
  return m;
}

Gsmp chain_to_gsmp(const PhChain& chain) {
  return chain_to_gsmp(DctmcChain{chain, {}});
}

DctmcChain chain_from_gsmp(const Gsmp& m) {
  require_valid(m);
  for (const auto& e : m.events) {
    if (e.kind == Event::Kind::kGeneral) {
      throw ValidationError("chain: general events are not part of a phase chain");
    }
  }
  int absorbing = -1;
  for (std::size_t s = 0; s < m.states.size(); ++s) {
    if (m.active[s].empty()) {
      if (absorbing >= 0) throw ValidationError("chain: expected exactly one absorbing state");
      absorbing = static_cast<int>(s);
    }
  }
  if (absorbing < 0) throw ValidationError("chain: expected exactly one absorbing state");

  // transient states become phases 1..n in model order
  std::vector<int> phase_of(m.states.size(), 0);
  int n = 0;
  for (std::size_t s = 0; s < m.states.size(); ++s) {
    if (static_cast<int>(s) != absorbing) phase_of[s] = ++n;
  }

  DctmcChain chain;
  chain.ctmc.phases = n;
  chain.ctmc.exits.assign(n, {});
  std::map<std::string, std::size_t> det_index;

  for (std::size_t s = 0; s < m.states.size(); ++s) {
    if (static_cast<int>(s) == absorbing) continue;
    int ph = phase_of[s];
    double total_rate = 0.0;
    std::map<int, double> merged;
    int dets_here = 0;
    for (int ei : m.active[s]) {
      const Event& e = m.events[ei];
      if (e.kind == Event::Kind::kExponential) {
        total_rate += e.rate;
        for (const auto& [tgt, p] : m.successors(static_cast<int>(s), ei)) {
          merged[phase_of[tgt]] += e.rate * p;
        }
      } else {
        if (++dets_here > 1) {
          throw ValidationError("chain: more than one deterministic event active in state '" +
                                m.states[s] + "'");
        }
        auto [it, created] = det_index.try_emplace(e.id, chain.det.size());
        if (created) {
          chain.det.push_back(ChainDetEvent{e.id, e.delay, {}, {}});
        }
        ChainDetEvent& d = chain.det[it->second];
        d.active.push_back(ph);
        std::map<int, double> jm;
        for (const auto& [tgt, p] : m.successors(static_cast<int>(s), ei)) {
          jm[phase_of[tgt]] += p;
        }
        d.succ[ph].assign(jm.begin(), jm.end());
      }
    }
    PhChain::Exit& ex = chain.ctmc.exits[ph - 1];
    ex.rate = total_rate;
    if (total_rate > 0.0) {
      for (const auto& [tgt, w] : merged) ex.succ.emplace_back(tgt, w / total_rate);
    }
  }
  for (auto& d : chain.det) std::sort(d.active.begin(), d.active.end());

  std::map<int, double> init;
  for (const auto& [s, p] : m.init) {
    if (s == absorbing) throw ValidationError("chain: initial mass on the absorbing state");
    init[phase_of[s]] += p;
  }
  chain.ctmc.init.assign(init.begin(), init.end());
  chain.validate();
  return chain;
}

}  // namespace iphkit

#include "iphkit/approximate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "iphkit/errors.hpp"

namespace iphkit {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// One covered event's chain, unpacked for constant-time phase lookups.
struct Component {
  std::string id;
  int phases = 0;
  std::vector<std::pair<int, double>> init;
  std::vector<double> rate;                                    // by phase
  std::vector<std::vector<std::pair<int, double>>> exit_succ;  // by phase
  std::vector<int> det_at;  // det index active in a phase, -1 for none
  std::vector<ChainDetEvent> det;
  bool has_det = false;
};

Component compile_component(const std::string& id, const DctmcChain& chain) {
  chain.validate();
  Component c;
  c.id = id;
  c.phases = chain.ctmc.phases;
  c.init = chain.ctmc.init;
  c.rate.assign(c.phases + 1, 0.0);
  c.exit_succ.assign(c.phases + 1, {});
  c.det_at.assign(c.phases + 1, -1);
  for (int i = 1; i <= c.phases; ++i) {
    c.rate[i] = chain.ctmc.exits[i - 1].rate;
    c.exit_succ[i] = chain.ctmc.exits[i - 1].succ;
  }
  c.det = chain.det;
  c.has_det = !chain.det.empty();
  for (std::size_t k = 0; k < c.det.size(); ++k)
    for (int ph : c.det[k].active) c.det_at[ph] = static_cast<int>(k);
  return c;
}

// Product state: base state plus one (event, phase, parity) coordinate per
// covered event active there, ascending by event index.  The parity bit
// names which copy of the component's deterministic events is running, so
// a component restart can switch copies and thereby drop the old clock.
struct PState {
  int base = -1;
  std::vector<std::array<int, 3>> coords;

  bool operator<(const PState& o) const {
    return std::tie(base, coords) < std::tie(o.base, o.coords);
  }
};

const std::array<int, 3>* find_coord(const PState& x, int ev) {
  for (const auto& c : x.coords)
    if (c[0] == ev) return &c;
  return nullptr;
}

// Product event, before final index assignment.  kind 0 carries a base
// event unchanged, kind 1 is the exponential exit of one component phase,
// kind 2 is one parity copy of a component deterministic event.
struct Handle {
  int kind = 0;
  int ev = -1;  // base event index in every kind
  int a = 0;    // phase (kind 1) or det index (kind 2)
  int par = 0;  // kind 2 only

  bool operator<(const Handle& o) const {
    return std::tie(kind, ev, a, par) < std::tie(o.kind, o.ev, o.a, o.par);
  }
};

struct Builder {
  const Gsmp& base;
  const std::vector<std::optional<Component>>& comp;
  std::size_t cap;

  std::vector<std::vector<int>> covered_active;  // per base state, ascending
  std::map<PState, int> index;
  std::vector<PState> states;
  std::deque<int> queue;
  // per product state: (event handle, merged successor branching)
  std::vector<std::vector<std::pair<Handle, Branching>>> trans;

  Builder(const Gsmp& m, const std::vector<std::optional<Component>>& c,
          std::size_t state_cap)
      : base(m), comp(c), cap(state_cap) {
    covered_active.resize(m.states.size());
    for (std::size_t s = 0; s < m.states.size(); ++s)
      for (int e : m.active[s])
        if (comp[e]) covered_active[s].push_back(e);
  }

  // Worst-case product size, for the cap diagnostic.
  double size_bound() const {
    double total = 0.0;
    for (std::size_t s = 0; s < base.states.size(); ++s) {
      double w = 1.0;
      for (int e : covered_active[s])
        w *= comp[e]->phases * (comp[e]->has_det ? 2.0 : 1.0);
      total += w;
    }
    return total;
  }

  int intern(const PState& x) {
    auto [it, fresh] = index.emplace(x, static_cast<int>(states.size()));
    if (fresh) {
      states.push_back(x);
      trans.emplace_back();
      queue.push_back(it->second);
      if (states.size() > cap)
        throw PreconditionError(
            "approximate: product state space exceeds the cap of " +
            std::to_string(cap) + " states (upper bound ~" +
            fmt_double(size_bound()) + "); raise state_cap to proceed");
    }
    return it->second;
  }

  // Branch over the product states after a transition into base state `to`.
  // `moved` (with `moved_phase`) marks a component-internal hop; `restart`
  // marks the covered event that fired and must redraw its initial
  // distribution, flipping its parity when `flip` is set (i.e. when one of
  // its deterministic copies was running at the moment of firing).
  std::vector<std::pair<PState, double>> assemble(int to, const PState& pre,
                                                  int moved, int moved_phase,
                                                  int restart,
                                                  bool flip) const {
    std::vector<std::pair<PState, double>> out;
    out.push_back({PState{to, {}}, 1.0});
    for (int e : covered_active[to]) {
      const Component& c = *comp[e];
      std::vector<std::pair<std::array<int, 3>, double>> opt;
      if (e == moved) {
        const auto* pc = find_coord(pre, e);
        opt.push_back({{e, moved_phase, (*pc)[2]}, 1.0});
      } else if (e == restart) {
        const auto* pc = find_coord(pre, e);
        int par = flip ? 1 - (*pc)[2] : 0;
        for (const auto& [ph, p] : c.init) opt.push_back({{e, ph, par}, p});
      } else if (const auto* pc = find_coord(pre, e)) {
        opt.push_back({*pc, 1.0});  // active before and after: clock survives
      } else {
        for (const auto& [ph, p] : c.init) opt.push_back({{e, ph, 0}, p});
      }
      std::vector<std::pair<PState, double>> next;
      next.reserve(out.size() * opt.size());
      for (const auto& [st, q] : out)
        for (const auto& [co, p] : opt) {
          next.push_back({st, q * p});
          next.back().first.coords.push_back(co);
        }
      out = std::move(next);
    }
    return out;
  }

  void fold_into(std::map<int, double>& acc, double weight, int to,
                 const PState& pre, int moved, int moved_phase, int restart,
                 bool flip) {
    for (const auto& [st, w] : assemble(to, pre, moved, moved_phase, restart, flip))
      acc[intern(st)] += weight * w;
  }

  static Branching to_branching(const std::map<int, double>& acc) {
    return Branching(acc.begin(), acc.end());
  }

  // The covered event `e` fired from product state `pre` while its phase
  // `ph` was current: branch over the base successor kernel, redrawing the
  // component wherever the event stays active.
  Branching fire_covered(const PState& pre, int e, int ph) {
    bool flip = comp[e]->det_at[ph] >= 0;
    std::map<int, double> acc;
    for (const auto& [to, q] : base.successors(pre.base, e))
      fold_into(acc, q, to, pre, -1, -1, e, flip);
    return to_branching(acc);
  }

  void expand(int xi) {
    const PState x = states[xi];  // copy: intern() may grow `states`
    std::vector<std::pair<Handle, Branching>> out;

    // Base events survive untouched; covered ones are replaced below.
    for (int b : base.active[x.base]) {
      if (comp[b]) continue;
      std::map<int, double> acc;
      for (const auto& [to, q] : base.successors(x.base, b))
        fold_into(acc, q, to, x, -1, -1, -1, false);
      out.push_back({Handle{0, b, 0, 0}, to_branching(acc)});
    }

    for (const auto& [e, ph, par] : x.coords) {
      const Component& c = *comp[e];
      if (c.rate[ph] > 0.0) {
        std::map<int, double> acc;
        for (const auto& [j, p] : c.exit_succ[ph]) {
          if (j >= 1) {
            fold_into(acc, p, x.base, x, e, j, -1, false);
          } else {
            for (const auto& [st, w] : fire_covered(x, e, ph))
              acc[st] += p * w;
          }
        }
        out.push_back({Handle{1, e, ph, 0}, to_branching(acc)});
      }
      if (c.det_at[ph] >= 0) {
        int d = c.det_at[ph];
        std::map<int, double> acc;
        for (const auto& [j, p] : c.det[d].succ.at(ph)) {
          if (j >= 1) {
            fold_into(acc, p, x.base, x, e, j, -1, false);
          } else {
            // The deterministic copy itself fired the event.
            std::map<int, double> sub;
            for (const auto& [to, q] : base.successors(x.base, e))
              fold_into(sub, q, to, x, -1, -1, e, true);
            for (const auto& [st, w] : sub) acc[st] += p * w;
          }
        }
        out.push_back({Handle{2, e, d, par}, to_branching(acc)});
      }
    }
    trans[xi] = std::move(out);
  }
};

void check_plan_fields(const std::string& id, const EventPlan& ep) {
  bool slicing = ep.method == ApproxMethod::kSlice ||
                 ep.method == ApproxMethod::kShiftSlice;
  if (ep.phases < 1)
    throw ValidationError("approximate: component for '" + id +
                          "' needs at least one phase");
  if (slicing && ep.slices < 2)
    throw ValidationError("approximate: slicing component for '" + id +
                          "' needs at least 2 slices");
  if (!slicing && ep.slices != 0)
    throw ValidationError("approximate: slices are set for '" + id +
                          "' but its method does not slice");
}

}  // namespace

std::string approx_method_name(ApproxMethod m) {
  switch (m) {
    case ApproxMethod::kPlain:      return "plain";
    case ApproxMethod::kShift:      return "shift";
    case ApproxMethod::kSlice:      return "slice";
    case ApproxMethod::kShiftSlice: return "shift+slice";
    case ApproxMethod::kConstant:   return "constant";
  }
  return "?";
}

std::optional<double> constant_delay(const DensityModel& density,
                                     double tol_scale) {
  double lo = density.support_low();
  double hi = density.support_high();
  if (!std::isfinite(hi)) return std::nullopt;
  double mid = 0.5 * (lo + hi);
  if (mid <= 0.0) return std::nullopt;
  if (hi - lo <= tol_scale * std::max(1.0, mid)) return mid;
  return std::nullopt;
}

Gsmp constant_event_rewrite(const Gsmp& m, double tol_scale) {
  Gsmp out = m;
  for (Event& e : out.events) {
    if (e.kind != Event::Kind::kGeneral) continue;
    if (auto mid = constant_delay(*e.density, tol_scale)) {
      e.kind = Event::Kind::kDeterministic;
      e.delay = *mid;
      e.density.reset();
    }
  }
  return out;
}

ApproxResult approximate_model(const Gsmp& m, const ApproxPlan& plan) {
  require_valid(m);
  ApproxResult res;
  Gsmp work = m;  // constant rewrites happen in place before the product

  std::vector<std::optional<Component>> comp(m.events.size());
  for (const auto& [id, ep] : plan.events) {
    int ev = work.event_index(id);
    if (ev < 0)
      throw ValidationError("approximate: plan covers unknown event '" + id +
                            "'");
    Event& e = work.events[ev];
    if (e.kind == Event::Kind::kExponential)
      throw ValidationError("approximate: event '" + id +
                            "' is already exponential; drop it from the plan");

    if (e.kind == Event::Kind::kDeterministic) {
      if (ep.method != ApproxMethod::kPlain)
        throw ValidationError(
            "approximate: deterministic event '" + id +
            "' supports only the plain method (moment-matched Erlang)");
      check_plan_fields(id, ep);
      IphResult r;
      r.chain.ctmc = erlang_chain(ep.phases, ep.phases, ep.phases / e.delay);
      r.err = kNan;
      r.phases_used = ep.phases;
      r.notes.push_back("moment-matched Erlang for the constant delay " +
                        fmt_double(e.delay));
      comp[ev] = compile_component(id, r.chain);
      res.components.push_back(
          {id, approx_method_name(ep.method), ep.phases, kNan, std::move(r)});
      continue;
    }

    // General event.
    if (ep.method == ApproxMethod::kConstant) {
      auto mid = constant_delay(*e.density);
      if (!mid)
        throw ValidationError(
            "approximate: event '" + id +
            "' is not effectively constant (support width " +
            fmt_double(e.density->support_high() - e.density->support_low()) +
            "); pick a fitting method instead");
      e.kind = Event::Kind::kDeterministic;
      e.delay = *mid;
      e.density.reset();
      res.components.push_back(
          {id, approx_method_name(ep.method), 0, kNan, std::nullopt});
      continue;
    }

    check_plan_fields(id, ep);
    Fitter fitter = make_fitter(ep.fitter, plan.options);
    IphResult r;
    switch (ep.method) {
      case ApproxMethod::kPlain: {
        FitResult fr = fitter(*e.density, ep.phases);
        r.chain.ctmc = fr.chain;
        r.err = fr.err;
        r.phases_used = ep.phases;
        r.components.push_back(std::move(fr));
        break;
      }
      case ApproxMethod::kShift:
        r = iph_shift(fitter, ep.phases, *e.density);
        break;
      case ApproxMethod::kSlice:
        r = iph_slice(fitter, ep.phases, ep.slices, *e.density);
        break;
      case ApproxMethod::kShiftSlice:
        r = iph_shift_slice(fitter, ep.phases, ep.slices, *e.density);
        break;
      default:
        break;  // handled above
    }
    comp[ev] = compile_component(id, r.chain);
    res.components.push_back(
        {id, approx_method_name(ep.method), ep.phases, r.err, std::move(r)});
  }

  for (std::size_t i = 0; i < work.events.size(); ++i)
    if (work.events[i].kind == Event::Kind::kGeneral && !comp[i])
      throw ValidationError("approximate: plan does not cover general event '" +
                            work.events[i].id + "'");

  Builder bld(work, comp, plan.state_cap);

  // Fold every component's initial distribution into the start distribution.
  std::map<int, double> init_acc;
  PState none;
  for (const auto& [s0, q] : work.init)
    bld.fold_into(init_acc, q, s0, none, -1, -1, -1, false);

  if (!plan.prune) {
    // Seed every combination of base state, phases, and parities so the
    // exploration below keeps unreachable product states too.
    for (std::size_t s = 0; s < work.states.size(); ++s) {
      std::vector<PState> combos{PState{static_cast<int>(s), {}}};
      for (int e : bld.covered_active[s]) {
        const Component& c = *comp[e];
        std::vector<PState> next;
        for (const PState& st : combos)
          for (int ph = 1; ph <= c.phases; ++ph)
            for (int par = 0; par <= (c.has_det ? 1 : 0); ++par) {
              next.push_back(st);
              next.back().coords.push_back({e, ph, par});
            }
        combos = std::move(next);
      }
      for (const PState& st : combos) bld.intern(st);
    }
  }

  while (!bld.queue.empty()) {
    int xi = bld.queue.front();
    bld.queue.pop_front();
    bld.expand(xi);
  }

  // Assign final event indices: carried base events first (model order),
  // then per covered event its phase exits and deterministic copies.
  std::set<Handle> used;
  for (const auto& row : bld.trans)
    for (const auto& [h, b] : row) used.insert(h);
  std::map<Handle, int> event_of;
  Gsmp& out = res.model;
  std::set<std::string> ids;
  for (const Handle& h : used) {
    const Event& src = work.events[h.ev];
    Event e;
    if (h.kind == 0) {
      e = src;
    } else if (h.kind == 1) {
      e.id = src.id + "@" + std::to_string(h.a);
      e.kind = Event::Kind::kExponential;
      e.rate = comp[h.ev]->rate[h.a];
    } else {
      const ChainDetEvent& d = comp[h.ev]->det[h.a];
      e.id = src.id + "#" + d.id + (h.par ? "~" : "");
      e.kind = Event::Kind::kDeterministic;
      e.delay = d.delay;
    }
    if (!ids.insert(e.id).second)
      throw ValidationError("approximate: product event id '" + e.id +
                            "' collides with another event; rename the base "
                            "events");
    event_of[h] = static_cast<int>(out.events.size());
    out.events.push_back(std::move(e));
  }

  // Tie order: base events keep their relative ranks, component events are
  // appended after them.
  std::vector<int> base_rank = work.tie_rank();
  std::vector<Handle> order(used.begin(), used.end());
  std::stable_sort(order.begin(), order.end(),
                   [&](const Handle& a, const Handle& b) {
                     int ka = a.kind == 0 ? 0 : 1, kb = b.kind == 0 ? 0 : 1;
                     return std::tie(ka, base_rank[a.ev]) <
                            std::tie(kb, base_rank[b.ev]);
                   });
  for (const Handle& h : order) out.tie_order.push_back(event_of[h]);

  // States, activation lists, successor tables, start distribution.
  std::set<std::string> names;
  for (std::size_t i = 0; i < bld.states.size(); ++i) {
    const PState& x = bld.states[i];
    std::string name = work.states[x.base];
    std::string origin = "base '" + work.states[x.base] + "'";
    for (const auto& [e, ph, par] : x.coords) {
      std::string tag =
          work.events[e].id + "@" + std::to_string(ph) + (par ? "~" : "");
      name += "|" + tag;
      origin += ", " + work.events[e].id + " in phase " + std::to_string(ph) +
                (par ? " (parity 1)" : "");
    }
    if (!names.insert(name).second)
      throw ValidationError("approximate: product state name '" + name +
                            "' collides; rename the base states");
    out.states.push_back(name);
    res.provenance[name] = origin;
  }
  out.active.resize(out.states.size());
  int multi_det = 0;
  for (std::size_t i = 0; i < bld.states.size(); ++i) {
    int dets_here = 0;
    for (const auto& [h, branch] : bld.trans[i]) {
      int e = event_of[h];
      out.active[i].push_back(e);
      out.succ[{static_cast<int>(i), e}] = branch;
      if (out.events[e].kind == Event::Kind::kDeterministic) ++dets_here;
    }
    std::sort(out.active[i].begin(), out.active[i].end());
    if (dets_here >= 2) ++multi_det;
  }
  out.init = Builder::to_branching(init_acc);

  if (multi_det > 0)
    res.notes.push_back(
        std::to_string(multi_det) +
        " product state(s) run two or more deterministic events at once; "
        "subordinated-chain analysis will refuse this model");

  // Flag exact delay collisions: simultaneous expiry is possible and is
  // resolved by the tie order (component events last).
  std::map<double, std::vector<std::string>> by_delay;
  for (const Event& e : out.events)
    if (e.kind == Event::Kind::kDeterministic)
      by_delay[e.delay].push_back(e.id);
  for (const auto& [delay, list] : by_delay)
    if (list.size() > 1) {
      std::string joined = list[0];
      for (std::size_t k = 1; k < list.size(); ++k) joined += ", " + list[k];
      res.notes.push_back("deterministic delays coincide exactly at " +
                          fmt_double(delay) + " (" + joined +
                          "); ties resolve by tie order");
    }

  require_valid(out);
  return res;
}

}  // namespace iphkit

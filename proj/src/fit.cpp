#include "iphkit/fit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "iphkit/errors.hpp"
#include "iphkit/quadrature.hpp"
#include "iphkit/rng.hpp"

namespace iphkit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double now_seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Everything the distance integral needs from a density, decoupled from where
// the density comes from (closed-form model, rescaled model, or chain curve).
// Views hold references; they never outlive the call that builds them.
struct DensityFn {
  std::function<double(double)> pdf;
  std::function<double(double)> cdf;
  double support_high = kInf;
  std::vector<double> breakpoints;
  std::function<double(double)> quantile;          // upper quantile by tail mass
  std::vector<std::pair<double, double>> atoms;    // point masses (time, mass)
};

DensityFn wrap(const DensityModel& f) {
  DensityFn d;
  d.pdf = [&f](double x) { return f.pdf(x); };
  d.cdf = [&f](double x) { return f.cdf(x); };
  d.support_high = f.support_high();
  d.breakpoints = f.breakpoints();
  d.quantile = [&f](double tail) { return f.upper_quantile(tail); };
  return d;
}

// Density of X / scale for X ~ f.  With scale = mean(f) this is the unit-mean
// copy of the target, which rate searches use so that rescaling the target
// rescales the fitted rate and changes nothing else.
DensityFn wrap_scaled(const DensityModel& f, double scale) {
  DensityFn d;
  d.pdf = [&f, scale](double x) { return scale * f.pdf(scale * x); };
  d.cdf = [&f, scale](double x) { return f.cdf(scale * x); };
  d.support_high = f.support_high() / scale;
  for (double b : f.breakpoints()) d.breakpoints.push_back(b / scale);
  d.quantile = [&f, scale](double tail) { return f.upper_quantile(tail) / scale; };
  return d;
}

DensityFn wrap(const AbsorptionCurve& c) {
  DensityFn d;
  d.pdf = [&c](double x) { return c.density(x); };
  d.cdf = [&c](double x) { return c.cdf(x); };
  d.breakpoints = c.grid();
  d.quantile = [&c](double tail) { return c.upper_quantile(tail); };
  d.atoms = c.atoms();
  return d;
}

struct ErrOutcome {
  double value = 2.0;
  bool converged = true;
  double achieved_tol = 0.0;
};

// L1 distance between two densities plus any candidate point masses, with an
// analytic correction for whatever lies beyond the integration horizon.
ErrOutcome err_core(const DensityFn& f, const DensityFn& g, double tail_tol) {
  double horizon;
  if (std::isfinite(f.support_high) && std::isfinite(g.support_high)) {
    horizon = std::max(f.support_high, g.support_high);
  } else {
    double qf = std::isfinite(f.support_high) ? f.support_high : f.quantile(tail_tol);
    double qg = std::isfinite(g.support_high) ? g.support_high : g.quantile(tail_tol);
    horizon = std::max(qf, qg);
  }
  if (!(horizon > 0.0)) horizon = 1.0;  // degenerate target: all mass at 0

  std::vector<double> cuts = f.breakpoints;
  cuts.insert(cuts.end(), g.breakpoints.begin(), g.breakpoints.end());
  for (const auto& [t, m] : f.atoms) cuts.push_back(t);
  for (const auto& [t, m] : g.atoms) cuts.push_back(t);

  auto integrand = [&](double x) { return std::abs(f.pdf(x) - g.pdf(x)); };
  QuadratureResult q = integrate_adaptive(integrand, 0.0, horizon, cuts);

  double value = q.value;
  for (const auto& [t, m] : f.atoms) {
    if (t <= horizon) value += m;
  }
  for (const auto& [t, m] : g.atoms) {
    if (t <= horizon) value += m;
  }
  // Tail beyond the horizon: both tails are below tail_tol by construction,
  // and the difference of the survivals is exact whenever one side is empty.
  value += std::abs(f.cdf(horizon) - g.cdf(horizon));

  ErrOutcome out;
  out.value = std::clamp(value, 0.0, 2.0);
  out.converged = q.converged;
  out.achieved_tol = q.achieved_tol;
  return out;
}

double checked(const ErrOutcome& o) {
  if (!o.converged) {
    std::ostringstream msg;
    msg << "error integral did not converge; achieved per-interval tolerance " << o.achieved_tol;
    throw ConvergenceError(msg.str());
  }
  return o.value;
}

struct RateSearch {
  double rate = 1.0;  // argmin over all probes
  double err = kInf;
  bool converged = true;     // quadrature converged on every probe
  double achieved_tol = 0.0;
};

// Golden-section minimization over log rate.  The seed is probed first so the
// result never loses to the seed; the probe log is deterministic.
RateSearch golden_min(const std::function<ErrOutcome(double)>& at_log_rate, double lo, double hi,
                      double seed_log, int budget) {
  RateSearch best;
  int evals = 0;
  auto probe = [&](double y) {
    ErrOutcome o = at_log_rate(y);
    ++evals;
    if (!o.converged) {
      best.converged = false;
      best.achieved_tol = std::max(best.achieved_tol, o.achieved_tol);
    }
    if (o.value < best.err) {
      best.err = o.value;
      best.rate = std::exp(y);
    }
    return o.value;
  };

  probe(seed_log);
  const double invphi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double y1 = b - invphi * (b - a);
  double y2 = a + invphi * (b - a);
  double f1 = probe(y1);
  double f2 = probe(y2);
  while (evals < budget && b - a > 1e-10) {
    if (f1 <= f2) {
      b = y2;
      y2 = y1;
      f2 = f1;
      y1 = b - invphi * (b - a);
      f1 = probe(y1);
    } else {
      a = y1;
      y1 = y2;
      f1 = f2;
      y2 = a + invphi * (b - a);
      f2 = probe(y2);
    }
  }
  return best;
}

// ---- hyper-Erlang EM ------------------------------------------------------

struct EmModel {
  std::vector<int> ks;
  std::vector<double> w;
  std::vector<double> lam;
  double loglik = -kInf;
  bool hit_cap = false;
};

// Non-increasing partitions of n into at most b positive parts, ordered by
// how evenly each partition splits its own part count (most balanced first),
// so the cap trims the most lopsided shapes.  `truncated` reports whether the
// cap cut anything off.
std::vector<std::vector<int>> balanced_partitions(int n, int b, int cap, bool& truncated) {
  std::vector<std::vector<int>> all;
  std::vector<int> cur;
  const std::size_t gen_cap = 100000;
  // recursive enumeration with parts bounded above by the previous part
  std::function<void(int, int, int)> gen = [&](int remaining, int parts_left, int max_part) {
    if (all.size() >= gen_cap) return;
    if (parts_left == 1) {
      if (remaining >= 1 && remaining <= max_part) {
        cur.push_back(remaining);
        all.push_back(cur);
        cur.pop_back();
      }
      return;
    }
    for (int k = std::min(max_part, remaining - (parts_left - 1)); k >= 1; --k) {
      if (static_cast<long long>(k) * (parts_left - 1) < remaining - k) break;
      cur.push_back(k);
      gen(remaining - k, parts_left - 1, k);
      cur.pop_back();
      if (all.size() >= gen_cap) return;
    }
  };
  for (int parts = 1; parts <= b && parts <= n; ++parts) gen(n, parts, n);

  auto score = [n](const std::vector<int>& p) {
    double ideal = static_cast<double>(n) / static_cast<double>(p.size());
    double s = 0.0;
    for (int k : p) s += (k - ideal) * (k - ideal);
    return s;
  };
  std::stable_sort(all.begin(), all.end(), [&](const auto& x, const auto& y) {
    double sx = score(x), sy = score(y);
    if (sx != sy) return sx < sy;
    if (x.size() != y.size()) return x.size() < y.size();
    return x < y;
  });
  truncated = all.size() > static_cast<std::size_t>(cap) || all.size() >= gen_cap;
  if (all.size() > static_cast<std::size_t>(cap)) all.resize(cap);
  return all;
}

double log_tail_guard(double x) { return x > 0.0 ? std::log(x) : std::log(1e-300); }

// Expectation-maximization for a mixture of Erlang branches with fixed phase
// counts, over the first `n_use` samples.  Weight/rate updates are the usual
// responsibility-weighted moments; branches that lose all responsibility die.
EmModel run_em(const std::vector<double>& xs, const std::vector<double>& logx, std::size_t n_use,
               const std::vector<int>& ks, int max_iters, double rel_tol) {
  const int nb = static_cast<int>(ks.size());
  const std::size_t count = n_use;
  EmModel mdl;
  mdl.ks = ks;
  mdl.w.assign(nb, 0.0);
  mdl.lam.assign(nb, 1.0);

  // quantile-block initialization: contiguous blocks of the sorted prefix,
  // sized by each branch's share of the phases
  std::vector<double> sorted(xs.begin(), xs.begin() + count);
  std::sort(sorted.begin(), sorted.end());
  int total_phases = std::accumulate(ks.begin(), ks.end(), 0);
  std::size_t off = 0;
  int used = 0;
  for (int b = 0; b < nb; ++b) {
    used += ks[b];
    std::size_t end = (b == nb - 1)
                          ? count
                          : static_cast<std::size_t>(static_cast<double>(count) * used / total_phases);
    end = std::clamp(end, off + 1, count - static_cast<std::size_t>(nb - 1 - b));
    double sum = std::accumulate(sorted.begin() + off, sorted.begin() + end, 0.0);
    double block_mean = sum / static_cast<double>(end - off);
    mdl.w[b] = static_cast<double>(end - off) / static_cast<double>(count);
    mdl.lam[b] = block_mean > 0.0 ? std::min(1e12, ks[b] / block_mean) : 1e12;
    off = end;
  }

  std::vector<double> c1(nb), l(nb), sumr(nb), sumrx(nb);
  double prev = -kInf;
  for (int it = 0; it < max_iters; ++it) {
    for (int b = 0; b < nb; ++b) {
      c1[b] = ks[b] * std::log(mdl.lam[b]) - std::lgamma(static_cast<double>(ks[b])) +
              log_tail_guard(mdl.w[b]);
    }
    std::fill(sumr.begin(), sumr.end(), 0.0);
    std::fill(sumrx.begin(), sumrx.end(), 0.0);
    double ll = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      double x = xs[i];
      double mx = -kInf;
      for (int b = 0; b < nb; ++b) {
        l[b] = c1[b] + (ks[b] - 1) * logx[i] - mdl.lam[b] * x;
        if (l[b] > mx) mx = l[b];
      }
      if (!(mx > -kInf)) continue;  // no branch gives this sample likelihood
      double s = 0.0;
      for (int b = 0; b < nb; ++b) {
        l[b] = std::exp(l[b] - mx);
        s += l[b];
      }
      ll += mx + std::log(s);
      double inv = 1.0 / s;
      for (int b = 0; b < nb; ++b) {
        double r = l[b] * inv;
        sumr[b] += r;
        sumrx[b] += r * x;
      }
    }

    for (int b = 0; b < nb; ++b) {
      if (sumr[b] > 1e-12 * static_cast<double>(count)) {
        mdl.w[b] = sumr[b] / static_cast<double>(count);
        mdl.lam[b] = sumrx[b] > 0.0 ? std::min(1e12, ks[b] * sumr[b] / sumrx[b]) : 1e12;
      } else {
        mdl.w[b] = 0.0;
      }
    }
    double wsum = std::accumulate(mdl.w.begin(), mdl.w.end(), 0.0);
    if (!(wsum > 0.0)) break;  // every branch died; keep the last state
    for (double& w : mdl.w) w /= wsum;

    mdl.loglik = ll;
    if (it > 0 && ll - prev <= rel_tol * (1.0 + std::abs(ll))) return mdl;
    prev = ll;
  }
  mdl.hit_cap = true;
  return mdl;
}

std::vector<DensityModel::HyperBranch> live_branches(const EmModel& m) {
  std::vector<DensityModel::HyperBranch> out;
  for (std::size_t b = 0; b < m.ks.size(); ++b) {
    if (m.w[b] > 0.0) out.push_back({m.w[b], m.ks[b], m.lam[b]});
  }
  return out;
}

// Fixed-grid L1 distance between a finite-support target and a mixture, for
// the many cheap probes of the polish searches.  Composite Simpson between
// the target's breakpoints plus the mixture's exact tail mass beyond the
// support; the final reported error always comes from the adaptive
// integrator.
double fast_l1(const DensityFn& f, const DensityModel& mix) {
  double horizon = f.support_high;
  std::vector<double> cuts{0.0};
  for (double b : f.breakpoints) {
    if (b > 0.0 && b < horizon) cuts.push_back(b);
  }
  cuts.push_back(horizon);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    double a = cuts[s], b = cuts[s + 1];
    if (!(b > a)) continue;
    const int n = 128;  // subintervals per segment, always even
    double h = (b - a) / n;
    auto g = [&](double x) { return std::abs(f.pdf(x) - mix.pdf(x)); };
    double acc = g(a) + g(b);
    for (int i = 1; i < n; ++i) acc += g(a + i * h) * (i % 2 ? 4.0 : 2.0);
    total += acc * h / 3.0;
  }
  total += 1.0 - mix.cdf(horizon);  // the target has no mass past its support
  return std::min(total, 2.0);
}

}  // namespace

double err_metric(const DensityModel& target, const DensityModel& candidate, double tail_tol) {
  return checked(err_core(wrap(target), wrap(candidate), tail_tol));
}

double err_metric(const DensityModel& target, const PhChain& candidate, double tail_tol) {
  AbsorptionCurve curve(candidate);
  return checked(err_core(wrap(target), wrap(curve), tail_tol));
}

double err_metric(const DensityModel& target, const DctmcChain& candidate, double tail_tol) {
  AbsorptionCurve curve(candidate);
  return checked(err_core(wrap(target), wrap(curve), tail_tol));
}

double err_metric(const DensityModel& target, const std::function<double(double)>& candidate,
                  double candidate_support_high, double tail_tol) {
  DensityFn f = wrap(target);
  DensityFn g;
  g.pdf = candidate;
  g.cdf = [](double) { return 1.0; };  // treat the candidate as spent at the horizon
  g.support_high = candidate_support_high;
  g.quantile = [&target](double tail) { return target.upper_quantile(tail); };
  return checked(err_core(f, g, tail_tol));
}

PhChain erlang_chain(int phases, int entry, double rate) {
  if (phases < 1 || entry < 1 || entry > phases) {
    throw PreconditionError("erlang_chain: entry phase out of range");
  }
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw ValidationError("erlang_chain: rate must be positive and finite");
  }
  PhChain c;
  c.phases = phases;
  c.init = {{entry, 1.0}};
  c.exits.resize(phases);
  for (int i = 1; i <= phases; ++i) c.exits[i - 1] = {rate, {{i - 1, 1.0}}};
  c.validate();
  return c;
}

PhChain hyper_erlang_chain(const std::vector<DensityModel::HyperBranch>& branches) {
  if (branches.empty()) throw PreconditionError("hyper_erlang_chain: no branches");
  PhChain c;
  int total = 0;
  for (const auto& b : branches) total += b.phases;
  c.phases = total;
  c.exits.resize(total);
  int off = 0;
  for (const auto& b : branches) {
    if (b.phases < 1) throw ValidationError("hyper_erlang_chain: branch needs at least one phase");
    for (int j = 1; j <= b.phases; ++j) {
      int ph = off + j;
      c.exits[ph - 1] = {b.rate, {{j == 1 ? 0 : ph - 1, 1.0}}};
    }
    if (b.weight > 0.0) c.init.emplace_back(off + b.phases, b.weight);
    off += b.phases;
  }
  c.validate();
  return c;
}

FitResult fit_erlang(const DensityModel& target, int phases, const FitOptions& opts) {
  auto t0 = std::chrono::steady_clock::now();
  if (phases < 1) throw PreconditionError("fit_erlang: need at least one phase");
  const double mean = target.mean();
  if (!(mean > 0.0) || !std::isfinite(mean)) throw PreconditionError("moment unavailable");

  DensityFn unit = wrap_scaled(target, mean);
  const bool fast_ok = std::isfinite(unit.support_high);
  auto probe = [&](const DensityModel& cand) -> ErrOutcome {
    if (fast_ok) return ErrOutcome{fast_l1(unit, cand), true, 0.0};
    return err_core(unit, wrap(cand), 1e-7);
  };

  // Candidate entry depths: the squared-CV depth and its neighbourhood, the
  // extremes, and every power of two so budget-doubling sweeps always retain
  // the smaller budget's winner.
  double cv2 = target.variance() / (mean * mean);
  int depth_star = phases;
  if (std::isfinite(cv2) && cv2 > 1e-12) {
    double raw = 1.0 / cv2;
    depth_star = raw >= static_cast<double>(phases)
                     ? phases
                     : std::max(1, static_cast<int>(std::llround(raw)));
  }
  std::set<int> entries;
  for (int d = -2; d <= 2; ++d) entries.insert(std::clamp(depth_star + d, 1, phases));
  entries.insert(1);
  entries.insert(phases);
  for (int p2 = 1; p2 <= phases; p2 *= 2) entries.insert(p2);

  struct Winner {
    double err = kInf;
    int entry = 1;
    double unit_rate = 1.0;
    bool conv = true;
    double tol = 0.0;
  };
  Winner win;
  for (int entry : entries) {
    auto at_log_rate = [&](double y) { return probe(DensityModel::erlang(entry, std::exp(y))); };
    RateSearch rs = golden_min(at_log_rate, std::log(0.1 * entry), std::log(10.0 * entry),
                               std::log(static_cast<double>(entry)), opts.max_rate_evals);
    if (rs.err < win.err) win = {rs.err, entry, rs.rate, rs.converged, rs.achieved_tol};
  }

  // report on the trusted integrator, and never lose to the moment-matched
  // starting point (the full-depth chain at rate n/mean)
  ErrOutcome exact = err_core(unit, wrap(DensityModel::erlang(win.entry, win.unit_rate)), 1e-7);
  win.err = exact.value;
  win.conv = exact.converged;
  win.tol = exact.achieved_tol;
  ErrOutcome seed =
      err_core(unit, wrap(DensityModel::erlang(phases, static_cast<double>(phases))), 1e-7);
  if (seed.value < win.err) {
    win = {seed.value, phases, static_cast<double>(phases), seed.converged, seed.achieved_tol};
  }

  double rate = win.unit_rate / mean;
  FitResult out;
  out.chain = erlang_chain(phases, win.entry, rate);
  out.density = DensityModel::erlang(win.entry, rate);
  out.err = win.err;
  out.phases = phases;
  out.family = "erlang";
  std::ostringstream detail;
  detail << "erlang(" << win.entry << ", " << rate << ") in a " << phases << "-phase chain";
  out.detail = detail.str();
  out.converged = win.conv;
  if (!win.conv) {
    std::ostringstream w;
    w << "distance quadrature stopped at per-interval tolerance " << win.tol;
    out.warnings.push_back(w.str());
  }
  out.seconds = now_seconds(t0);
  return out;
}

FitResult fit_hyper_erlang(const DensityModel& target, int phases, int branches,
                           const FitOptions& opts) {
  auto t0 = std::chrono::steady_clock::now();
  if (branches < 1) throw PreconditionError("fit_hyper_erlang: need at least one branch");
  if (phases < branches) throw PreconditionError("fit_hyper_erlang: phases must be >= branches");
  const double mean = target.mean();
  if (!(mean > 0.0) || !std::isfinite(mean)) throw PreconditionError("moment unavailable");

  std::vector<std::string> warnings;
  bool truncated = false;
  std::vector<std::vector<int>> parts =
      balanced_partitions(phases, branches, opts.max_partitions, truncated);
  if (truncated) {
    warnings.push_back("partition budget exhausted; returning the best explored candidate");
  }

  // one fixed sample set drives every EM run
  std::size_t n_samples = std::max<std::uint64_t>(opts.em_samples, 1000);
  SeededStream rng(opts.seed, 0);
  std::vector<double> xs(n_samples), logx(n_samples);
  for (double& x : xs) x = target.sample(rng);
  for (std::size_t i = 0; i < n_samples; ++i) logx[i] = log_tail_guard(xs[i]);

  DensityFn target_fn = wrap(target);
  const bool fast_ok = std::isfinite(target_fn.support_high);
  auto probe_err = [&](const std::vector<DensityModel::HyperBranch>& live) -> ErrOutcome {
    DensityModel density = DensityModel::hyper_erlang(live);
    if (fast_ok) return ErrOutcome{fast_l1(target_fn, density), true, 0.0};
    return err_core(target_fn, wrap(density), 1e-7);
  };

  struct Scored {
    EmModel em;
    double err = kInf;
    bool quad_conv = true;
    double quad_tol = 0.0;
    std::size_t order = 0;
  };
  std::vector<Scored> scored;

  auto evaluate = [&](EmModel em, std::size_t order) {
    Scored s;
    s.em = std::move(em);
    auto live = live_branches(s.em);
    if (live.empty()) return;  // EM degenerated; drop the candidate
    ErrOutcome o = probe_err(live);
    s.err = o.value;
    s.quad_conv = o.converged;
    s.quad_tol = o.achieved_tol;
    s.order = order;
    scored.push_back(std::move(s));
  };

  // coarse pass over every partition, then a full-budget pass on the leaders
  std::size_t n_coarse = std::min<std::size_t>(n_samples, 10000);
  int coarse_iters = std::min(opts.em_max_iters, 40);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    evaluate(run_em(xs, logx, n_coarse, parts[i], coarse_iters, std::max(opts.em_tol, 1e-5)),
             i);
  }
  auto better = [](const Scored& a, const Scored& b) {
    if (a.err != b.err) return a.err < b.err;
    return a.order < b.order;
  };
  std::vector<std::size_t> leader_idx(scored.size());
  std::iota(leader_idx.begin(), leader_idx.end(), 0);
  std::stable_sort(leader_idx.begin(), leader_idx.end(),
                   [&](std::size_t a, std::size_t b) { return better(scored[a], scored[b]); });
  std::size_t refine = std::min<std::size_t>(5, leader_idx.size());
  std::size_t n_scored = scored.size();
  for (std::size_t r = 0; r < refine; ++r) {
    const std::vector<int>& ks = scored[leader_idx[r]].em.ks;
    evaluate(run_em(xs, logx, n_samples, ks, opts.em_max_iters, opts.em_tol), n_scored + r);
  }

  // the plain chain fitter always competes: its continuous rate search can
  // beat EM's likelihood-driven rates on the distance objective, so the
  // mixture result never loses to fit_erlang
  FitResult plain = fit_erlang(target, phases, opts);

  // EM maximizes likelihood while the reported objective is the density
  // distance; golden-section repairs on the branch rates (a shared rescale,
  // then coordinate descent over individual rates) close part of the gap
  // between the two objectives.  The pre-repair ranking is not the
  // post-repair ranking, so the leading few candidates all get repaired.
  struct Polished {
    std::vector<DensityModel::HyperBranch> live;
    double err = kInf;
    bool quad_conv = true;
    double quad_tol = 0.0;
    const EmModel* em = nullptr;
  };

  // One coordinate-descent sweep: a shared rate rescale, then per-branch rate
  // and weight adjustments, each a one-dimensional golden-section search on
  // the distance itself.  Returns the relative improvement of the sweep.
  auto polish_sweep = [&](Polished& p) {
    double before = p.err;
    auto try_search = [&](const std::function<ErrOutcome(double)>& fn, double lo, double hi,
                          auto&& apply) {
      RateSearch rs = golden_min(fn, lo, hi, 0.0, opts.max_rate_evals);
      if (rs.err < p.err) {
        p.err = rs.err;
        p.quad_conv = rs.converged;
        p.quad_tol = rs.achieved_tol;
        apply(rs.rate);
      }
    };
    try_search(
        [&](double y) {
          double c = std::exp(y);
          std::vector<DensityModel::HyperBranch> scaled = p.live;
          for (auto& br : scaled) br.rate *= c;
          return probe_err(scaled);
        },
        std::log(0.7), std::log(1.4), [&](double c) {
          for (auto& br : p.live) br.rate *= c;
        });
    if (p.live.size() > 1) {
      for (std::size_t j = 0; j < p.live.size(); ++j) {
        try_search(
            [&](double y) {
              std::vector<DensityModel::HyperBranch> scaled = p.live;
              scaled[j].rate *= std::exp(y);
              return probe_err(scaled);
            },
            std::log(0.75), std::log(1.34), [&](double c) { p.live[j].rate *= c; });
        try_search(
            [&](double y) {
              std::vector<DensityModel::HyperBranch> scaled = p.live;
              scaled[j].weight *= std::exp(y);
              double total = 0.0;
              for (const auto& br : scaled) total += br.weight;
              for (auto& br : scaled) br.weight /= total;
              return probe_err(scaled);
            },
            std::log(0.75), std::log(1.34), [&](double c) {
              p.live[j].weight *= c;
              double total = 0.0;
              for (const auto& br : p.live) total += br.weight;
              for (auto& br : p.live) br.weight /= total;
            });
      }
    }
    return before > 0.0 ? (before - p.err) / before : 0.0;
  };

  std::vector<std::size_t> polish_idx(scored.size());
  std::iota(polish_idx.begin(), polish_idx.end(), 0);
  std::stable_sort(polish_idx.begin(), polish_idx.end(),
                   [&](std::size_t a, std::size_t b) { return better(scored[a], scored[b]); });
  std::size_t polish_count = phases <= 12 ? polish_idx.size() : std::size_t{3};
  if (polish_idx.size() > polish_count) polish_idx.resize(polish_count);

  std::vector<Polished> polished;
  polished.reserve(polish_idx.size());
  for (std::size_t pi : polish_idx) {
    const Scored& s = scored[pi];
    Polished p;
    p.live = live_branches(s.em);
    p.err = s.err;
    p.quad_conv = s.quad_conv;
    p.quad_tol = s.quad_tol;
    p.em = &s.em;
    for (int pass = 0; pass < 3; ++pass) {
      if (polish_sweep(p) < 3e-3) break;
    }
    polished.push_back(std::move(p));
  }
  std::stable_sort(polished.begin(), polished.end(),
                   [](const Polished& a, const Polished& b) { return a.err < b.err; });
  for (std::size_t r = 0; r < std::min<std::size_t>(3, polished.size()); ++r) {
    for (int pass = 0; pass < 12; ++pass) {
      if (polish_sweep(polished[r]) < 3e-4) break;
    }
  }

  // Coordinate descent is local, and in small mixtures the landscape has
  // several valleys of similar depth.  For small fits, scan the basins of
  // the leading partitions from fresh configurations — structured tilings of
  // the support plus seeded random draws, a short descent on each — and give
  // the best of the scan a full descent.
  if (phases <= 12 && !polished.empty()) {
    double span = target.support_high();
    if (!std::isfinite(span) || !(span > 0.0)) span = 2.0 * mean;
    SeededStream restart_rng(opts.seed, 1);

    auto descend = [&](Polished& cfg, int max_sweeps, double stall) {
      ErrOutcome o = probe_err(cfg.live);
      cfg.err = o.value;
      cfg.quad_conv = o.converged;
      cfg.quad_tol = o.achieved_tol;
      for (int pass = 0; pass < max_sweeps; ++pass) {
        if (polish_sweep(cfg) < stall) break;
      }
    };

    // Coordinate descent also stalls on correlated coordinates, so after a
    // descent, shrinking random joint perturbations try to knock the
    // configuration off any stationary point that is not a minimum.
    auto perturb = [&](Polished& cfg) {
      double delta = 0.2;
      for (int t = 0; t < 80; ++t) {
        std::vector<DensityModel::HyperBranch> trial = cfg.live;
        double total = 0.0;
        for (auto& br : trial) {
          br.rate *= std::exp(delta * (2.0 * restart_rng.uniform() - 1.0));
          br.weight *= std::exp(delta * (2.0 * restart_rng.uniform() - 1.0));
          total += br.weight;
        }
        for (auto& br : trial) br.weight /= total;
        ErrOutcome o = probe_err(trial);
        if (o.value < cfg.err) {
          cfg.live = std::move(trial);
          cfg.err = o.value;
          cfg.quad_conv = o.converged;
          cfg.quad_tol = o.achieved_tol;
        } else {
          delta = std::max(0.01, delta * 0.95);
        }
      }
    };

    std::vector<Polished> scan;
    for (std::size_t r = 0; r < std::min<std::size_t>(4, polished.size()); ++r) {
      const Polished& base = polished[r];
      std::vector<DensityModel::HyperBranch> by_depth = base.live;
      std::sort(by_depth.begin(), by_depth.end(),
                [](const auto& a, const auto& b) { return a.phases < b.phases; });
      double m = static_cast<double>(by_depth.size());
      int total_phases = 0;
      for (const auto& br : by_depth) total_phases += br.phases;

      // equal tiling: branch means spread evenly over the support
      Polished even;
      even.em = base.em;
      even.live = by_depth;
      for (std::size_t j = 0; j < even.live.size(); ++j) {
        double center = span * (static_cast<double>(j) + 0.5) / m;
        even.live[j].rate = static_cast<double>(even.live[j].phases) / center;
        even.live[j].weight = 1.0 / m;
      }
      scan.push_back(std::move(even));

      // proportional tiling: each branch covers a stretch sized by its depth
      Polished prop;
      prop.em = base.em;
      prop.live = by_depth;
      int cum = 0;
      for (auto& br : prop.live) {
        double center = span * (cum + 0.5 * br.phases) / total_phases;
        br.rate = static_cast<double>(br.phases) / center;
        br.weight = static_cast<double>(br.phases) / total_phases;
        cum += br.phases;
      }
      scan.push_back(std::move(prop));

      for (int restart = 0; restart < 8; ++restart) {
        Polished alt;
        alt.em = base.em;
        alt.live = by_depth;
        double total = 0.0;
        for (auto& br : alt.live) {
          br.weight = 0.2 + 0.8 * restart_rng.uniform();
          double center = (0.1 + 0.9 * restart_rng.uniform()) * span;
          br.rate = static_cast<double>(br.phases) / center;
          total += br.weight;
        }
        for (auto& br : alt.live) br.weight /= total;
        scan.push_back(std::move(alt));
      }
    }
    for (Polished& cfg : scan) descend(cfg, 6, 1e-3);
    std::stable_sort(scan.begin(), scan.end(),
                     [](const Polished& a, const Polished& b) { return a.err < b.err; });
    if (scan.size() > 3) scan.resize(3);
    for (Polished& cfg : scan) {
      descend(cfg, 40, 1e-5);
      perturb(cfg);
      descend(cfg, 40, 1e-5);
      polished.push_back(std::move(cfg));
    }
    for (std::size_t r = 0; r < std::min<std::size_t>(2, polished.size()); ++r) {
      perturb(polished[r]);
      descend(polished[r], 40, 1e-5);
    }
  }

  // the searches above rank by the fast evaluator; report and select on
  // the trusted adaptive integrator
  for (Polished& p : polished) {
    ErrOutcome exact = err_core(target_fn, wrap(DensityModel::hyper_erlang(p.live)), 1e-7);
    p.err = exact.value;
    p.quad_conv = exact.converged;
    p.quad_tol = exact.achieved_tol;
  }

  std::vector<DensityModel::HyperBranch> best_live;
  double best_err = kInf;
  bool best_quad_conv = true;
  double best_quad_tol = 0.0;
  const EmModel* best_em = nullptr;
  for (Polished& p : polished) {
    if (p.err < best_err) {
      best_err = p.err;
      best_live = std::move(p.live);
      best_quad_conv = p.quad_conv;
      best_quad_tol = p.quad_tol;
      best_em = p.em;
    }
  }
  FitResult out;
  if (!best_em || plain.err <= best_err) {
    out = std::move(plain);
    out.family = "hyper-erlang";
    if (!best_em) {
      out.warnings.push_back("every mixture candidate degenerated; falling back to the plain fit");
    }
  } else {
    out.chain = hyper_erlang_chain(best_live);
    out.density = DensityModel::hyper_erlang(best_live);
    out.err = best_err;
    out.phases = phases;
    out.family = "hyper-erlang";
    out.detail = out.density->describe();
    out.converged = best_quad_conv && !best_em->hit_cap;
    if (!best_quad_conv) {
      std::ostringstream w;
      w << "distance quadrature stopped at per-interval tolerance " << best_quad_tol;
      out.warnings.push_back(w.str());
    }
    if (best_em->hit_cap) {
      out.warnings.push_back("EM stopped at the iteration cap before the likelihood settled");
    }
  }
  out.warnings.insert(out.warnings.end(), warnings.begin(), warnings.end());
  out.seconds = now_seconds(t0);
  return out;
}

Fitter make_fitter(const std::string& name, const FitOptions& opts) {
  std::string base = name;
  int branches = 4;
  bool branched = false;
  if (auto pos = name.find(':'); pos != std::string::npos) {
    base = name.substr(0, pos);
    try {
      branches = std::stoi(name.substr(pos + 1));
      branched = true;
    } catch (const std::exception&) {
      throw ValidationError("unknown fitter '" + name + "'");
    }
  }
  if (base == "erlang" && !branched) {
    return [opts](const DensityModel& f, int n) { return fit_erlang(f, n, opts); };
  }
  if (base == "hyper-erlang" || base == "hypererlang") {
    if (branches < 1) throw ValidationError("fitter '" + name + "': need at least one branch");
    return [opts, branches](const DensityModel& f, int n) {
      return fit_hyper_erlang(f, n, std::min(branches, n), opts);
    };
  }
  throw ValidationError("unknown fitter '" + name + "' (expected erlang or hyper-erlang[:branches])");
}

}  // namespace iphkit

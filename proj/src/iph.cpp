#include "iphkit/iph.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "iphkit/errors.hpp"

namespace iphkit {
namespace {

double now_seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Copy a fitted component into the global chain so its phases occupy
// offset+1 .. offset+component.phases; phase 0 stays shared.
void splice_component(PhChain& whole, const PhChain& comp, int offset) {
  for (int j = 1; j <= comp.phases; ++j) {
    PhChain::Exit exit = comp.exits[j - 1];
    for (auto& [tgt, pr] : exit.succ) {
      if (tgt != 0) tgt += offset;
    }
    whole.exits[offset + j - 1] = std::move(exit);
  }
}

std::vector<std::pair<int, double>> mapped_init(const PhChain& comp, int offset) {
  std::vector<std::pair<int, double>> init = comp.init;
  for (auto& [ph, pr] : init) ph += offset;
  return init;
}

SlicePlan plan_for(SliceMode mode, double upper, int slices) {
  switch (mode) {
    case SliceMode::kExponential:
      return SlicePlan::exponential(upper, slices);
    case SliceMode::kEquidistant:
      return SlicePlan::equidistant(upper, slices);
    default:
      throw ValidationError("custom slice boundaries must be passed as a SlicePlan");
  }
}

std::string nearest_divisible(int n, int p) {
  int lower = (n / p) * p;
  int upper = lower + p;
  std::ostringstream msg;
  if (lower >= p) {
    msg << lower << " or " << upper;
  } else {
    msg << upper;
  }
  return msg.str();
}

}  // namespace

SlicePlan SlicePlan::exponential(double upper, int slices) {
  SlicePlan plan;
  plan.upper = upper;
  plan.slices = slices;
  plan.mode = SliceMode::kExponential;
  plan.boundaries.push_back(0.0);
  // u - u*2^-i keeps each boundary correctly rounded; consecutive boundaries
  // stay within a factor two, so their differences are exact
  for (int i = 1; i < slices; ++i) plan.boundaries.push_back(upper - std::ldexp(upper, -i));
  plan.boundaries.push_back(upper);
  plan.validate();
  return plan;
}

SlicePlan SlicePlan::equidistant(double upper, int slices) {
  SlicePlan plan;
  plan.upper = upper;
  plan.slices = slices;
  plan.mode = SliceMode::kEquidistant;
  for (int i = 0; i < slices; ++i) plan.boundaries.push_back(upper * i / slices);
  plan.boundaries.push_back(upper);
  plan.validate();
  return plan;
}

SlicePlan SlicePlan::custom(std::vector<double> boundaries) {
  SlicePlan plan;
  if (boundaries.size() < 3) {
    throw ValidationError("slice plan: need at least two slices (three boundaries)");
  }
  plan.upper = boundaries.back();
  plan.slices = static_cast<int>(boundaries.size()) - 1;
  plan.mode = SliceMode::kCustom;
  plan.boundaries = std::move(boundaries);
  plan.validate();
  return plan;
}

void SlicePlan::validate() const {
  if (slices < 2) throw ValidationError("slice plan: need at least two slices");
  if (!(upper > 0.0) || !std::isfinite(upper)) {
    throw ValidationError("slice plan: upper bound must be positive and finite");
  }
  if (boundaries.size() != static_cast<std::size_t>(slices) + 1) {
    throw ValidationError("slice plan: boundary count must be slices + 1");
  }
  if (boundaries.front() != 0.0) throw ValidationError("slice plan: first boundary must be 0");
  if (boundaries.back() != upper) {
    throw ValidationError("slice plan: last boundary must equal the upper bound");
  }
  for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
    if (!(boundaries[i] < boundaries[i + 1])) {
      throw ValidationError("slice plan: boundaries must be strictly increasing");
    }
  }
}

IphResult iph_shift(const Fitter& fit, int n, const DensityModel& f) {
  auto t0 = std::chrono::steady_clock::now();
  if (n < 2) throw PreconditionError("iph_shift: needs at least 2 phases");
  double l = f.support_low();
  if (!(l > 0.0)) {
    throw PreconditionError(
        "iph_shift: support starts at zero, nothing to shift; use a plain fit or iph_slice");
  }

  FitResult comp = fit(f.residual(l), n - 1);

  IphResult out;
  out.shift = l;
  out.phases_used = n;
  PhChain& chain = out.chain.ctmc;
  chain.phases = n;
  chain.exits.resize(n);  // phase n is the fresh head with no exponential exit
  splice_component(chain, comp.chain, 0);
  chain.init = {{n, 1.0}};

  ChainDetEvent head;
  head.id = "shift";
  head.delay = l;
  head.active = {n};
  head.succ[n] = mapped_init(comp.chain, 0);
  out.chain.det.push_back(std::move(head));
  out.chain.validate();

  out.err = err_metric(f, out.chain);
  out.components.push_back(std::move(comp));
  out.seconds = now_seconds(t0);
  return out;
}

IphResult iph_slice(const Fitter& fit, int n, const DensityModel& f, const SlicePlan& plan) {
  auto t0 = std::chrono::steady_clock::now();
  plan.validate();
  double u = f.support_high();
  if (!std::isfinite(u)) {
    throw PreconditionError(
        "iph_slice: unbounded support, no finite bound to slice; use a plain fit or iph_shift");
  }
  if (!(std::abs(plan.upper - u) <= 1e-9 * std::max(1.0, u))) {
    throw PreconditionError("iph_slice: plan upper bound does not match the density support");
  }
  int p = plan.slices;
  if (n % p != 0) {
    std::ostringstream msg;
    msg << "iph_slice: phase count " << n << " is not divisible by slice count " << p
        << "; nearest valid phase count: " << nearest_divisible(n, p);
    throw PreconditionError(msg.str());
  }
  int per_slice = n / p;

  IphResult out;
  out.plan = plan;
  out.phases_used = n;
  PhChain& chain = out.chain.ctmc;
  chain.phases = n;
  chain.exits.resize(n);

  std::vector<std::vector<std::pair<int, double>>> inits(p);
  for (int i = 0; i < p; ++i) {
    FitResult comp = fit(f.residual(plan.boundaries[i]), per_slice);
    splice_component(chain, comp.chain, i * per_slice);
    inits[i] = mapped_init(comp.chain, i * per_slice);
    out.components.push_back(std::move(comp));
  }
  chain.init = inits[0];

  for (int i = 1; i < p; ++i) {
    ChainDetEvent hop;
    hop.id = "slice" + std::to_string(i);
    hop.delay = plan.boundaries[i] - plan.boundaries[i - 1];
    for (int j = 1; j <= per_slice; ++j) {
      int ph = (i - 1) * per_slice + j;
      hop.active.push_back(ph);
      hop.succ[ph] = inits[i];
    }
    out.chain.det.push_back(std::move(hop));
  }
  out.chain.validate();

  out.err = err_metric(f, out.chain);
  out.notes.push_back("component fits target the whole conditional density, not only their slice");
  out.seconds = now_seconds(t0);
  return out;
}

IphResult iph_slice(const Fitter& fit, int n, int p, const DensityModel& f, SliceMode mode) {
  double u = f.support_high();
  if (!std::isfinite(u)) {
    throw PreconditionError(
        "iph_slice: unbounded support, no finite bound to slice; use a plain fit or iph_shift");
  }
  return iph_slice(fit, n, f, plan_for(mode, u, p));
}

IphResult iph_shift_slice(const Fitter& fit, int n, int p, const DensityModel& f, SliceMode mode) {
  auto t0 = std::chrono::steady_clock::now();
  if (n < 2) throw PreconditionError("iph_shift_slice: needs at least 2 phases");
  double l = f.support_low();
  if (!(l > 0.0)) {
    throw PreconditionError(
        "iph_shift_slice: support starts at zero, nothing to shift; use iph_slice");
  }
  if (!std::isfinite(f.support_high())) {
    throw PreconditionError(
        "iph_shift_slice: unbounded support, no finite bound to slice; use iph_shift");
  }
  if (p < 2) throw PreconditionError("iph_shift_slice: need at least two slices");
  if ((n - 1) % p != 0) {
    std::ostringstream msg;
    msg << "iph_shift_slice: after the head phase, " << (n - 1)
        << " phases are not divisible by slice count " << p
        << "; nearest valid phase count: ";
    int lower = ((n - 1) / p) * p;
    if (lower >= p) {
      msg << (lower + 1) << " or " << (lower + p + 1);
    } else {
      msg << (lower + p + 1);
    }
    throw PreconditionError(msg.str());
  }

  DensityModel residual = f.residual(l);
  IphResult inner = iph_slice(fit, n - 1, p, residual, mode);

  IphResult out;
  out.plan = inner.plan;
  out.shift = l;
  out.phases_used = n;
  out.components = std::move(inner.components);
  out.notes = std::move(inner.notes);
  out.chain = std::move(inner.chain);
  out.chain.ctmc.phases = n;
  out.chain.ctmc.exits.resize(n);  // head phase n, no exponential exit

  ChainDetEvent head;
  head.id = "shift";
  head.delay = l;
  head.active = {n};
  head.succ[n] = out.chain.ctmc.init;
  out.chain.ctmc.init = {{n, 1.0}};
  out.chain.det.insert(out.chain.det.begin(), std::move(head));
  out.chain.validate();

  out.err = err_metric(f, out.chain);
  out.seconds = now_seconds(t0);
  return out;
}

std::vector<SweepRow> sweep_error_vs_phases(const DensityModel& f, const std::string& fitter,
                                            const std::vector<int>& ns,
                                            const std::vector<std::string>& methods,
                                            const std::vector<int>& slice_counts,
                                            const FitOptions& opts, int jobs) {
  if (ns.empty()) throw PreconditionError("sweep: need at least one phase count");
  if (methods.empty()) throw PreconditionError("sweep: need at least one method");
  if (jobs < 1) throw PreconditionError("sweep: jobs must be >= 1");
  for (const std::string& m : methods) {
    if (m != "plain" && m != "shift" && m != "slice" && m != "shift+slice") {
      throw ValidationError("sweep: unknown method '" + m +
                            "' (expected plain, shift, slice, or shift+slice)");
    }
    if ((m == "slice" || m == "shift+slice") && slice_counts.empty()) {
      throw PreconditionError("sweep: method '" + m + "' needs slice counts");
    }
  }

  std::vector<SweepRow> rows;
  for (const std::string& method : methods) {
    bool sliced = method == "slice" || method == "shift+slice";
    const std::vector<int> ps = sliced ? slice_counts : std::vector<int>{0};
    for (int n : ns) {
      for (int p : ps) {
        SweepRow row;
        row.method = method;
        row.n = n;
        row.p = p;
        row.err = std::numeric_limits<double>::quiet_NaN();
        rows.push_back(std::move(row));
      }
    }
  }

  auto run_cell = [&](std::size_t i) {
    SweepRow& row = rows[i];
    FitOptions cell_opts = opts;
    cell_opts.seed = SeededStream::mix(opts.seed, 0xce11u + i);
    Fitter fit = make_fitter(fitter, cell_opts);
    try {
      if (row.method == "plain") {
        FitResult r = fit(f, row.n);
        row.err = r.err;
        row.seconds = r.seconds;
      } else if (row.method == "shift") {
        IphResult r = iph_shift(fit, row.n, f);
        row.err = r.err;
        row.seconds = r.seconds;
      } else if (row.method == "slice") {
        IphResult r = iph_slice(fit, row.n, row.p, f);
        row.err = r.err;
        row.seconds = r.seconds;
      } else {
        IphResult r = iph_shift_slice(fit, row.n, row.p, f);
        row.err = r.err;
        row.seconds = r.seconds;
      }
    } catch (const std::exception& e) {
      row.flag = e.what();  // a voided cell, not a failed sweep
    }
  };

  int workers = std::min<int>(jobs, static_cast<int>(rows.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < rows.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < rows.size(); i = next.fetch_add(1)) {
          run_cell(i);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }
  return rows;
}

DensityModel shift_law_noise() {
  // tent-shaped histogram on [0, 1/2]: rough, bounded, nothing special
  std::vector<double> edges;
  for (int i = 0; i <= 10; ++i) edges.push_back(0.05 * i);
  std::vector<double> masses = {1, 2, 3, 4, 5, 5, 4, 3, 2, 1};
  double total = 30.0;
  for (double& m : masses) m /= total;
  return DensityModel::empirical(std::move(edges), std::move(masses));
}

std::vector<ShiftLawRow> shift_law_experiment(const std::vector<double>& shifts,
                                              double variance_target, double err_threshold,
                                              int phase_cap, const FitOptions& opts) {
  if (shifts.empty()) throw PreconditionError("shift law: need at least one shift");
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    if (!(shifts[i] > 0.0)) throw PreconditionError("shift law: shifts must be positive");
    if (i > 0 && !(shifts[i] > shifts[i - 1])) {
      throw PreconditionError("shift law: shifts must be ascending");
    }
  }
  if (!(variance_target > 0.0)) throw PreconditionError("shift law: variance target must be > 0");
  if (!(err_threshold > 0.0)) throw PreconditionError("shift law: threshold must be > 0");

  DensityModel noise = shift_law_noise();
  std::vector<ShiftLawRow> rows;
  for (double s : shifts) {
    ShiftLawRow row;
    row.shift = s;
    row.phases_closed_form = static_cast<long long>(std::ceil(s * s / variance_target));
    DensityModel target = DensityModel::shifted(noise, s);

    std::map<int, double> err_cache;
    auto err_at = [&](int k) {
      auto it = err_cache.find(k);
      if (it != err_cache.end()) return it->second;
      double e = fit_erlang(target, k, opts).err;
      err_cache[k] = e;
      return e;
    };

    // double until the threshold is met, then bisect for the first pass
    int hi = 1;
    while (hi <= phase_cap && err_at(hi) > err_threshold) hi *= 2;
    if (hi > phase_cap) {
      row.phases_measured = 0;
      row.err_at_measured = std::numeric_limits<double>::quiet_NaN();
      std::ostringstream msg;
      msg << "threshold " << err_threshold << " not reached within " << phase_cap << " phases";
      row.flag = msg.str();
    } else {
      int lo = hi / 2;  // 0 when hi == 1; lo is known to fail (or be empty)
      while (hi - lo > 1) {
        int mid = lo + (hi - lo) / 2;
        (err_at(mid) <= err_threshold ? hi : lo) = mid;
      }
      row.phases_measured = hi;
      row.err_at_measured = err_at(hi);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace iphkit

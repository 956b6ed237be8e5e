#include "iphkit/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "iphkit/errors.hpp"

namespace iphkit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSupportMassFloor = 1e-9;  // bins lighter than this do not count as support

double poisson_pmf(int j, double lambda) {
  if (lambda <= 0.0) return j == 0 ? 1.0 : 0.0;
  return std::exp(j * std::log(lambda) - lambda - std::lgamma(j + 1.0));
}

// P(Erlang(k, rate) <= x) = 1 - sum_{j<k} pois(j; rate*x).
double erlang_cdf(int k, double rate, double x) {
  if (x <= 0.0) return 0.0;
  double lx = rate * x;
  double survival = 0.0;
  for (int j = 0; j < k; ++j) {
    survival += poisson_pmf(j, lx);
  }
  return survival >= 1.0 ? 0.0 : 1.0 - survival;
}

double erlang_pdf(int k, double rate, double x) {
  if (x < 0.0) return 0.0;
  if (x == 0.0) return k == 1 ? rate : 0.0;
  // log form keeps large phase counts finite: rate^k x^(k-1) e^(-rate x) / (k-1)!
  double logp = k * std::log(rate) + (k - 1) * std::log(x) - rate * x - std::lgamma(static_cast<double>(k));
  return std::exp(logp);
}

int interval_index(const std::vector<double>& edges, double x) {
  // index of the bin [edges[i], edges[i+1]) containing x; last bin is closed.
  if (x < edges.front() || x > edges.back()) return -1;
  if (x >= edges[edges.size() - 2]) return static_cast<int>(edges.size()) - 2;
  auto it = std::upper_bound(edges.begin(), edges.end(), x);
  return static_cast<int>(it - edges.begin()) - 1;
}

double quantile_interpolated(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted[0];
  double pos = q * (sorted.size() - 1);
  std::size_t i = static_cast<std::size_t>(pos);
  if (i + 1 >= sorted.size()) return sorted.back();
  double frac = pos - i;
  return sorted[i] * (1.0 - frac) + sorted[i + 1] * frac;
}

}  // namespace

DensityModel DensityModel::exponential(double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw ValidationError("exponential: rate must be positive and finite");
  }
  DensityModel d;
  d.kind_ = Exponential{rate};
  d.finalize();
  return d;
}

DensityModel DensityModel::erlang(int phases, double rate) {
  if (phases < 1) throw ValidationError("erlang: phases must be >= 1");
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw ValidationError("erlang: rate must be positive and finite");
  }
  DensityModel d;
  d.kind_ = Erlang{phases, rate};
  d.finalize();
  return d;
}

DensityModel DensityModel::uniform(double a, double b) {
  if (!(a >= 0.0) || !(b > a) || !std::isfinite(b)) {
    throw ValidationError("uniform: need 0 <= a < b < inf");
  }
  DensityModel d;
  d.kind_ = Uniform{a, b};
  d.finalize();
  return d;
}

DensityModel DensityModel::shifted(DensityModel base, double shift) {
  if (!(shift > 0.0) || !std::isfinite(shift)) {
    throw ValidationError("shifted: shift must be positive and finite");
  }
  DensityModel d;
  // collapse nested shifts so support bookkeeping stays one level deep
  if (const auto* s = std::get_if<Shifted>(&base.kind_)) {
    d.kind_ = Shifted{s->base, s->shift + shift};
  } else {
    d.kind_ = Shifted{std::make_shared<DensityModel>(std::move(base)), shift};
  }
  d.finalize();
  return d;
}

DensityModel DensityModel::hyper_erlang(std::vector<HyperBranch> branches) {
  if (branches.empty()) throw ValidationError("hyper-erlang: needs at least one branch");
  double total = 0.0;
  for (const auto& b : branches) {
    if (b.phases < 1) throw ValidationError("hyper-erlang: branch phases must be >= 1");
    if (!(b.rate > 0.0) || !std::isfinite(b.rate)) {
      throw ValidationError("hyper-erlang: branch rate must be positive and finite");
    }
    if (!(b.weight >= 0.0)) throw ValidationError("hyper-erlang: branch weight must be >= 0");
    total += b.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("hyper-erlang: branch weights must sum to 1");
  }
  for (auto& b : branches) b.weight /= total;
  DensityModel d;
  d.kind_ = HyperErlang{std::move(branches)};
  d.finalize();
  return d;
}

DensityModel DensityModel::empirical(std::vector<double> edges, std::vector<double> masses) {
  if (edges.size() < 2 || masses.size() + 1 != edges.size()) {
    throw ValidationError("empirical: edges must be one longer than masses");
  }
  if (edges.front() < 0.0) throw ValidationError("empirical: support must be non-negative");
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    if (!(edges[i + 1] > edges[i])) throw ValidationError("empirical: edges must be strictly increasing");
  }
  double total = 0.0;
  for (double m : masses) {
    if (!(m >= 0.0)) throw ValidationError("empirical: masses must be >= 0");
    total += m;
  }
  if (std::abs(total - 1.0) > 1e-9 || total <= 0.0) {
    throw ValidationError("empirical: masses must sum to 1");
  }
  Empirical e;
  e.edges = std::move(edges);
  e.masses = std::move(masses);
  for (auto& m : e.masses) m /= total;
  e.cumulative.resize(e.masses.size());
  std::partial_sum(e.masses.begin(), e.masses.end(), e.cumulative.begin());
  e.cumulative.back() = 1.0;
  DensityModel d;
  d.kind_ = std::move(e);
  d.finalize();
  return d;
}

DensityModel DensityModel::from_samples(const std::vector<double>& samples, int bins) {
  if (samples.empty()) throw ValidationError("from_samples: no samples");
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() < 0.0) throw ValidationError("from_samples: negative sample");
  double lo = sorted.front();
  double hi = sorted.back();

  if (lo == hi) {
    // all samples identical: one narrow bin centred on the value
    double w = std::max(1e-6, 1e-6 * std::abs(lo));
    double left = std::max(0.0, lo - 0.5 * w);
    return empirical({left, left + w}, {1.0});
  }

  int nbins = bins;
  if (nbins <= 0) {
    double n = static_cast<double>(sorted.size());
    double iqr = quantile_interpolated(sorted, 0.75) - quantile_interpolated(sorted, 0.25);
    double h = 2.0 * iqr / std::cbrt(n);
    if (!(h > 0.0)) {
      // heavy ties can zero out the IQR; fall back to the normal-reference rule
      double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
      double ss = 0.0;
      for (double x : sorted) ss += (x - mean) * (x - mean);
      h = 3.49 * std::sqrt(ss / n) / std::cbrt(n);
    }
    nbins = h > 0.0 ? static_cast<int>(std::ceil((hi - lo) / h)) : 10;
    nbins = std::clamp(nbins, 10, 1000);
  }

  std::vector<double> edges(nbins + 1);
  for (int i = 0; i <= nbins; ++i) {
    edges[i] = lo + (hi - lo) * (static_cast<double>(i) / nbins);
  }
  edges.front() = lo;
  edges.back() = hi;
  std::vector<double> masses(nbins, 0.0);
  double inc = 1.0 / static_cast<double>(sorted.size());
  for (double x : sorted) {
    int idx = interval_index(edges, x);
    masses[idx < 0 ? (x < lo ? 0 : nbins - 1) : idx] += inc;
  }
  return empirical(std::move(edges), std::move(masses));
}

void DensityModel::finalize() {
  struct Visitor {
    DensityModel& d;
    void operator()(const Exponential& e) {
      d.mean_ = 1.0 / e.rate;
      d.var_ = 1.0 / (e.rate * e.rate);
      d.lo_ = 0.0;
      d.hi_ = kInf;
    }
    void operator()(const Erlang& e) {
      d.mean_ = e.phases / e.rate;
      d.var_ = e.phases / (e.rate * e.rate);
      d.lo_ = 0.0;
      d.hi_ = kInf;
    }
    void operator()(const Uniform& u) {
      d.mean_ = 0.5 * (u.a + u.b);
      d.var_ = (u.b - u.a) * (u.b - u.a) / 12.0;
      d.lo_ = u.a;
      d.hi_ = u.b;
    }
    void operator()(const Shifted& s) {
      d.mean_ = s.base->mean() + s.shift;
      d.var_ = s.base->variance();
      d.lo_ = s.base->support_low() + s.shift;
      d.hi_ = s.base->support_high() + s.shift;
    }
    void operator()(const HyperErlang& h) {
      double m1 = 0.0, m2 = 0.0;
      for (const auto& b : h.branches) {
        m1 += b.weight * b.phases / b.rate;
        m2 += b.weight * b.phases * (b.phases + 1.0) / (b.rate * b.rate);
      }
      d.mean_ = m1;
      d.var_ = m2 - m1 * m1;
      d.lo_ = 0.0;
      d.hi_ = kInf;
    }
    void operator()(const Empirical& e) {
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t i = 0; i < e.masses.size(); ++i) {
        double mid = 0.5 * (e.edges[i] + e.edges[i + 1]);
        double w = e.edges[i + 1] - e.edges[i];
        m1 += e.masses[i] * mid;
        m2 += e.masses[i] * (mid * mid + w * w / 12.0);
      }
      d.mean_ = m1;
      d.var_ = m2 - m1 * m1;
      // support ignores numerically empty bins at either end
      std::size_t first = 0, last = e.masses.size() - 1;
      while (first < last && e.masses[first] <= kSupportMassFloor) ++first;
      while (last > first && e.masses[last] <= kSupportMassFloor) --last;
      d.lo_ = e.edges[first];
      d.hi_ = e.edges[last + 1];
    }
  };
  std::visit(Visitor{*this}, kind_);
}

double DensityModel::pdf(double x) const {
  struct Visitor {
    double x;
    const DensityModel& d;
    double operator()(const Exponential& e) const {
      return x < 0.0 ? 0.0 : e.rate * std::exp(-e.rate * x);
    }
    double operator()(const Erlang& e) const { return erlang_pdf(e.phases, e.rate, x); }
    double operator()(const Uniform& u) const {
      return (x >= u.a && x < u.b) ? 1.0 / (u.b - u.a) : 0.0;
    }
    double operator()(const Shifted& s) const { return s.base->pdf(x - s.shift); }
    double operator()(const HyperErlang& h) const {
      double p = 0.0;
      for (const auto& b : h.branches) p += b.weight * erlang_pdf(b.phases, b.rate, x);
      return p;
    }
    double operator()(const Empirical& e) const {
      int i = interval_index(e.edges, x);
      if (i < 0 || x == e.edges.back()) return 0.0;
      return e.masses[i] / (e.edges[i + 1] - e.edges[i]);
    }
  };
  return std::visit(Visitor{x, *this}, kind_);
}

double DensityModel::cdf(double x) const {
  struct Visitor {
    double x;
    double operator()(const Exponential& e) const {
      return x <= 0.0 ? 0.0 : -std::expm1(-e.rate * x);
    }
    double operator()(const Erlang& e) const { return erlang_cdf(e.phases, e.rate, x); }
    double operator()(const Uniform& u) const {
      if (x <= u.a) return 0.0;
      if (x >= u.b) return 1.0;
      return (x - u.a) / (u.b - u.a);
    }
    double operator()(const Shifted& s) const { return s.base->cdf(x - s.shift); }
    double operator()(const HyperErlang& h) const {
      double p = 0.0;
      for (const auto& b : h.branches) p += b.weight * erlang_cdf(b.phases, b.rate, x);
      return p;
    }
    double operator()(const Empirical& e) const {
      if (x <= e.edges.front()) return 0.0;
      if (x >= e.edges.back()) return 1.0;
      int i = interval_index(e.edges, x);
      double before = i > 0 ? e.cumulative[i - 1] : 0.0;
      double frac = (x - e.edges[i]) / (e.edges[i + 1] - e.edges[i]);
      return before + e.masses[i] * frac;
    }
  };
  return std::visit(Visitor{x}, kind_);
}

double DensityModel::upper_quantile(double tail) const {
  if (!(tail > 0.0 && tail < 1.0)) throw ValidationError("upper_quantile: tail must be in (0, 1)");
  if (std::isfinite(hi_)) return hi_;
  if (const auto* e = std::get_if<Exponential>(&kind_)) {
    return -std::log(tail) / e->rate;
  }
  if (const auto* s = std::get_if<Shifted>(&kind_)) {
    return s->shift + s->base->upper_quantile(tail);
  }
  // doubling bracket then bisection on the cdf
  double target = 1.0 - tail;
  double hi = std::max(mean_ + std::sqrt(var_), 1.0);
  int guard = 0;
  while (cdf(hi) < target) {
    hi *= 2.0;
    if (++guard > 1200) throw ConvergenceError("upper_quantile: bracket search failed");
  }
  double lo = 0.0;
  for (int i = 0; i < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++i) {
    double mid = 0.5 * (lo + hi);
    (cdf(mid) < target ? lo : hi) = mid;
  }
  return hi;
}

DensityModel DensityModel::residual(double elapsed) const {
  if (!(elapsed >= 0.0) || !std::isfinite(elapsed)) {
    throw ValidationError("residual: elapsed must be non-negative and finite");
  }
  if (elapsed == 0.0) return *this;
  if (elapsed >= hi_) {
    throw PreconditionError("residual: elapsed " + std::to_string(elapsed) +
                            " is beyond the support of " + describe());
  }

  struct Visitor {
    double a;
    const DensityModel& d;
    DensityModel operator()(const Exponential& e) const {
      return DensityModel::exponential(e.rate);  // memoryless
    }
    DensityModel operator()(const Erlang& e) const {
      return residual_mixture({HyperBranch{1.0, e.phases, e.rate}});
    }
    DensityModel operator()(const Uniform& u) const {
      return DensityModel::uniform(std::max(u.a - a, 0.0), u.b - a);
    }
    DensityModel operator()(const Shifted& s) const {
      if (a < s.shift) return DensityModel::shifted(*s.base, s.shift - a);
      if (a == s.shift) return *s.base;
      return s.base->residual(a - s.shift);
    }
    DensityModel operator()(const HyperErlang& h) const { return residual_mixture(h.branches); }
    DensityModel operator()(const Empirical& e) const {
      double survival = 1.0 - d.cdf(a);
      if (!(survival > 0.0)) {
        throw PreconditionError("residual: no mass beyond elapsed " + std::to_string(a));
      }
      std::vector<double> edges;
      std::vector<double> masses;
      for (std::size_t i = 0; i < e.masses.size(); ++i) {
        double lo = e.edges[i], hi = e.edges[i + 1];
        if (hi <= a) continue;
        double cut = std::max(lo, a);
        if (edges.empty()) edges.push_back(cut - a);
        edges.push_back(hi - a);
        // density is flat inside a bin, so the kept mass is proportional to the kept width
        masses.push_back(e.masses[i] * (hi - cut) / (hi - lo) / survival);
      }
      return DensityModel::empirical(std::move(edges), std::move(masses));
    }

    // Residual of a mixture of Erlangs: conditioning turns each k-phase branch
    // into a sub-mixture over 1..k phases at the same rate, with Poisson
    // factors from expanding (x + a)^(k-1); branch weights rescale by survival.
    DensityModel residual_mixture(const std::vector<HyperBranch>& branches) const {
      std::vector<HyperBranch> out;
      double total = 0.0;
      for (const auto& b : branches) {
        double la = b.rate * a;
        for (int m = 1; m <= b.phases; ++m) {
          double w = b.weight * poisson_pmf(b.phases - m, la);
          if (w > 0.0) {
            out.push_back(HyperBranch{w, m, b.rate});
            total += w;
          }
        }
      }
      if (!(total > 0.0)) {
        throw PreconditionError("residual: no mass beyond elapsed " + std::to_string(a));
      }
      for (auto& b : out) b.weight /= total;
      return DensityModel::hyper_erlang(std::move(out));
    }
  };
  return std::visit(Visitor{elapsed, *this}, kind_);
}

double DensityModel::sample(RngStream& rng) const {
  struct Visitor {
    RngStream& rng;
    const DensityModel& d;
    double operator()(const Exponential& e) const {
      return -std::log1p(-rng.uniform()) / e.rate;
    }
    double operator()(const Erlang& e) const {
      double t = 0.0;
      for (int i = 0; i < e.phases; ++i) t += -std::log1p(-rng.uniform()) / e.rate;
      return t;
    }
    double operator()(const Uniform& u) const { return u.a + (u.b - u.a) * rng.uniform(); }
    double operator()(const Shifted& s) const { return s.shift + s.base->sample(rng); }
    double operator()(const HyperErlang& h) const {
      double u = rng.uniform();
      double acc = 0.0;
      const HyperBranch* pick = &h.branches.back();
      for (const auto& b : h.branches) {
        acc += b.weight;
        if (u < acc) {
          pick = &b;
          break;
        }
      }
      double t = 0.0;
      for (int i = 0; i < pick->phases; ++i) t += -std::log1p(-rng.uniform()) / pick->rate;
      return t;
    }
    double operator()(const Empirical& e) const {
      double u = rng.uniform();
      auto it = std::lower_bound(e.cumulative.begin(), e.cumulative.end(), u);
      std::size_t i = std::min<std::size_t>(it - e.cumulative.begin(), e.masses.size() - 1);
      double before = i > 0 ? e.cumulative[i - 1] : 0.0;
      double frac = e.masses[i] > 0.0 ? (u - before) / e.masses[i] : 0.5;
      return e.edges[i] + (e.edges[i + 1] - e.edges[i]) * frac;
    }
  };
  return std::visit(Visitor{rng, *this}, kind_);
}

std::vector<double> DensityModel::breakpoints() const {
  struct Visitor {
    const DensityModel& d;
    std::vector<double> operator()(const Exponential&) const { return {0.0}; }
    std::vector<double> operator()(const Erlang&) const { return {0.0}; }
    std::vector<double> operator()(const Uniform& u) const { return {u.a, u.b}; }
    std::vector<double> operator()(const Shifted& s) const {
      std::vector<double> pts = s.base->breakpoints();
      for (auto& p : pts) p += s.shift;
      pts.push_back(s.shift);
      return pts;
    }
    std::vector<double> operator()(const HyperErlang&) const { return {0.0}; }
    std::vector<double> operator()(const Empirical& e) const { return e.edges; }
  };
  return std::visit(Visitor{*this}, kind_);
}

std::string DensityModel::describe() const {
  std::ostringstream os;
  struct Visitor {
    std::ostringstream& os;
    void operator()(const Exponential& e) const { os << "exponential(" << e.rate << ")"; }
    void operator()(const Erlang& e) const { os << "erlang(" << e.phases << ", " << e.rate << ")"; }
    void operator()(const Uniform& u) const { os << "uniform(" << u.a << ", " << u.b << ")"; }
    void operator()(const Shifted& s) const {
      os << s.base->describe() << " shifted by " << s.shift;
    }
    void operator()(const HyperErlang& h) const {
      os << "hyper-erlang(" << h.branches.size() << " branches)";
    }
    void operator()(const Empirical& e) const {
      os << "empirical(" << e.masses.size() << " bins)";
    }
  };
  std::visit(Visitor{os}, kind_);
  return os.str();
}

}  // namespace iphkit

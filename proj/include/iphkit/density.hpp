#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "iphkit/rng.hpp"

namespace iphkit {

// A delay distribution on [0, inf) with an (almost-everywhere) density.
// Analytic kinds are stored in closed form; sampled data is stored as a
// histogram with piecewise-constant density.  The representation is closed
// under the residual operation f(x + a) / (1 - F(a)), which is what lets
// conditional remainders be passed around as first-class models.
class DensityModel {
 public:
  struct Exponential {
    double rate;
  };
  struct Erlang {
    int phases;
    double rate;
  };
  struct Uniform {
    double a;
    double b;
  };
  struct Shifted {
    std::shared_ptr<const DensityModel> base;
    double shift;
  };
  struct HyperBranch {
    double weight;
    int phases;
    double rate;
  };
  struct HyperErlang {
    std::vector<HyperBranch> branches;
  };
  struct Empirical {
    std::vector<double> edges;   // strictly increasing, size = bins + 1
    std::vector<double> masses;  // per-bin probability, sums to 1
    std::vector<double> cumulative;  // prefix sums of masses, same size as masses
  };

  using Kind = std::variant<Exponential, Erlang, Uniform, Shifted, HyperErlang, Empirical>;

  // Factories validate parameters and precompute moments and support bounds.
  static DensityModel exponential(double rate);
  static DensityModel erlang(int phases, double rate);
  static DensityModel uniform(double a, double b);
  static DensityModel shifted(DensityModel base, double shift);
  static DensityModel hyper_erlang(std::vector<HyperBranch> branches);
  static DensityModel empirical(std::vector<double> edges, std::vector<double> masses);

  // Histogram model from raw samples.  bins == 0 picks the bin count by the
  // Freedman-Diaconis rule, clamped to [10, 1000].  A constant sample vector
  // degenerates to a single narrow bin around the value.
  static DensityModel from_samples(const std::vector<double>& samples, int bins = 0);

  double pdf(double x) const;
  double cdf(double x) const;
  double mean() const { return mean_; }
  double variance() const { return var_; }
  double support_low() const { return lo_; }
  double support_high() const { return hi_; }  // +inf when unbounded

  // Smallest t with cdf(t) >= 1 - tail; exact for bounded kinds, found by
  // doubling + bisection otherwise.  Used to pick integration horizons.
  double upper_quantile(double tail) const;

  // Distribution of the remaining delay after `elapsed` time has passed
  // without the event firing: density x -> pdf(x + elapsed) / (1 - cdf(elapsed)).
  DensityModel residual(double elapsed) const;

  double sample(RngStream& rng) const;

  // Points where the density is allowed to be non-smooth (support edges,
  // histogram bin edges), for quadrature splitting.
  std::vector<double> breakpoints() const;

  const Kind& kind() const { return kind_; }
  std::string describe() const;

 private:
  DensityModel() = default;
  void finalize();  // computes mean_, var_, lo_, hi_

  Kind kind_;
  double mean_ = 0.0;
  double var_ = 0.0;
  double lo_ = 0.0;
  double hi_ = 0.0;
};

}  // namespace iphkit

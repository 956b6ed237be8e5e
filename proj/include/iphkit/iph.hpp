#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iphkit/chain.hpp"
#include "iphkit/density.hpp"
#include "iphkit/fit.hpp"

namespace iphkit {

enum class SliceMode { kExponential, kEquidistant, kCustom };

// Partition of a bounded support [0, u] into p slices.  Exponential mode
// halves the remaining interval at every cut, so slice lengths decrease
// geometrically and the last two are equally long.
struct SlicePlan {
  double upper = 0.0;
  int slices = 0;
  SliceMode mode = SliceMode::kExponential;
  std::vector<double> boundaries;  // t_0 = 0 < t_1 < ... < t_p = upper

  static SlicePlan exponential(double upper, int slices);
  static SlicePlan equidistant(double upper, int slices);
  static SlicePlan custom(std::vector<double> boundaries);
  void validate() const;  // throws ValidationError
};

// A chain-with-deterministic-events approximation of a single delay density,
// together with how it was built and how close it landed.
struct IphResult {
  DctmcChain chain;
  double err = 2.0;                  // L1 distance of the absorption law to the target
  int phases_used = 0;
  std::optional<SlicePlan> plan;     // present for sliced constructions
  std::optional<double> shift;       // leading deterministic delay, if any
  std::vector<FitResult> components; // per-component fit reports, in slice order
  std::vector<std::string> notes;
  double seconds = 0.0;
};

// Peel off the support's empty prefix [0, l) with one deterministic delay l
// from a fresh head phase, then fit the remaining n-1 phases to the residual
// density.  Requires support_low > 0 and n >= 2.
IphResult iph_shift(const Fitter& fit, int n, const DensityModel& f);

// Chop the bounded support by the plan and fit each conditional remainder
// with n/p phases; deterministic events hop from each slice's component to
// the next at the slice boundary.  Requires a finite support bound and p | n.
IphResult iph_slice(const Fitter& fit, int n, const DensityModel& f, const SlicePlan& plan);
IphResult iph_slice(const Fitter& fit, int n, int p, const DensityModel& f,
                    SliceMode mode = SliceMode::kExponential);

// Shift composed with slice: the head phase covers [0, l), the remaining
// n-1 phases are sliced over the residual support.  Requires p | (n-1).
IphResult iph_shift_slice(const Fitter& fit, int n, int p, const DensityModel& f,
                          SliceMode mode = SliceMode::kExponential);

// One sweep cell: how well `method` did at a phase budget.  Cells that fail
// their preconditions carry the message in `flag` and a NaN err.
struct SweepRow {
  std::string method;  // plain | shift | slice | shift+slice
  int n = 0;
  int p = 0;           // 0 when the method does not slice
  double err = 2.0;
  double seconds = 0.0;
  std::string flag;
};

// Cells are independent and run on `jobs` worker threads; each cell derives
// its own seed from (opts.seed, cell index), so the table depends on the seed
// but not on the worker count.
std::vector<SweepRow> sweep_error_vs_phases(const DensityModel& f, const std::string& fitter,
                                            const std::vector<int>& ns,
                                            const std::vector<std::string>& methods,
                                            const std::vector<int>& slice_counts = {},
                                            const FitOptions& opts = {}, int jobs = 1);

// How many phases a plain chain needs to emulate a deterministic delay.
// The closed-form column answers "when does the variance shift^2/k drop to
// the target"; the measured column fits a noisy shifted density and reports
// the smallest phase count whose distance beats the threshold.
struct ShiftLawRow {
  double shift = 0.0;
  long long phases_closed_form = 0;
  int phases_measured = 0;       // 0 when the threshold was not reached
  double err_at_measured = 2.0;  // NaN when the threshold was not reached
  std::string flag;
};

std::vector<ShiftLawRow> shift_law_experiment(const std::vector<double>& shifts,
                                              double variance_target, double err_threshold = 1.0,
                                              int phase_cap = 4096, const FitOptions& opts = {});

// The fixed tent-shaped histogram on [0, 1/2] that shift_law_experiment
// shifts around; exposed so tests and the CLI can reuse it.
DensityModel shift_law_noise();

}  // namespace iphkit

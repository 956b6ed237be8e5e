#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iphkit/fit.hpp"
#include "iphkit/gsmp.hpp"
#include "iphkit/iph.hpp"

namespace iphkit {

// How one event of the base model is replaced in the product.
enum class ApproxMethod {
  kPlain,       // phase-type fit of the whole density
  kShift,       // deterministic head delay + fit of the residual
  kSlice,       // deterministic cascade over a bounded support
  kShiftSlice,  // head delay, then a cascade on the residual
  kConstant,    // near-constant density becomes a deterministic event
};

std::string approx_method_name(ApproxMethod m);

// Per-event recipe.  `fitter` names a fitter accepted by make_fitter();
// `phases` is the total transient phase budget of the component; `slices`
// is required (>= 2) exactly for the slicing methods and must stay 0
// otherwise.  kConstant ignores all three.
struct EventPlan {
  ApproxMethod method = ApproxMethod::kPlain;
  std::string fitter = "erlang";
  int phases = 0;
  int slices = 0;
};

// Replacement plan for a whole model.  Every general event must be covered
// exactly once; deterministic events may optionally be covered with the
// plain method, which turns them into moment-matched Erlang components
// (phases in series at rate phases/delay).  Exponential events stay.
struct ApproxPlan {
  std::map<std::string, EventPlan> events;  // keyed by base-model event id
  FitOptions options;                       // forwarded to the fitters
  std::size_t state_cap = 1000000;          // abort threshold for the product
  bool prune = true;  // drop product states unreachable from init
};

// What one covered event was replaced with.  `err` is the absolute density
// difference of the component against the event's density; NaN when the
// metric does not apply (constant rewrites and moment-matched constants).
struct ComponentReport {
  std::string event;
  std::string method;
  int phases = 0;
  double err = 0.0;
  std::optional<IphResult> detail;
};

struct ApproxResult {
  Gsmp model;
  // product state name -> human-readable origin (base state, per-event phase)
  std::map<std::string, std::string> provenance;
  std::vector<ComponentReport> components;
  std::vector<std::string> notes;
};

// Build the phase-enriched product of the model and the per-event
// components.  Product states are (base state, one phase coordinate per
// covered event active there); activating a covered event folds the
// component's initial distribution into the incoming branching; reaching a
// component's absorbing phase fires the event on the base model and redraws
// the component when the event stays active.  Deterministic events inside
// components are carried into the product under fresh identities, with a
// per-run parity suffix so a restart never inherits the previous run's
// clock.  Throws ValidationError on plan mismatches and PreconditionError
// (with a size estimate) when the product would exceed plan.state_cap.
ApproxResult approximate_model(const Gsmp& m, const ApproxPlan& plan);

// Width below which a density counts as a point mass, relative to its
// location: upper - lower <= tol_scale * max(1, midpoint).
inline constexpr double kConstantWidthScale = 1e-5;

// Midpoint of the support if the density is effectively a point mass at a
// positive value (degenerate empirical bins included), otherwise nullopt.
std::optional<double> constant_delay(const DensityModel& density,
                                     double tol_scale = kConstantWidthScale);

// Copy of the model where every general event with an effectively constant
// density becomes a deterministic event with the support midpoint as delay.
// Everything else is left untouched.
Gsmp constant_event_rewrite(const Gsmp& m,
                            double tol_scale = kConstantWidthScale);

}  // namespace iphkit

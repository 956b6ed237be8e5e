#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iphkit/density.hpp"

namespace iphkit {

// Discrete distribution over state indices; entries are (state, probability).
using Branching = std::vector<std::pair<int, double>>;

struct Event {
  enum class Kind { kExponential, kDeterministic, kGeneral };

  std::string id;
  Kind kind = Kind::kExponential;
  double rate = 0.0;                    // exponential only
  double delay = 0.0;                   // deterministic only
  std::optional<DensityModel> density;  // general only
};

// State-transition system with per-state event activation.  Active events run
// concurrent clocks; the one with the least remaining time fires and selects a
// successor from its branching.  Clocks of events that stay active survive a
// transition unchanged; clocks of events that are newly activated (or that
// just fired and remain active) are redrawn; clocks of deactivated events are
// discarded.  Ties are broken by tie_order.
struct Gsmp {
  std::vector<std::string> states;
  std::vector<Event> events;
  std::vector<std::vector<int>> active;          // per state, ascending event indices
  std::map<std::pair<int, int>, Branching> succ; // keyed by (state, event)
  Branching init;
  std::vector<int> tie_order;                    // permutation of event indices, earlier wins

  int state_index(const std::string& name) const;  // -1 if absent
  int event_index(const std::string& id) const;    // -1 if absent
  bool is_active(int state, int event) const;
  const Branching& successors(int state, int event) const;

  // tie-break rank per event; lower fires first on equal remaining times
  std::vector<int> tie_rank() const;
};

enum class ModelClass { kCtmc, kDctmc, kGsmp };

ModelClass classify(const Gsmp& m);
std::string model_class_name(ModelClass c);

struct ValidationReport {
  std::vector<std::string> problems;
  bool ok() const { return problems.empty(); }
  std::string joined() const;
};

// Structural checks: well-formed activation/successor tables, normalized
// distributions, positive parameters, tie_order a permutation.
ValidationReport validate(const Gsmp& m);

// Convenience for engines: throw ValidationError when the report is non-empty.
void require_valid(const Gsmp& m);

}  // namespace iphkit

#include "iphkit/gsmp.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "iphkit/errors.hpp"

namespace iphkit {
namespace {

bool normalized(const Branching& b) {
  double total = 0.0;
  for (const auto& [state, p] : b) {
    if (!(p >= 0.0) || !std::isfinite(p)) return false;
    total += p;
  }
  return std::abs(total - 1.0) <= 1e-12 * std::max<double>(1, b.size());
}

}  // namespace

int Gsmp::state_index(const std::string& name) const {
  auto it = std::find(states.begin(), states.end(), name);
  return it == states.end() ? -1 : static_cast<int>(it - states.begin());
}

int Gsmp::event_index(const std::string& id) const {
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

bool Gsmp::is_active(int state, int event) const {
  const auto& a = active[state];
  return std::binary_search(a.begin(), a.end(), event);
}

const Branching& Gsmp::successors(int state, int event) const {
  auto it = succ.find({state, event});
  if (it == succ.end()) {
    throw ValidationError("no successor distribution for state '" + states[state] +
                          "', event '" + events[event].id + "'");
  }
  return it->second;
}

std::vector<int> Gsmp::tie_rank() const {
  std::vector<int> rank(events.size(), 0);
  for (std::size_t r = 0; r < tie_order.size(); ++r) rank[tie_order[r]] = static_cast<int>(r);
  return rank;
}

ModelClass classify(const Gsmp& m) {
  bool has_det = false;
  for (const auto& e : m.events) {
    if (e.kind == Event::Kind::kGeneral) return ModelClass::kGsmp;
    if (e.kind == Event::Kind::kDeterministic) has_det = true;
  }
  return has_det ? ModelClass::kDctmc : ModelClass::kCtmc;
}

std::string model_class_name(ModelClass c) {
  switch (c) {
    case ModelClass::kCtmc: return "ctmc";
    case ModelClass::kDctmc: return "dctmc";
    default: return "gsmp";
  }
}

std::string ValidationReport::joined() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    if (i) os << "; ";
    os << problems[i];
  }
  return os.str();
}

ValidationReport validate(const Gsmp& m) {
  ValidationReport rep;
  auto complain = [&rep](const std::string& msg) { rep.problems.push_back(msg); };

  if (m.states.empty()) complain("model has no states");
  {
    std::set<std::string> seen;
    for (const auto& s : m.states) {
      if (!seen.insert(s).second) complain("duplicate state name '" + s + "'");
      if (s.empty()) complain("empty state name");
    }
  }
  {
    std::set<std::string> seen;
    for (const auto& e : m.events) {
      if (!seen.insert(e.id).second) complain("duplicate event id '" + e.id + "'");
      if (e.id.empty()) complain("empty event id");
      switch (e.kind) {
        case Event::Kind::kExponential:
          if (!(e.rate > 0.0) || !std::isfinite(e.rate)) {
            complain("event '" + e.id + "': nonpositive rate");
          }
          break;
        case Event::Kind::kDeterministic:
          if (!(e.delay > 0.0) || !std::isfinite(e.delay)) {
            complain("event '" + e.id + "': nonpositive delay");
          }
          break;
        case Event::Kind::kGeneral:
          if (!e.density.has_value()) complain("event '" + e.id + "': missing density");
          break;
      }
    }
  }

  if (m.active.size() != m.states.size()) {
    complain("activation table does not cover every state");
    return rep;  // indices below would be unsafe
  }
  int ns = static_cast<int>(m.states.size());
  int ne = static_cast<int>(m.events.size());
  for (int s = 0; s < ns; ++s) {
    int prev = -1;
    for (int e : m.active[s]) {
      if (e < 0 || e >= ne) {
        complain("state '" + m.states[s] + "': activation refers to unknown event");
        continue;
      }
      if (e <= prev) complain("state '" + m.states[s] + "': activation list not strictly ascending");
      prev = e;
      if (!m.succ.count({s, e})) {
        complain("state '" + m.states[s] + "': event '" + m.events[e].id +
                 "' active but has no successor distribution");
      }
    }
  }
  for (const auto& [key, branching] : m.succ) {
    auto [s, e] = key;
    if (s < 0 || s >= ns || e < 0 || e >= ne) {
      complain("successor table refers to unknown state or event");
      continue;
    }
    if (!m.is_active(s, e)) {
      complain("state '" + m.states[s] + "': successor distribution for inactive event '" +
               m.events[e].id + "'");
    }
    if (branching.empty() || !normalized(branching)) {
      complain("state '" + m.states[s] + "', event '" + m.events[e].id +
               "': unnormalized successor distribution");
    }
    for (const auto& [target, p] : branching) {
      (void)p;
      if (target < 0 || target >= ns) {
        complain("state '" + m.states[s] + "', event '" + m.events[e].id +
                 "': successor refers to unknown state");
      }
    }
  }

  if (m.init.empty() || !normalized(m.init)) complain("unnormalized initial distribution");
  for (const auto& [s, p] : m.init) {
    (void)p;
    if (s < 0 || s >= ns) complain("initial distribution refers to unknown state");
  }

  {
    std::vector<int> order = m.tie_order;
    std::sort(order.begin(), order.end());
    bool perm = static_cast<int>(order.size()) == ne;
    for (int i = 0; perm && i < ne; ++i) perm = order[i] == i;
    if (!perm) complain("tie_order is not a permutation of the events");
  }
  return rep;
}

void require_valid(const Gsmp& m) {
  ValidationReport rep = validate(m);
  if (!rep.ok()) throw ValidationError("invalid model: " + rep.joined());
}

}  // namespace iphkit

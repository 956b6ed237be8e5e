#pragma once

// Model builders shared across the test binaries.  Everything here is a
// plain value factory; tests mutate the returned objects freely.

#include <cmath>
#include <optional>

#include "iphkit/density.hpp"
#include "iphkit/gsmp.hpp"

namespace fixtures {

using iphkit::DensityModel;
using iphkit::Event;
using iphkit::Gsmp;

// Retry protocol: a transmitter sends a message (exponential `send`), then
// waits for an acknowledgement (`ack`, general) under a deterministic
// `timeout`, while an exponential `err` models packet loss.  Timeouts loop
// back to init; an acknowledgement ends in done.
inline Gsmp retry_model(const DensityModel& ack, double timeout = 10.0,
                        double send_rate = 2.0, double err_rate = 0.01) {
  Gsmp m;
  m.states = {"init", "sent", "lost", "done"};
  m.events.push_back({"send", Event::Kind::kExponential, send_rate, 0.0, std::nullopt});
  m.events.push_back({"timeout", Event::Kind::kDeterministic, 0.0, timeout, std::nullopt});
  Event ackev;
  ackev.id = "ack";
  ackev.kind = Event::Kind::kGeneral;
  ackev.density = ack;
  m.events.push_back(ackev);
  m.events.push_back({"err", Event::Kind::kExponential, err_rate, 0.0, std::nullopt});
  m.active = {{0}, {1, 2, 3}, {1}, {}};
  m.succ[{0, 0}] = {{1, 1.0}};
  m.succ[{1, 1}] = {{0, 1.0}};
  m.succ[{1, 2}] = {{3, 1.0}};
  m.succ[{1, 3}] = {{2, 1.0}};
  m.succ[{2, 1}] = {{0, 1.0}};
  m.init = {{0, 1.0}};
  m.tie_order = {0, 1, 2, 3};
  return m;
}

// The acknowledgement density used throughout: a two-phase Erlang body that
// cannot start before 4.05 time units have passed.
inline DensityModel canonical_ack() {
  return DensityModel::shifted(DensityModel::erlang(2, 0.25), 4.05);
}

// Difference race over two transmission start times: station A starts at
// 4.1 + Exp(l1), station B at 5.51 + Exp(l2), and each transmission lasts
// 1.2.  They collide iff the starts are closer than 1.2, i.e. iff
// 0.21 < E1 - E2 < 2.61 where E1, E2 are the exponential parts.  This model
// checks that difference against the two deterministic margins, so its
// collision probability has the closed form
//   l2 / (l1 + l2) * (exp(-0.21 l1) - exp(-2.61 l1)).
inline Gsmp collision_race(double l1 = 1.0, double l2 = 0.8) {
  Gsmp m;
  m.states = {"z0", "z1", "z2", "collision", "safe"};
  m.events.push_back({"first", Event::Kind::kExponential, l1, 0.0, std::nullopt});
  m.events.push_back({"margin-low", Event::Kind::kDeterministic, 0.0, 0.21, std::nullopt});
  m.events.push_back({"second", Event::Kind::kExponential, l2, 0.0, std::nullopt});
  m.events.push_back({"margin-high", Event::Kind::kDeterministic, 0.0, 2.4, std::nullopt});
  m.active = {{0, 1}, {0, 2}, {0, 3}, {}, {}};
  m.succ[{0, 0}] = {{4, 1.0}};  // E1 below the low margin: too far apart
  m.succ[{0, 1}] = {{1, 1.0}};
  m.succ[{1, 0}] = {{4, 1.0}};  // E1 - E2 below the low margin
  m.succ[{1, 2}] = {{2, 1.0}};
  m.succ[{2, 0}] = {{3, 1.0}};  // difference inside the window: collision
  m.succ[{2, 3}] = {{4, 1.0}};
  m.init = {{0, 1.0}};
  m.tie_order = {0, 1, 2, 3};
  return m;
}

// Mechanism-faithful GSMP of the same two stations: general start events
// with shifted-exponential delays and deterministic transmission ends.
inline Gsmp collision_gsmp(double l1 = 1.0, double l2 = 0.8) {
  Gsmp m;
  m.states = {"waiting", "a-on", "b-on", "a-done", "b-done", "collision", "safe"};
  Event sa, sb;
  sa.id = "start-a";
  sa.kind = Event::Kind::kGeneral;
  sa.density = DensityModel::shifted(DensityModel::exponential(l1), 4.1);
  sb.id = "start-b";
  sb.kind = Event::Kind::kGeneral;
  sb.density = DensityModel::shifted(DensityModel::exponential(l2), 5.51);
  m.events.push_back(sa);
  m.events.push_back(sb);
  m.events.push_back({"end-a", Event::Kind::kDeterministic, 0.0, 1.2, std::nullopt});
  m.events.push_back({"end-b", Event::Kind::kDeterministic, 0.0, 1.2, std::nullopt});
  m.active = {{0, 1}, {1, 2}, {0, 3}, {1}, {0}, {}, {}};
  m.succ[{0, 0}] = {{1, 1.0}};  // A starts first
  m.succ[{0, 1}] = {{2, 1.0}};  // B starts first
  m.succ[{1, 1}] = {{5, 1.0}};  // B starts while A transmits
  m.succ[{1, 2}] = {{3, 1.0}};  // A finishes alone
  m.succ[{2, 0}] = {{5, 1.0}};  // A starts while B transmits
  m.succ[{2, 3}] = {{4, 1.0}};  // B finishes alone
  m.succ[{3, 1}] = {{6, 1.0}};  // B transmits after A is done
  m.succ[{4, 0}] = {{6, 1.0}};  // A transmits after B is done
  m.init = {{0, 1.0}};
  m.tie_order = {0, 1, 2, 3};
  return m;
}

// Closed-form collision probability of the two-station race above.
inline double collision_closed_form(double l1 = 1.0, double l2 = 0.8) {
  return l2 / (l1 + l2) * (std::exp(-0.21 * l1) - std::exp(-2.61 * l1));
}

// Two-state chain with a single exponential event: P(reached by t) is
// 1 - exp(-rate * t).
inline Gsmp two_state_chain(double rate) {
  Gsmp m;
  m.states = {"on", "off"};
  m.events.push_back({"hop", Event::Kind::kExponential, rate, 0.0, std::nullopt});
  m.active = {{0}, {}};
  m.succ[{0, 0}] = {{1, 1.0}};
  m.init = {{0, 1.0}};
  m.tie_order = {0};
  return m;
}

}  // namespace fixtures

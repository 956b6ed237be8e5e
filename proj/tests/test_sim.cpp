#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "iphkit/errors.hpp"
#include "iphkit/gsmp.hpp"
#include "iphkit/rng.hpp"
#include "iphkit/sim.hpp"
#include "iphkit/transient.hpp"

using namespace iphkit;

TEST_CASE("scripted run replays the documented trace") {
  Gsmp m = fixtures::retry_model(fixtures::canonical_ack());
  m.init = {{1, 1.0}};  // start in `sent`

  // Entering `sent` draws ack = 12.6 then err = 7.2; the timeout clock is
  // deterministic at 10.  err fires first, the surviving timeout clock shows
  // 2.8 in `lost`, and the timeout then loops back to `init` at t = 10.
  ScriptedStream draws({12.6, 7.2, 50.0});
  auto trace = simulate_trace(m, draws, 12.0);

  REQUIRE(trace.size() == 2);
  CHECK(trace[0].time == 7.2);
  CHECK(m.events[size_t(trace[0].event)].id == "err");
  CHECK(m.states[size_t(trace[0].from)] == "sent");
  CHECK(m.states[size_t(trace[0].to)] == "lost");
  REQUIRE(trace[0].remaining.size() == 1);
  CHECK(trace[0].remaining[0].first == m.event_index("timeout"));
  CHECK(trace[0].remaining[0].second == 2.8);

  CHECK(trace[1].time == 10.0);
  CHECK(m.events[size_t(trace[1].event)].id == "timeout");
  CHECK(m.states[size_t(trace[1].to)] == "init");
  // in `init` the send clock was freshly drawn from the script
  REQUIRE(trace[1].remaining.size() == 1);
  CHECK(trace[1].remaining[0].second == 50.0);
}

TEST_CASE("surviving clocks are not redrawn") {
  // a-on -> collision requires start-b's clock to survive the first firing;
  // with scripted delays start-a = 4.5, start-b = 5.0 (abs), end-a = 1.2 the
  // difference 0.5 < 1.2 forces a collision at t = 5.0.
  Gsmp m = fixtures::collision_gsmp();
  ScriptedStream draws({4.5, 5.0});
  auto trace = simulate_trace(m, draws, 20.0);
  REQUIRE(trace.size() >= 2);
  CHECK(trace[0].time == 4.5);
  CHECK(m.states[size_t(trace[0].to)] == "a-on");
  CHECK(trace[1].time == 5.0);
  CHECK(m.states[size_t(trace[1].to)] == "collision");
  CHECK(draws.remaining() == 0);
}

TEST_CASE("scripted streams refuse to improvise") {
  Gsmp m = fixtures::retry_model(fixtures::canonical_ack());
  ScriptedStream draws({0.5});  // send fires, then `sent` needs two draws
  CHECK_THROWS_AS(simulate_trace(m, draws, 100.0), PreconditionError);
}

TEST_CASE("clock bookkeeping verification accepts a clean model") {
  Gsmp m = fixtures::collision_gsmp();
  SimQuery q;
  q.kind = SimQuery::Kind::kReach;
  q.states = {"collision"};
  SimConfig cfg;
  cfg.seed = 3;
  cfg.runs = 2000;
  cfg.check_clocks = true;
  SimResult r = simulate(m, q, cfg);
  CHECK(r.runs == 2000);
  CHECK(r.censored == 0);
}

TEST_CASE("transient estimate matches the closed form") {
  Gsmp m = fixtures::two_state_chain(0.7);
  SimQuery q;
  q.kind = SimQuery::Kind::kTransient;
  q.t = 1.3;
  q.states = {"off"};
  SimConfig cfg;
  cfg.seed = 12;
  cfg.runs = 100000;
  SimResult r = simulate(m, q, cfg);
  double exact = 1.0 - std::exp(-0.7 * 1.3);
  CHECK(std::abs(r.estimate - exact) <= 3.0 * r.std_error);
  CHECK(r.std_error == doctest::Approx(std::sqrt(exact * (1 - exact) / 100000)).epsilon(0.05));
}

TEST_CASE("reach estimate matches the collision closed form") {
  SimQuery q;
  q.kind = SimQuery::Kind::kReach;
  q.states = {"collision"};
  SimConfig cfg;
  cfg.seed = 4;
  cfg.runs = 40000;
  double exact = fixtures::collision_closed_form();

  SimResult faithful = simulate(fixtures::collision_gsmp(), q, cfg);
  CHECK(std::abs(faithful.estimate - exact) <= 3.0 * faithful.std_error);

  SimResult condensed = simulate(fixtures::collision_race(), q, cfg);
  CHECK(std::abs(condensed.estimate - exact) <= 3.0 * condensed.std_error);
}

TEST_CASE("results are independent of the worker count") {
  Gsmp m = fixtures::retry_model(fixtures::canonical_ack());
  SimQuery q;
  q.kind = SimQuery::Kind::kTransient;
  q.t = 30.0;
  q.states = {"done"};
  SimConfig one;
  one.seed = 99;
  one.runs = 20000;
  one.jobs = 1;
  SimConfig four = one;
  four.jobs = 4;
  SimResult a = simulate(m, q, one);
  SimResult b = simulate(m, q, four);
  CHECK(a.estimate == b.estimate);
  CHECK(a.hits == b.hits);
}

TEST_CASE("histogram rows partition the observed times") {
  Gsmp m = fixtures::retry_model(fixtures::canonical_ack());
  SimQuery q;
  q.kind = SimQuery::Kind::kHistogram;
  q.states = {"done"};
  q.bins = 25;
  q.horizon = 200.0;
  SimConfig cfg;
  cfg.seed = 8;
  cfg.runs = 30000;
  SimResult r = simulate(m, q, cfg);

  REQUIRE_FALSE(r.histogram.empty());
  std::int64_t total = 0;
  double prev_hi = r.histogram.front().lo;
  for (const HistogramRow& row : r.histogram) {
    CHECK(row.lo == prev_hi);
    CHECK(row.hi > row.lo);
    prev_hi = row.hi;
    total += row.count;
  }
  CHECK(total == std::int64_t(r.raw_times.size()));
  CHECK(total + r.censored <= cfg.runs);
  for (double t : r.raw_times) {
    CHECK(t >= r.histogram.front().lo);
    CHECK(t <= r.histogram.back().hi);
  }
}

TEST_CASE("step guard reports censored runs") {
  // strip `done` out of reach: init <-> sent ping-pong via timeout only
  Gsmp m = fixtures::retry_model(fixtures::canonical_ack());
  SimQuery q;
  q.kind = SimQuery::Kind::kReach;
  q.states = {"done"};
  SimConfig cfg;
  cfg.seed = 2;
  cfg.runs = 50;
  cfg.max_steps = 3;  // too few to ever reach `done`
  SimResult r = simulate(m, q, cfg);
  CHECK(r.censored > 0);
}

TEST_CASE("simulation validates its inputs") {
  Gsmp bad = fixtures::retry_model(fixtures::canonical_ack());
  bad.succ[{0, 0}] = {{1, 0.5}};
  SimQuery q;
  q.kind = SimQuery::Kind::kTransient;
  q.t = 1.0;
  q.states = {"done"};
  SimConfig cfg;
  CHECK_THROWS_AS(simulate(bad, q, cfg), ValidationError);

  Gsmp good = fixtures::retry_model(fixtures::canonical_ack());
  SimQuery unknown;
  unknown.kind = SimQuery::Kind::kTransient;
  unknown.t = 1.0;
  unknown.states = {"nowhere"};
  CHECK_THROWS_AS(simulate(good, unknown, cfg), ValidationError);
}

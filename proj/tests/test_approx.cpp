#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>

#include "fixtures.hpp"
#include "iphkit/approximate.hpp"
#include "iphkit/errors.hpp"
#include "iphkit/gsmp.hpp"
#include "iphkit/sim.hpp"
#include "iphkit/transient.hpp"

using namespace iphkit;

namespace {

ApproxPlan retry_head_plan() {
  ApproxPlan plan;
  plan.events["ack"] = {ApproxMethod::kShift, "erlang", 3, 0};
  return plan;
}

}  // namespace

TEST_CASE("head-delay component turns the retry model into a small d-CTMC") {
  Gsmp g = fixtures::retry_model(fixtures::canonical_ack());
  ApproxResult ar = approximate_model(g, retry_head_plan());

  CHECK(classify(ar.model) == ModelClass::kDctmc);
  CHECK(ar.model.states.size() == 6);
  CHECK(validate(ar.model).ok());

  REQUIRE(ar.components.size() == 1);
  CHECK(ar.components[0].event == "ack");
  CHECK(ar.components[0].method == "shift");
  // the acknowledgement density is itself a delayed two-phase law, so a
  // three-phase budget recovers it almost exactly
  CHECK(ar.components[0].err <= 1e-9);
}

TEST_CASE("two-phase components produce the eight-state chain") {
  Gsmp g = fixtures::retry_model(fixtures::canonical_ack());
  ApproxPlan plan;
  plan.events["ack"] = {ApproxMethod::kPlain, "erlang", 2, 0};
  plan.events["timeout"] = {ApproxMethod::kPlain, "erlang", 2, 0};
  ApproxResult ar = approximate_model(g, plan);

  CHECK(classify(ar.model) == ModelClass::kCtmc);
  CHECK(ar.model.states.size() == 8);
  CHECK(validate(ar.model).ok());

  // the deterministic timeout became a moment-matched component: no density
  // to compare against, so its err column does not apply
  bool saw_timeout = false;
  for (const ComponentReport& c : ar.components) {
    if (c.event == "timeout") {
      saw_timeout = true;
      CHECK_FALSE(std::isfinite(c.err));
      CHECK(c.phases == 2);
    }
  }
  CHECK(saw_timeout);
}

TEST_CASE("every product branching row is normalized") {
  Gsmp g = fixtures::retry_model(fixtures::canonical_ack());
  ApproxResult ar = approximate_model(g, retry_head_plan());
  for (const auto& [key, branching] : ar.model.succ) {
    double total = 0.0;
    for (const auto& [to, p] : branching) {
      CHECK(p > 0.0);
      total += p;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("product transient agrees with simulating the source model") {
  Gsmp g = fixtures::retry_model(fixtures::canonical_ack());
  ApproxResult ar = approximate_model(g, retry_head_plan());

  DeltaOptions opts;
  opts.delta = 0.05;
  TransientResult td = dctmc_transient_delta(ar.model, init_vector(ar.model), 100.0, opts);
  double product_p = td.dist[size_t(ar.model.state_index("done"))];

  SimQuery q;
  q.kind = SimQuery::Kind::kTransient;
  q.t = 100.0;
  q.states = {"done"};
  SimConfig cfg;
  cfg.seed = 17;
  cfg.runs = 20000;
  SimResult sr = simulate(g, q, cfg);

  // the component is near-exact, so only engine bias and noise separate them
  CHECK(std::abs(sr.estimate - product_p) <= 3.0 * sr.std_error + 1e-3);
}

TEST_CASE("pruning drops nothing that changes the answer") {
  Gsmp g = fixtures::retry_model(fixtures::canonical_ack());
  ApproxPlan pruned = retry_head_plan();
  ApproxPlan unpruned = retry_head_plan();
  unpruned.prune = false;
  ApproxResult a = approximate_model(g, pruned);
  ApproxResult b = approximate_model(g, unpruned);
  CHECK(a.model.states.size() <= b.model.states.size());

  DeltaOptions opts;
  opts.delta = 0.05;
  double pa = dctmc_transient_delta(a.model, init_vector(a.model), 50.0, opts)
                  .dist[size_t(a.model.state_index("done"))];
  double pb = dctmc_transient_delta(b.model, init_vector(b.model), 50.0, opts)
                  .dist[size_t(b.model.state_index("done"))];
  CHECK(pa == doctest::Approx(pb).epsilon(1e-12));
}

TEST_CASE("plans must cover every general event exactly once") {
  Gsmp g = fixtures::retry_model(fixtures::canonical_ack());
  ApproxPlan empty;
  CHECK_THROWS_AS(approximate_model(g, empty), ValidationError);

  ApproxPlan extra = retry_head_plan();
  extra.events["send"] = {ApproxMethod::kPlain, "erlang", 2, 0};  // already exponential
  CHECK_THROWS_AS(approximate_model(g, extra), ValidationError);

  ApproxPlan unknown = retry_head_plan();
  unknown.events["nope"] = {ApproxMethod::kPlain, "erlang", 2, 0};
  CHECK_THROWS_AS(approximate_model(g, unknown), ValidationError);
}

TEST_CASE("slice counts are accepted only for slicing methods") {
  Gsmp g = fixtures::retry_model(fixtures::canonical_ack());
  ApproxPlan plan;
  plan.events["ack"] = {ApproxMethod::kPlain, "erlang", 4, 3};
  CHECK_THROWS_AS(approximate_model(g, plan), ValidationError);

  ApproxPlan missing;
  missing.events["ack"] = {ApproxMethod::kShiftSlice, "erlang", 7, 0};
  CHECK_THROWS_AS(approximate_model(g, missing), ValidationError);
}

TEST_CASE("state cap failures carry a size estimate") {
  Gsmp g = fixtures::retry_model(fixtures::canonical_ack());
  ApproxPlan plan = retry_head_plan();
  plan.state_cap = 3;
  try {
    approximate_model(g, plan);
    FAIL("expected a PreconditionError");
  } catch (const PreconditionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("cap") != std::string::npos);
  }
}

TEST_CASE("near-constant densities become deterministic events") {
  auto spike = DensityModel::uniform(0.999999, 1.000001);
  CHECK(constant_delay(spike).has_value());
  CHECK(*constant_delay(spike) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_FALSE(constant_delay(DensityModel::uniform(0.0, 2.0)).has_value());
  CHECK_FALSE(constant_delay(DensityModel::exponential(1.0)).has_value());

  Gsmp g = fixtures::retry_model(spike);
  Gsmp rewritten = constant_event_rewrite(g);
  int ack = rewritten.event_index("ack");
  REQUIRE(ack >= 0);
  CHECK(rewritten.events[size_t(ack)].kind == Event::Kind::kDeterministic);
  CHECK(rewritten.events[size_t(ack)].delay == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(classify(rewritten) == ModelClass::kDctmc);
}

TEST_CASE("constant component plans rewrite in place") {
  auto spike = DensityModel::uniform(0.999999, 1.000001);
  Gsmp g = fixtures::retry_model(spike);
  ApproxPlan plan;
  plan.events["ack"] = {ApproxMethod::kConstant, "erlang", 0, 0};
  ApproxResult ar = approximate_model(g, plan);
  CHECK(classify(ar.model) == ModelClass::kDctmc);
  CHECK(ar.model.states.size() == g.states.size());
  REQUIRE(ar.components.size() == 1);
  CHECK_FALSE(std::isfinite(ar.components[0].err));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "iphkit/chain.hpp"
#include "iphkit/errors.hpp"
#include "iphkit/fit.hpp"
#include "iphkit/gsmp.hpp"
#include "iphkit/iph.hpp"
#include "iphkit/sim.hpp"

using namespace iphkit;

TEST_CASE("validate accepts the retry model") {
  Gsmp m = fixtures::retry_model(fixtures::canonical_ack());
  ValidationReport r = validate(m);
  CHECK(r.ok());
  CHECK_NOTHROW(require_valid(m));
}

TEST_CASE("validate reports unnormalized branchings") {
  Gsmp m = fixtures::retry_model(fixtures::canonical_ack());
  m.succ[{0, 0}] = {{1, 0.9}};
  ValidationReport r = validate(m);
  REQUIRE_FALSE(r.ok());
  bool mentions = false;
  for (const auto& p : r.problems)
    if (p.find("sum") != std::string::npos || p.find("normal") != std::string::npos)
      mentions = true;
  CHECK(mentions);
  CHECK_THROWS_AS(require_valid(m), ValidationError);
}

TEST_CASE("validate rejects nonpositive delays and missing rows") {
  Gsmp m = fixtures::retry_model(fixtures::canonical_ack());
  m.events[1].delay = 0.0;
  CHECK_FALSE(validate(m).ok());

  Gsmp m2 = fixtures::retry_model(fixtures::canonical_ack());
  m2.succ.erase({1, 2});  // sent + ack now has no successors
  CHECK_FALSE(validate(m2).ok());

  Gsmp m3 = fixtures::retry_model(fixtures::canonical_ack());
  m3.tie_order = {0, 0, 2, 3};
  CHECK_FALSE(validate(m3).ok());
}

TEST_CASE("classify distinguishes the three model classes") {
  CHECK(classify(fixtures::retry_model(fixtures::canonical_ack())) == ModelClass::kGsmp);
  CHECK(classify(fixtures::collision_gsmp()) == ModelClass::kGsmp);
  CHECK(classify(fixtures::collision_race()) == ModelClass::kDctmc);
  CHECK(classify(fixtures::two_state_chain(1.0)) == ModelClass::kCtmc);
  CHECK(model_class_name(ModelClass::kDctmc) == "dctmc");
}

TEST_CASE("classification is invariant under renaming") {
  Gsmp m = fixtures::collision_race();
  for (auto& s : m.states) s = "node-" + s;
  for (auto& e : m.events) e.id = "ev-" + e.id;
  CHECK(classify(m) == ModelClass::kDctmc);
  CHECK(validate(m).ok());
}

TEST_CASE("absorption law of a single exponential phase") {
  PhChain c;
  c.phases = 1;
  c.init = {{1, 1.0}};
  c.exits = {{2.0, {{0, 1.0}}}};
  CHECK(reach_time_density(c, 0.0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(reach_time_density(c, 1.0) == doctest::Approx(2.0 * std::exp(-2.0)).epsilon(1e-10));
}

TEST_CASE("absorption law matches the Erlang closed form on a grid") {
  const int k = 4;
  const double rate = 2.0;
  PhChain c = erlang_chain(k, k, rate);
  double peak_t = (k - 1) / rate;  // mode of the Erlang density
  CHECK(reach_time_density(c, peak_t) >= reach_time_density(c, peak_t - 0.3));
  CHECK(reach_time_density(c, peak_t) >= reach_time_density(c, peak_t + 0.3));

  auto closed = DensityModel::erlang(k, rate);
  for (int i = 0; i <= 100; ++i) {
    double t = 8.0 * i / 100.0;
    CHECK(reach_time_density(c, t) == doctest::Approx(closed.pdf(t)).epsilon(1e-8));
  }
}

TEST_CASE("absorption law integrates to one") {
  PhChain c = hyper_erlang_chain({{0.3, 2, 1.0}, {0.7, 1, 0.4}});
  AbsorptionCurve curve(c);
  double hi = curve.upper_quantile(1e-10);
  // trapezoid on a fine grid is enough at this tolerance
  const int n = 20000;
  double h = hi / n;
  double acc = 0.5 * (curve.density(0.0) + curve.density(hi));
  for (int i = 1; i < n; ++i) acc += curve.density(i * h);
  CHECK(acc * h == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("delayed chain law is zero before the head delay and exact after it") {
  auto target = DensityModel::shifted(DensityModel::exponential(1.0), 4.06);
  IphResult r = iph_shift(make_fitter("erlang"), 2, target);
  REQUIRE(r.err <= 1e-3);

  for (double t : {0.0, 1.0, 4.0, 4.0599}) CHECK(dctmc_reach_time_density(r.chain, t) == 0.0);
  for (double t : {4.07, 5.0, 8.0}) {
    CHECK(dctmc_reach_time_density(r.chain, t) ==
          doctest::Approx(std::exp(-(t - 4.06))).epsilon(1e-9));
  }

  AbsorptionCurve curve(r.chain);
  CHECK(curve.cdf(4.06 - 1e-9) == doctest::Approx(0.0));
  CHECK(curve.cdf(1e9) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("chain evaluation rejects branching deterministic topologies") {
  // Two deterministic events racing from the same phase have no segment
  // structure; the evaluator must refuse rather than approximate.
  DctmcChain c;
  c.ctmc.phases = 2;
  c.ctmc.init = {{2, 1.0}};
  c.ctmc.exits.resize(2);
  c.ctmc.exits[0] = {1.0, {{0, 1.0}}};
  c.ctmc.exits[1] = {0.5, {{1, 1.0}}};
  ChainDetEvent a{"hop-a", 1.0, {2}, {{2, {{1, 1.0}}}}};
  ChainDetEvent b{"hop-b", 2.0, {1, 2}, {{1, {{0, 1.0}}}, {2, {{0, 1.0}}}}};
  c.det = {a, b};
  CHECK_NOTHROW(c.validate());
  try {
    dctmc_reach_time_density(c, 1.0);
    FAIL("expected a PreconditionError");
  } catch (const PreconditionError& e) {
    CHECK(std::string(e.what()).find("unsupported topology") != std::string::npos);
  }
}

TEST_CASE("chains round-trip through the model representation") {
  auto target = DensityModel::uniform(0.0, 2.0);
  IphResult r = iph_slice(make_fitter("erlang"), 6, 3, target);
  Gsmp m = chain_to_gsmp(r.chain);
  CHECK(validate(m).ok());
  CHECK(classify(m) == ModelClass::kDctmc);

  DctmcChain back = chain_from_gsmp(m);
  CHECK(back.ctmc.phases == r.chain.ctmc.phases);
  CHECK(back.ctmc.init == r.chain.ctmc.init);
  REQUIRE(back.det.size() == r.chain.det.size());
  for (std::size_t i = 0; i < back.det.size(); ++i) {
    CHECK(back.det[i].delay == r.chain.det[i].delay);
    CHECK(back.det[i].active == r.chain.det[i].active);
  }
  for (double t : {0.3, 0.9, 1.2, 1.8})
    CHECK(dctmc_reach_time_density(back, t) ==
          doctest::Approx(dctmc_reach_time_density(r.chain, t)).epsilon(1e-12));
}

TEST_CASE("chain_from_gsmp rejects models that are not absorbing chains") {
  CHECK_THROWS_AS(chain_from_gsmp(fixtures::retry_model(fixtures::canonical_ack())),
                  ValidationError);
}

TEST_CASE("absorption curve matches a simulated histogram") {
  auto target = DensityModel::uniform(0.0, 2.0);
  IphResult r = iph_slice(make_fitter("erlang"), 6, 3, target);
  AbsorptionCurve curve(r.chain);
  Gsmp m = chain_to_gsmp(r.chain);

  SimQuery q;
  q.kind = SimQuery::Kind::kHistogram;
  q.bins = 12;
  q.horizon = 50.0;
  SimConfig cfg;
  cfg.seed = 11;
  cfg.runs = 1000000;
  SimResult sr = simulate(m, q, cfg);
  REQUIRE(sr.raw_times.size() == std::size_t(cfg.runs));

  // 12 bins over the body plus one catch-all tail bin.
  const double width = 0.2;
  std::vector<std::int64_t> counts(13, 0);
  for (double t : sr.raw_times) ++counts[std::min<std::size_t>(12, std::size_t(t / width))];
  for (int b = 0; b <= 12; ++b) {
    double lo = b * width;
    double expected = (b == 12 ? 1.0 : curve.cdf(lo + width)) - curve.cdf(lo);
    double observed = double(counts[size_t(b)]) / double(cfg.runs);
    double se = std::sqrt(std::max(expected * (1.0 - expected), 1e-12) / double(cfg.runs));
    CAPTURE(b);
    CHECK(std::abs(observed - expected) <= 3.0 * se + 1e-9);
  }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "iphkit/density.hpp"
#include "iphkit/errors.hpp"
#include "iphkit/fit.hpp"

using namespace iphkit;

namespace {

// Midpoint-rule oracle for the L1 distance between two densities, dense
// enough to pin the adaptive quadrature down to ~1e-4.
double l1_oracle(const DensityModel& a, const DensityModel& b) {
  double hi = std::max(a.upper_quantile(1e-10), b.upper_quantile(1e-10));
  const int n = 400000;
  double h = hi / n;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = (i + 0.5) * h;
    acc += std::abs(a.pdf(x) - b.pdf(x));
  }
  // everything beyond hi is below the 1e-10 tails on both sides
  return acc * h;
}

}  // namespace

TEST_CASE("err_metric agrees with a dense-grid oracle") {
  auto uni = DensityModel::uniform(0.0, 2.0);
  auto er = DensityModel::erlang(2, 1.68579);
  CHECK(err_metric(uni, er) == doctest::Approx(l1_oracle(uni, er)).epsilon(1e-4));

  auto ex1 = DensityModel::exponential(1.0);
  auto ex2 = DensityModel::exponential(2.0);
  CHECK(err_metric(ex1, ex2) == doctest::Approx(l1_oracle(ex1, ex2)).epsilon(1e-4));
}

TEST_CASE("err_metric of identical densities is zero") {
  auto er = DensityModel::erlang(3, 0.7);
  CHECK(err_metric(er, er) <= 1e-9);
  auto hy = DensityModel::hyper_erlang({{0.4, 1, 1.0}, {0.6, 2, 2.0}});
  CHECK(err_metric(hy, hy) <= 1e-9);
}

TEST_CASE("err_metric approaches 2 for disjoint supports") {
  auto a = DensityModel::uniform(0.0, 1.0);
  auto b = DensityModel::shifted(DensityModel::uniform(0.0, 1.0), 100.0);
  double e = err_metric(a, b);
  CHECK(e == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(e <= 2.0);
}

TEST_CASE("err_metric is invariant under a common time rescaling") {
  auto a1 = DensityModel::uniform(0.0, 2.0);
  auto b1 = DensityModel::erlang(2, 1.7);
  auto a2 = DensityModel::uniform(0.0, 6.0);
  auto b2 = DensityModel::erlang(2, 1.7 / 3.0);
  CHECK(err_metric(a1, b1) == doctest::Approx(err_metric(a2, b2)).epsilon(1e-6));
}

TEST_CASE("err_metric accepts chains and raw functions") {
  auto target = DensityModel::erlang(2, 1.5);
  PhChain chain = erlang_chain(2, 2, 1.5);
  CHECK(err_metric(target, chain) <= 1e-7);

  auto fn = [&](double x) { return target.pdf(x); };
  CHECK(err_metric(target, fn, target.support_high()) <= 1e-6);
}

TEST_CASE("single-family fit recovers an exponential exactly") {
  auto ex = DensityModel::exponential(3.0);
  FitResult r = fit_erlang(ex, 1);
  CHECK(r.err <= 1e-7);
  CHECK(r.phases == 1);
  CHECK(r.chain.exits[0].rate == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(r.family == "erlang");
  REQUIRE(r.density.has_value());
  CHECK(r.density->mean() == doctest::Approx(ex.mean()).epsilon(1e-6));
}

TEST_CASE("fit never does worse than the mean-matched seed") {
  auto uni = DensityModel::uniform(0.0, 2.0);
  for (int n : {1, 2, 4}) {
    FitResult r = fit_erlang(uni, n);
    // one Erlang(n) with the target mean is always among the candidates
    auto seed = DensityModel::erlang(n, n / uni.mean());
    CHECK(r.err <= err_metric(uni, seed) + 1e-9);
  }
}

TEST_CASE("fit error is nonincreasing in the phase budget") {
  auto uni = DensityModel::uniform(0.0, 2.0);
  double prev = 2.0;
  for (int n : {1, 2, 4, 8}) {
    FitResult r = fit_erlang(uni, n);
    CHECK(r.err <= prev + 1e-9);
    CHECK(r.phases <= n);
    prev = r.err;
  }
}

TEST_CASE("mixture fit with one branch matches the single family") {
  auto uni = DensityModel::uniform(0.0, 2.0);
  FitOptions opts;
  opts.em_samples = 20000;
  FitResult single = fit_erlang(uni, 3, opts);
  FitResult mixed = fit_hyper_erlang(uni, 3, 1, opts);
  CHECK(mixed.err <= single.err + 1e-9);
}

TEST_CASE("mixture fit recovers a two-branch target") {
  auto target = DensityModel::hyper_erlang({{0.5, 1, 2.0}, {0.5, 3, 0.5}});
  FitOptions opts;
  opts.em_samples = 50000;
  FitResult r = fit_hyper_erlang(target, 4, 2, opts);
  CHECK(r.err <= 0.05);
  CHECK(r.family == "hyper-erlang");
  CHECK(r.phases <= 4);
}

TEST_CASE("fits are deterministic for a fixed seed") {
  auto uni = DensityModel::uniform(0.0, 2.0);
  FitOptions opts;
  opts.em_samples = 10000;
  opts.seed = 9;
  FitResult a = fit_hyper_erlang(uni, 4, 2, opts);
  FitResult b = fit_hyper_erlang(uni, 4, 2, opts);
  CHECK(a.err == b.err);
  CHECK(a.detail == b.detail);
}

TEST_CASE("make_fitter resolves names and rejects unknown ones") {
  auto uni = DensityModel::uniform(0.0, 2.0);
  Fitter erl = make_fitter("erlang");
  CHECK(erl(uni, 2).family == "erlang");
  Fitter hyp = make_fitter("hyper-erlang");
  CHECK(hyp(uni, 2).family == "hyper-erlang");
  CHECK_THROWS_AS(make_fitter("spline"), ValidationError);
}

TEST_CASE("fitters reject a nonpositive phase budget") {
  auto uni = DensityModel::uniform(0.0, 2.0);
  CHECK_THROWS_AS(fit_erlang(uni, 0), ValidationError);
  CHECK_THROWS_AS(fit_hyper_erlang(uni, -1, 2), ValidationError);
}

TEST_CASE("chain builders produce the laws they claim") {
  PhChain e = erlang_chain(3, 3, 2.0);
  CHECK(e.phases == 3);
  CHECK(err_metric(DensityModel::erlang(3, 2.0), e) <= 1e-7);

  // entry below the top of the chain shortens the law
  PhChain partial = erlang_chain(3, 2, 2.0);
  CHECK(err_metric(DensityModel::erlang(2, 2.0), partial) <= 1e-7);

  PhChain h = hyper_erlang_chain({{0.3, 2, 1.0}, {0.7, 1, 0.4}});
  CHECK(h.phases == 3);
  CHECK(err_metric(DensityModel::hyper_erlang({{0.3, 2, 1.0}, {0.7, 1, 0.4}}), h) <= 1e-7);
}

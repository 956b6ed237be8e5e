#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "iphkit/chain.hpp"
#include "iphkit/errors.hpp"
#include "iphkit/fit.hpp"
#include "iphkit/gsmp.hpp"
#include "iphkit/io.hpp"
#include "iphkit/iph.hpp"

using namespace iphkit;

TEST_CASE("doubles print in shortest round-trip form") {
  CHECK(io::format_double(0.05) == "0.05");
  CHECK(io::format_double(1.0) == "1");
  CHECK(io::format_double(4.05) == "4.05");
  double third = 1.0 / 3.0;
  CHECK(std::stod(io::format_double(third)) == third);
}

TEST_CASE("density documents round-trip byte-identically") {
  std::vector<DensityModel> kinds = {
      DensityModel::exponential(2.0),
      DensityModel::erlang(2, 0.25),
      DensityModel::uniform(0.0, 2.0),
      fixtures::canonical_ack(),
      DensityModel::hyper_erlang({{0.3, 2, 1.0}, {0.7, 1, 0.4}}),
      DensityModel::empirical({0.0, 0.5, 2.0}, {0.25, 0.75}),
  };
  for (const DensityModel& d : kinds) {
    CAPTURE(d.describe());
    std::string text = io::density_to_text(d);
    CHECK(text.back() == '\n');
    DensityModel back = io::density_from_text(text);
    CHECK(io::density_to_text(back) == text);
    CHECK(back.mean() == doctest::Approx(d.mean()).epsilon(1e-12));
    CHECK(back.support_low() == d.support_low());
  }
}

TEST_CASE("model documents round-trip byte-identically") {
  for (const Gsmp& m : {fixtures::retry_model(fixtures::canonical_ack()),
                        fixtures::collision_race(), fixtures::collision_gsmp()}) {
    std::string text = io::model_to_text(m);
    Gsmp back = io::model_from_text(text);
    CHECK(io::model_to_text(back) == text);
    CHECK(back.states == m.states);
    CHECK(back.succ == m.succ);
    CHECK(back.init == m.init);
    CHECK(back.tie_order == m.tie_order);
  }
}

TEST_CASE("chains travel as ordinary model documents") {
  IphResult r = iph_slice(make_fitter("erlang"), 6, 3, DensityModel::uniform(0.0, 2.0));
  Gsmp m = chain_to_gsmp(r.chain);
  Gsmp back = io::model_from_text(io::model_to_text(m));
  DctmcChain chain = chain_from_gsmp(back);
  for (double t : {0.4, 1.1, 1.7})
    CHECK(dctmc_reach_time_density(chain, t) ==
          doctest::Approx(dctmc_reach_time_density(r.chain, t)).epsilon(1e-12));
}

TEST_CASE("parsers reject unknown and missing fields with a path") {
  std::string ok = R"({"kind": "exponential", "rate": 2})";
  CHECK_NOTHROW(io::density_from_text(ok));

  try {
    io::density_from_text(R"({"kind": "exponential", "rate": 2, "scale": 1})");
    FAIL("expected a ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("scale") != std::string::npos);
  }

  CHECK_THROWS_AS(io::density_from_text(R"({"kind": "exponential"})"), ValidationError);
  CHECK_THROWS_AS(io::density_from_text(R"({"kind": "sine"})"), ValidationError);
  CHECK_THROWS_AS(io::density_from_text("not json"), ValidationError);
  CHECK_THROWS_AS(io::density_from_text(R"({"kind": "erlang", "phases": 2.5, "rate": 1})"),
                  ValidationError);
}

TEST_CASE("model parser validates structure") {
  Gsmp m = fixtures::collision_race();
  std::string text = io::model_to_text(m);

  std::string broken = text;
  broken.replace(broken.find("\"z1\""), 4, "\"zX\"");  // first occurrence: states list
  CHECK_THROWS_AS(io::model_from_text(broken), ValidationError);

  CHECK_THROWS_AS(io::model_from_text(R"({"states": ["a"]})"), ValidationError);
  CHECK_THROWS_AS(io::model_from_text("[]"), ValidationError);
}

TEST_CASE("deterministic delays accept rational strings") {
  std::string text = R"({
  "states": ["a", "b"],
  "events": [{"id": "tick", "kind": "deterministic", "delay": "21/100"}],
  "active": {"a": ["tick"]},
  "succ": [{"state": "a", "event": "tick", "to": [{"state": "b", "prob": 1}]}],
  "init": [{"state": "a", "prob": 1}]
})";
  Gsmp m = io::model_from_text(text);
  CHECK(m.events[0].delay == 0.21);

  std::string six_fifths = text;
  six_fifths.replace(six_fifths.find("21/100"), 6, "12/5");
  CHECK(io::model_from_text(six_fifths).events[0].delay == 2.4);

  std::string bad = text;
  bad.replace(bad.find("21/100"), 6, "21/");
  CHECK_THROWS_AS(io::model_from_text(bad), ValidationError);

  std::string zero_den = text;
  zero_den.replace(zero_den.find("21/100"), 6, "1/0");
  CHECK_THROWS_AS(io::model_from_text(zero_den), ValidationError);
}

TEST_CASE("sample parser reads plain numbers and ping transcripts") {
  std::size_t skipped = 0;
  auto plain = io::parse_samples("1.5\n2.25\n\n# comment\n3\n", "t", &skipped);
  CHECK(plain == std::vector<double>{1.5, 2.25, 3.0});
  CHECK(skipped == 0);  // blank lines and comments are not "skipped lines"

  std::string ping =
      "PING host (10.0.0.1) 56(84) bytes of data.\n"
      "64 bytes from 10.0.0.1: icmp_seq=1 ttl=64 time=4.21 ms\n"
      "64 bytes from 10.0.0.1: icmp_seq=2 ttl=64 time=5.03 ms\n"
      "64 bytes from 10.0.0.1: icmp_seq=3 ttl=64 time=12.6 ms\n"
      "--- host ping statistics ---\n"
      "3 packets transmitted, 3 received, 0% packet loss\n";
  auto times = io::parse_samples(ping, "t", &skipped);
  CHECK(times == std::vector<double>{4.21, 5.03, 12.6});
  CHECK(skipped == 3);

  try {
    io::parse_samples("alpha\nbeta\n", "t");
    FAIL("expected a ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("alpha") != std::string::npos);
  }
}

TEST_CASE("sample statistics use the population form") {
  auto s = io::sample_stats({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0});
  CHECK(s.count == 8);
  CHECK(s.mean == doctest::Approx(5.0));
  CHECK(s.stddev == doctest::Approx(2.0));
  CHECK(s.min == 2.0);
  CHECK(s.max == 9.0);

  auto one = io::sample_stats({3.5});
  CHECK(one.count == 1);
  CHECK(one.stddev == 0.0);
}

TEST_CASE("reports are stable unless timings are requested") {
  FitResult r = fit_erlang(DensityModel::exponential(3.0), 1);
  r.seconds = 1.25;
  std::string a = io::fit_report(r);
  CHECK(a == io::fit_report(r));
  CHECK(a.find("\"seconds\": 0") != std::string::npos);
  CHECK(a.find("1.25") == std::string::npos);
  CHECK(io::fit_report(r, true).find("1.25") != std::string::npos);
}

TEST_CASE("table writers emit the documented columns") {
  std::vector<SweepRow> rows = {{"plain", 4, 0, 0.42, 1.5, ""},
                                {"slice", 4, 2, 0.21, 2.5, ""}};
  std::string csv = io::sweep_csv(rows);
  CHECK(csv.find("method,n,p,err,seconds,flag\n") == 0);
  CHECK(csv.find("plain,4,0,0.42,0,\n") != std::string::npos);
  CHECK(io::sweep_csv(rows, true).find("plain,4,0,0.42,1.5,\n") != std::string::npos);

  std::vector<ShiftLawRow> law = {{1.0, 100, 33, 0.59, ""}};
  std::string law_csv = io::shift_law_csv(law);
  CHECK(law_csv.find("shift,phases_closed_form,phases_measured,err,flag\n") == 0);
  CHECK(law_csv.find("1,100,33,0.59,\n") != std::string::npos);

  std::vector<HistogramRow> hist = {{0.0, 0.5, 12}, {0.5, 1.0, 30}};
  std::string hist_csv = io::histogram_csv(hist);
  CHECK(hist_csv.find("low,high,count\n") == 0);
  CHECK(hist_csv.find("0,0.5,12\n") != std::string::npos);

  std::vector<io::ComparisonRow> cmp = {{"delta", 6, 0.99146, 0.04, ""},
                                        {"simulation", 0, 0.99148, 3.8, "seed 7"}};
  std::string cmp_csv = io::comparison_csv(cmp);
  CHECK(cmp_csv.find("engine,phases,result,seconds,note\n") == 0);
  CHECK(cmp_csv.find("delta,6,0.99146,0,\n") != std::string::npos);
  CHECK(cmp_csv.find("simulation,0,0.99148,0,seed 7\n") != std::string::npos);
}

TEST_CASE("csv cells are sanitized") {
  std::vector<io::ComparisonRow> rows = {{"engine,with commas", 0, 0.5, 0.0, "note\nnewline"}};
  std::string csv = io::comparison_csv(rows);
  CHECK(csv.find("engine;with commas") != std::string::npos);
  CHECK(csv.find("note newline") != std::string::npos);
}

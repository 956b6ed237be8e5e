#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "iphkit/chain.hpp"
#include "iphkit/cli.hpp"
#include "iphkit/gsmp.hpp"
#include "iphkit/io.hpp"

using namespace iphkit;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"iphkit"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  int code = run_cli(int(argv.size()), argv.data());
  std::cout.rdbuf(old);
  return {code, captured.str()};
}

// Field `col` of data row `row` (0-based, header excluded) of a CSV document.
std::string csv_field(const std::string& text, int row, int col) {
  std::istringstream in(text);
  std::string line;
  for (int r = -1; std::getline(in, line); ++r) {
    if (r != row) continue;
    std::istringstream cells(line);
    std::string cell;
    for (int c = 0; std::getline(cells, cell, ','); ++c)
      if (c == col) return cell;
    break;
  }
  return "";
}

// Fresh scratch directory per binary run; removed at exit.
struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() /
          ("iphkit-cli-test-" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
} scratch;

}  // namespace

TEST_CASE("help and argument errors use the right exit codes") {
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"frobnicate"}).code != 0);
  CHECK(run({"fit"}).code != 0);  // missing required options
}

TEST_CASE("ingest summarizes samples and writes a density file") {
  std::string log = scratch.path("rtt.log");
  io::write_file(log,
                 "PING host (10.0.0.1): 56 data bytes\n"
                 "64 bytes: icmp_seq=1 ttl=64 time=4.5 ms\n"
                 "64 bytes: icmp_seq=2 ttl=64 time=5.5 ms\n"
                 "64 bytes: icmp_seq=3 ttl=64 time=6.0 ms\n"
                 "64 bytes: icmp_seq=4 ttl=64 time=4.0 ms\n"
                 "round-trip stats follow in prose\n");
  std::string out = scratch.path("rtt-density.json");
  CliRun r = run({"ingest", log, "--bins", "4", "--out", out});
  CHECK(r.code == 0);
  CHECK(r.out.find("count: 4\n") != std::string::npos);
  CHECK(r.out.find("mean: 5\n") != std::string::npos);
  CHECK(r.out.find("min: 4\n") != std::string::npos);
  CHECK(r.out.find("skipped lines: 2\n") != std::string::npos);

  DensityModel d = io::load_density(out);
  CHECK(d.support_low() == doctest::Approx(4.0));
  CHECK(d.support_high() == doctest::Approx(6.0));
}

TEST_CASE("ingest fails cleanly when nothing parses") {
  std::string log = scratch.path("empty.log");
  io::write_file(log, "no numbers here\n");
  CHECK(run({"ingest", log, "--out", scratch.path("x.json")}).code == 1);
  CHECK(run({"ingest", scratch.path("missing.log"), "--out",
             scratch.path("x.json")}).code == 1);
}

TEST_CASE("fit writes a chain model and reports the distance") {
  std::string dens = scratch.path("exp.json");
  io::save_density(dens, DensityModel::exponential(3.0));
  std::string out = scratch.path("fit-chain.json");
  CliRun r = run({"fit", "--density", dens, "--fitter", "erlang", "--phases", "1",
                  "--out", out});
  CHECK(r.code == 0);
  CHECK(r.out.find("\"family\": \"erlang\"") != std::string::npos);
  CHECK(r.out.find("\"err\"") != std::string::npos);

  Gsmp chain_model = io::load_model(out);
  CHECK(classify(chain_model) == ModelClass::kCtmc);
  DctmcChain chain = chain_from_gsmp(chain_model);
  CHECK(chain.ctmc.phases == 1);
}

TEST_CASE("interval construction rejects an indivisible budget with exit 2") {
  std::string dens = scratch.path("uni.json");
  io::save_density(dens, DensityModel::uniform(0.0, 2.0));
  CliRun r = run({"iph", "--density", dens, "--method", "slice", "--phases", "31",
                  "--slices", "3"});
  CHECK(r.code == 2);

  CliRun ok = run({"iph", "--density", dens, "--method", "slice", "--phases", "6",
                   "--slices", "3", "--out", scratch.path("sliced.json")});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("\"method\": \"slice\"") != std::string::npos);
  Gsmp m = io::load_model(scratch.path("sliced.json"));
  CHECK(classify(m) == ModelClass::kDctmc);
}

TEST_CASE("validate reports the model class") {
  std::string model = scratch.path("race.json");
  io::save_model(model, fixtures::collision_race());
  CliRun r = run({"validate", model});
  CHECK(r.code == 0);
  CHECK(r.out.find("pass") == 0);
  CHECK(r.out.find("class: dctmc") != std::string::npos);

  Gsmp broken = fixtures::collision_race();
  broken.succ[{0, 0}] = {{4, 0.5}};
  std::string bad = scratch.path("bad.json");
  io::save_model(bad, broken);
  CliRun rb = run({"validate", bad});
  CHECK(rb.code == 1);
  CHECK(rb.out.find("fail") == 0);
}

TEST_CASE("approximate resolves paths relative to the job file") {
  io::save_model(scratch.path("retry.json"),
                 fixtures::retry_model(fixtures::canonical_ack()));
  io::write_file(scratch.path("approx-job.json"),
                 R"({
  "model": "retry.json",
  "events": {
    "ack": {"method": "shift", "fitter": "erlang", "phases": 3}
  }
})");
  std::string out = scratch.path("product.json");
  CliRun r = run({"approximate", scratch.path("approx-job.json"), "--out", out});
  CHECK(r.code == 0);
  CHECK(r.out.find("\"states\": 6") != std::string::npos);
  CHECK(r.out.find("\"class\": \"dctmc\"") != std::string::npos);
  Gsmp product = io::load_model(out);
  CHECK(classify(product) == ModelClass::kDctmc);
  CHECK(product.states.size() == 6);
}

TEST_CASE("analyze compares engines and stays byte-identical across reruns") {
  io::save_model(scratch.path("race2.json"), fixtures::collision_race());
  io::write_file(scratch.path("analyze-job.json"),
                 R"({
  "model": "race2.json",
  "query": {"type": "reach", "goal": ["collision"]},
  "engines": [{"engine": "subordinated"}]
})");
  std::string out = scratch.path("analysis.csv");
  CliRun a = run({"analyze", scratch.path("analyze-job.json"), "--out", out});
  CHECK(a.code == 0);
  CHECK(a.out.find("engine,phases,result,seconds,note") == 0);
  CHECK(csv_field(a.out, 0, 0) == "subordinated");
  double result = std::strtod(csv_field(a.out, 0, 2).c_str(), nullptr);
  CHECK(result == doctest::Approx(fixtures::collision_closed_form()).epsilon(1e-9));

  std::string first = io::read_file(out);
  CliRun b = run({"analyze", scratch.path("analyze-job.json"), "--out", out});
  CHECK(b.code == 0);
  CHECK(io::read_file(out) == first);
}

TEST_CASE("simulate honors the seed and reruns byte-identically") {
  io::save_model(scratch.path("race3.json"), fixtures::collision_race());
  io::write_file(scratch.path("sim-job.json"),
                 R"({
  "model": "race3.json",
  "query": {"type": "reach", "states": ["collision"]},
  "runs": 5000
})");
  CliRun a = run({"simulate", scratch.path("sim-job.json"), "--seed", "4"});
  CliRun b = run({"simulate", scratch.path("sim-job.json"), "--seed", "4"});
  CliRun c = run({"simulate", scratch.path("sim-job.json"), "--seed", "5"});
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out != c.out);
  CHECK(a.out.find("\"estimate\"") != std::string::npos);
}

TEST_CASE("sweep emits one row per grid cell") {
  io::save_density(scratch.path("uni2.json"), DensityModel::uniform(0.0, 2.0));
  io::write_file(scratch.path("sweep-job.json"),
                 R"({
  "type": "error-vs-phases",
  "density": "uni2.json",
  "fitter": "erlang",
  "ns": [4, 8],
  "methods": ["plain", "slice"],
  "slices": [2]
})");
  CliRun a = run({"sweep", scratch.path("sweep-job.json"), "--seed", "3"});
  CHECK(a.code == 0);
  CHECK(a.out.find("method,n,p,err,seconds,flag") == 0);
  // header + 2 plain rows + 2 slice rows
  CHECK(std::count(a.out.begin(), a.out.end(), '\n') == 5);
  CliRun b = run({"sweep", scratch.path("sweep-job.json"), "--seed", "3"});
  CHECK(a.out == b.out);
}

TEST_CASE("job files reject unknown fields") {
  io::save_model(scratch.path("race4.json"), fixtures::collision_race());
  io::write_file(scratch.path("bad-job.json"),
                 R"({
  "model": "race4.json",
  "query": {"type": "reach", "goal": ["collision"]},
  "engines": [{"engine": "subordinated"}],
  "verbosity": 3
})");
  CHECK(run({"analyze", scratch.path("bad-job.json")}).code == 1);
}

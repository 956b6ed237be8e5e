#include "iphkit/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "iphkit/approximate.hpp"
#include "iphkit/chain.hpp"
#include "iphkit/density.hpp"
#include "iphkit/errors.hpp"
#include "iphkit/fit.hpp"
#include "iphkit/gsmp.hpp"
#include "iphkit/io.hpp"
#include "iphkit/iph.hpp"
#include "iphkit/sim.hpp"
#include "iphkit/transient.hpp"

namespace iphkit {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& ctx, const std::string& what) {
  throw ValidationError(ctx + ": " + what);
}

Json parse_json(const std::string& text, const std::string& ctx) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(ctx, "not valid JSON");
  return j;
}

void check_fields(const Json& j, const std::string& ctx,
                  std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional = {}) {
  if (!j.is_object()) fail(ctx, "expected an object");
  for (const auto& item : j.items()) {
    const std::string& key = item.key();
    bool known = std::any_of(required.begin(), required.end(),
                             [&](const char* k) { return key == k; }) ||
                 std::any_of(optional.begin(), optional.end(),
                             [&](const char* k) { return key == k; });
    if (!known) fail(ctx, "unknown field '" + key + "'");
  }
  for (const char* k : required)
    if (!j.contains(k)) fail(ctx, "missing field '" + std::string(k) + "'");
}

double num_field(const Json& j, const std::string& ctx, const char* key) {
  const Json& v = j.at(key);
  if (!v.is_number()) fail(ctx, "field '" + std::string(key) + "' must be a number");
  return v.get<double>();
}

long long int_field(const Json& j, const std::string& ctx, const char* key) {
  const Json& v = j.at(key);
  if (!v.is_number_integer()) fail(ctx, "field '" + std::string(key) + "' must be an integer");
  return v.get<long long>();
}

std::string str_field(const Json& j, const std::string& ctx, const char* key) {
  const Json& v = j.at(key);
  if (!v.is_string()) fail(ctx, "field '" + std::string(key) + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::string> str_array(const Json& j, const std::string& ctx, const char* key) {
  const Json& v = j.at(key);
  if (!v.is_array()) fail(ctx, "field '" + std::string(key) + "' must be an array");
  std::vector<std::string> out;
  for (const Json& x : v) {
    if (!x.is_string()) fail(ctx, "field '" + std::string(key) + "' must hold strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

std::vector<int> int_array(const Json& j, const std::string& ctx, const char* key) {
  const Json& v = j.at(key);
  if (!v.is_array()) fail(ctx, "field '" + std::string(key) + "' must be an array");
  std::vector<int> out;
  for (const Json& x : v) {
    if (!x.is_number_integer()) fail(ctx, "field '" + std::string(key) + "' must hold integers");
    out.push_back(x.get<int>());
  }
  return out;
}

std::vector<double> num_array(const Json& j, const std::string& ctx, const char* key) {
  const Json& v = j.at(key);
  if (!v.is_array()) fail(ctx, "field '" + std::string(key) + "' must be an array");
  std::vector<double> out;
  for (const Json& x : v) {
    if (!x.is_number()) fail(ctx, "field '" + std::string(key) + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

// Job documents reference other files relative to their own location.
std::string resolve_path(const std::string& job_path, const std::string& ref) {
  fs::path p(ref);
  if (p.is_absolute()) return ref;
  return (fs::path(job_path).parent_path() / p).string();
}

// Flags shared by every command.
struct Common {
  std::uint64_t seed = 0;
  int jobs = 1;
  double tolerance = 1e-9;
  std::string out;
  bool timings = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "seed for all randomness in the command");
  cmd->add_option("--jobs", c.jobs, "worker threads for sweeps and simulation")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--tolerance", c.tolerance, "truncation/solve tolerance for analysis engines")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "output file path");
  cmd->add_flag("--timings", c.timings,
                "include wall-clock seconds in outputs (off keeps reruns byte-identical)");
}

void emit(const Common& c, const std::string& text) {
  std::cout << text;
  if (!c.out.empty()) io::write_file(c.out, text);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- ingest -----------------------------------------------------------------

int cmd_ingest(const std::string& input, int bins, const Common& c) {
  std::string text = io::read_file(input);
  std::size_t skipped = 0;
  std::vector<double> samples = io::parse_samples(text, input, &skipped);
  DensityModel d = DensityModel::from_samples(samples, bins);
  io::SampleStats st = io::sample_stats(samples);

  std::cout << "count: " << st.count << "\n";
  std::cout << "mean: " << io::format_double(st.mean) << "\n";
  std::cout << "std: " << io::format_double(st.stddev) << "\n";
  std::cout << "min: " << io::format_double(st.min) << "\n";
  if (skipped > 0) std::cout << "skipped lines: " << skipped << "\n";
  if (st.count > 1 && st.min == st.max) {
    std::cout << "note: all samples equal " << io::format_double(st.min)
              << "; a deterministic event with that delay models this exactly\n";
  }
  if (c.out.empty()) fail("ingest", "--out is required (where to write the density file)");
  io::save_density(c.out, d);
  return 0;
}

// ---- fit / iph ----------------------------------------------------------------

int cmd_fit(const std::string& density_path, const std::string& fitter, int n, const Common& c) {
  DensityModel f = io::load_density(density_path);
  FitOptions opts;
  opts.seed = c.seed;
  Fitter fit = make_fitter(fitter, opts);
  FitResult r = fit(f, n);
  std::cout << io::fit_report(r, c.timings);
  if (!c.out.empty()) io::save_model(c.out, chain_to_gsmp(r.chain));
  return 0;
}

SliceMode mode_from_name(const std::string& name) {
  if (name == "exponential") return SliceMode::kExponential;
  if (name == "equidistant") return SliceMode::kEquidistant;
  fail("iph", "unknown slice mode '" + name + "' (expected exponential or equidistant)");
}

int cmd_iph(const std::string& density_path, const std::string& method, const std::string& fitter,
            int n, int p, const std::string& mode, const Common& c) {
  DensityModel f = io::load_density(density_path);
  FitOptions opts;
  opts.seed = c.seed;
  Fitter fit = make_fitter(fitter, opts);
  IphResult r;
  if (method == "shift") {
    r = iph_shift(fit, n, f);
  } else if (method == "slice") {
    if (p <= 0) fail("iph", "--slices is required for method 'slice'");
    r = iph_slice(fit, n, p, f, mode_from_name(mode));
  } else if (method == "shift+slice") {
    if (p <= 0) fail("iph", "--slices is required for method 'shift+slice'");
    r = iph_shift_slice(fit, n, p, f, mode_from_name(mode));
  } else {
    fail("iph", "unknown method '" + method + "' (expected shift, slice, or shift+slice)");
  }
  std::cout << io::iph_report(method, r, c.timings);
  if (!c.out.empty()) io::save_model(c.out, chain_to_gsmp(r.chain));
  return 0;
}

// ---- validate -----------------------------------------------------------------

int cmd_validate(const std::string& model_path) {
  Gsmp m = io::load_model(model_path);
  ValidationReport rep = validate(m);
  if (!rep.ok()) {
    std::cout << "fail\n";
    for (const std::string& p : rep.problems) std::cout << "  " << p << "\n";
    return 1;
  }
  std::cout << "pass\n";
  std::cout << "class: " << model_class_name(classify(m)) << "\n";
  std::cout << "states: " << m.states.size() << "\n";
  std::cout << "events: " << m.events.size() << "\n";
  return 0;
}

// ---- approximate ----------------------------------------------------------------

ApproxMethod method_from_name(const std::string& name, const std::string& ctx) {
  if (name == "plain") return ApproxMethod::kPlain;
  if (name == "shift") return ApproxMethod::kShift;
  if (name == "slice") return ApproxMethod::kSlice;
  if (name == "shift+slice") return ApproxMethod::kShiftSlice;
  if (name == "constant") return ApproxMethod::kConstant;
  fail(ctx, "unknown method '" + name + "'");
}

ApproxPlan plan_from_json(const Json& j, const std::string& ctx, const Common& c) {
  check_fields(j, ctx, {"events"}, {"state_cap", "prune"});
  ApproxPlan plan;
  plan.options.seed = c.seed;
  const Json& events = j.at("events");
  if (!events.is_object()) fail(ctx, "'events' must map event ids to recipes");
  for (const auto& item : events.items()) {
    const std::string ectx = ctx + ".events." + item.key();
    check_fields(item.value(), ectx, {"method"}, {"fitter", "phases", "slices"});
    EventPlan ep;
    ep.method = method_from_name(str_field(item.value(), ectx, "method"), ectx);
    if (item.value().contains("fitter")) ep.fitter = str_field(item.value(), ectx, "fitter");
    if (item.value().contains("phases"))
      ep.phases = static_cast<int>(int_field(item.value(), ectx, "phases"));
    if (item.value().contains("slices"))
      ep.slices = static_cast<int>(int_field(item.value(), ectx, "slices"));
    plan.events[item.key()] = ep;
  }
  if (j.contains("state_cap")) {
    long long cap = int_field(j, ctx, "state_cap");
    if (cap <= 0) fail(ctx, "'state_cap' must be positive");
    plan.state_cap = static_cast<std::size_t>(cap);
  }
  if (j.contains("prune")) {
    const Json& v = j.at("prune");
    if (!v.is_boolean()) fail(ctx, "'prune' must be a boolean");
    plan.prune = v.get<bool>();
  }
  return plan;
}

int cmd_approximate(const std::string& job_path, const Common& c) {
  Json job = parse_json(io::read_file(job_path), job_path);
  check_fields(job, job_path, {"model", "events"}, {"state_cap", "prune"});
  Gsmp m = io::load_model(resolve_path(job_path, str_field(job, job_path, "model")));
  Json plan_doc = job;
  plan_doc.erase("model");
  ApproxPlan plan = plan_from_json(plan_doc, job_path, c);
  ApproxResult r = approximate_model(m, plan);
  std::cout << io::approx_report(r);
  if (!c.out.empty()) io::save_model(c.out, r.model);
  return 0;
}

// ---- analyze -----------------------------------------------------------------

// Base-state goals fan out to every product state derived from them (product
// names are "base|event@phase..." as written by the approximation step).
std::vector<int> resolve_goal(const Gsmp& m, const std::vector<std::string>& names,
                              const std::string& ctx) {
  std::vector<int> out;
  for (const std::string& name : names) {
    bool found = false;
    const std::string prefix = name + "|";
    for (std::size_t s = 0; s < m.states.size(); ++s) {
      if (m.states[s] == name || m.states[s].rfind(prefix, 0) == 0) {
        out.push_back(static_cast<int>(s));
        found = true;
      }
    }
    if (!found) fail(ctx, "unknown goal state '" + name + "'");
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double goal_mass(const std::vector<double>& dist, const std::vector<int>& goal) {
  double total = 0.0;
  for (int g : goal) total += dist[static_cast<std::size_t>(g)];
  return total;
}

// Unbounded reachability on a CTMC by uniformization: make the goal states
// absorbing, then push the transient distribution over doubling windows until
// the mass still sitting in states with active events drops below eps.
double reach_by_uniformization(Gsmp m, std::vector<int> goal, double eps) {
  for (int g : goal) {
    m.active[static_cast<std::size_t>(g)].clear();
    for (auto it = m.succ.begin(); it != m.succ.end();) {
      if (it->first.first == g) {
        it = m.succ.erase(it);
      } else {
        ++it;
      }
    }
  }
  std::vector<double> dist = init_vector(m);
  double window = 1.0;
  const int kMaxWindows = 80;
  for (int k = 0; k < kMaxWindows; ++k) {
    double live = 0.0;
    for (std::size_t s = 0; s < m.states.size(); ++s)
      if (!m.active[s].empty()) live += dist[s];
    if (live < eps) return goal_mass(dist, goal);
    TransientResult tr = ctmc_transient(m, std::move(dist), window, eps / kMaxWindows);
    dist = std::move(tr.dist);
    window *= 2.0;
  }
  throw ConvergenceError(
      "reachability by uniformization: transient mass did not drain within the horizon budget; "
      "the model may not absorb");
}

struct AnalyzeQuery {
  std::string type;  // "transient" | "reach"
  double time = 0.0;
  std::vector<std::string> goal;
};

int cmd_analyze(const std::string& job_path, const Common& c) {
  Json job = parse_json(io::read_file(job_path), job_path);
  check_fields(job, job_path, {"model", "query", "engines"});
  Gsmp base = io::load_model(resolve_path(job_path, str_field(job, job_path, "model")));

  const Json& qj = job.at("query");
  const std::string qctx = job_path + ".query";
  AnalyzeQuery q;
  q.type = str_field(qj, qctx, "type");
  if (q.type == "transient") {
    check_fields(qj, qctx, {"type", "time", "goal"});
    q.time = num_field(qj, qctx, "time");
    if (!(q.time >= 0.0)) fail(qctx, "'time' must be >= 0");
  } else if (q.type == "reach") {
    check_fields(qj, qctx, {"type", "goal"});
  } else {
    fail(qctx, "unknown query type '" + q.type + "' (expected transient or reach)");
  }
  q.goal = str_array(qj, qctx, "goal");
  if (q.goal.empty()) fail(qctx, "'goal' must be nonempty");

  const Json& engines = job.at("engines");
  if (!engines.is_array() || engines.empty())
    fail(job_path, "'engines' must be a nonempty array");

  std::vector<io::ComparisonRow> rows;
  int exit_code = 0;
  for (std::size_t i = 0; i < engines.size(); ++i) {
    const std::string ectx = job_path + ".engines[" + std::to_string(i) + "]";
    check_fields(engines[i], ectx, {"engine"}, {"plan", "delta", "eps"});
    io::ComparisonRow row;
    row.engine = str_field(engines[i], ectx, "engine");
    if (row.engine != "uniformization" && row.engine != "delta" && row.engine != "subordinated")
      fail(ectx, "unknown engine '" + row.engine +
                     "' (expected uniformization, delta, or subordinated)");
    double eps = engines[i].contains("eps") ? num_field(engines[i], ectx, "eps") : c.tolerance;
    if (!(eps > 0.0)) fail(ectx, "'eps' must be positive");

    auto t0 = std::chrono::steady_clock::now();
    try {
      Gsmp model = base;
      if (engines[i].contains("plan")) {
        ApproxPlan plan = plan_from_json(engines[i].at("plan"), ectx + ".plan", c);
        ApproxResult ar = approximate_model(base, plan);
        model = std::move(ar.model);
        for (const ComponentReport& comp : ar.components) row.phases += comp.phases;
      }
      std::vector<int> goal = resolve_goal(model, q.goal, ectx);

      if (row.engine == "uniformization") {
        if (classify(model) != ModelClass::kCtmc)
          throw PreconditionError(
              "engine 'uniformization' needs a model with exponential events only; try engine "
              "'delta' (transient) or 'subordinated' (reachability)");
        if (q.type == "transient") {
          TransientResult tr = ctmc_transient(model, init_vector(model), q.time, eps);
          row.result = goal_mass(tr.dist, goal);
        } else {
          row.result = reach_by_uniformization(model, goal, eps);
        }
      } else if (row.engine == "delta") {
        if (q.type != "transient")
          throw PreconditionError(
              "engine 'delta' answers transient queries; try engine 'subordinated' for "
              "reachability");
        DeltaOptions dopts;
        dopts.eps = eps;
        if (engines[i].contains("delta")) {
          dopts.delta = num_field(engines[i], ectx, "delta");
          if (!(dopts.delta > 0.0)) fail(ectx, "'delta' must be positive");
        }
        TransientResult tr = dctmc_transient_delta(model, init_vector(model), q.time, dopts);
        row.result = goal_mass(tr.dist, goal);
        for (const std::string& w : tr.warnings) row.note += (row.note.empty() ? "" : "; ") + w;
      } else {
        if (q.type != "reach")
          throw PreconditionError(
              "engine 'subordinated' answers reachability queries; try engine 'delta' or "
              "'uniformization' for transient analysis");
        SubordinatedOptions sopts;
        sopts.solve_tol = eps;
        ReachResult rr = dctmc_reach_subordinated(model, goal, sopts);
        row.result = rr.probability;
        row.note = rr.solver;
      }
    } catch (const PreconditionError& e) {
      row.result = std::numeric_limits<double>::quiet_NaN();
      row.note = e.what();
      exit_code = std::max(exit_code, 2);
    } catch (const ConvergenceError& e) {
      row.result = std::numeric_limits<double>::quiet_NaN();
      row.note = e.what();
      exit_code = std::max(exit_code, 3);
    }
    row.seconds = seconds_since(t0);
    rows.push_back(std::move(row));
  }

  emit(c, io::comparison_csv(rows, c.timings));
  return exit_code;
}

// ---- simulate -----------------------------------------------------------------

int cmd_simulate(const std::string& job_path, const Common& c) {
  Json job = parse_json(io::read_file(job_path), job_path);
  check_fields(job, job_path, {"model", "query", "runs"}, {"max_steps", "check_clocks"});
  Gsmp m = io::load_model(resolve_path(job_path, str_field(job, job_path, "model")));

  const Json& qj = job.at("query");
  const std::string qctx = job_path + ".query";
  SimQuery q;
  const std::string type = str_field(qj, qctx, "type");
  if (type == "transient") {
    check_fields(qj, qctx, {"type", "time", "states"});
    q.kind = SimQuery::Kind::kTransient;
    q.t = num_field(qj, qctx, "time");
  } else if (type == "reach") {
    check_fields(qj, qctx, {"type", "states"}, {"horizon"});
    q.kind = SimQuery::Kind::kReach;
  } else if (type == "histogram") {
    check_fields(qj, qctx, {"type"}, {"states", "bins", "horizon"});
    q.kind = SimQuery::Kind::kHistogram;
    if (qj.contains("bins")) q.bins = static_cast<int>(int_field(qj, qctx, "bins"));
  } else {
    fail(qctx, "unknown query type '" + type + "' (expected transient, reach, or histogram)");
  }
  if (qj.contains("states")) q.states = str_array(qj, qctx, "states");
  if (qj.contains("horizon")) q.horizon = num_field(qj, qctx, "horizon");

  SimConfig cfg;
  cfg.seed = c.seed;
  cfg.jobs = c.jobs;
  cfg.runs = int_field(job, job_path, "runs");
  if (cfg.runs <= 0) fail(job_path, "'runs' must be positive");
  if (job.contains("max_steps")) {
    long long ms = int_field(job, job_path, "max_steps");
    if (ms <= 0) fail(job_path, "'max_steps' must be positive");
    cfg.max_steps = static_cast<std::uint64_t>(ms);
  }
  if (job.contains("check_clocks")) {
    const Json& v = job.at("check_clocks");
    if (!v.is_boolean()) fail(job_path, "'check_clocks' must be a boolean");
    cfg.check_clocks = v.get<bool>();
  }

  SimResult r = simulate(m, q, cfg);
  std::string report = io::sim_report(r);
  std::cout << report;
  if (!c.out.empty()) {
    if (q.kind == SimQuery::Kind::kHistogram) {
      io::write_file(c.out, io::histogram_csv(r.histogram));
    } else {
      io::write_file(c.out, report);
    }
  }
  return 0;
}

// ---- sweep -----------------------------------------------------------------

int cmd_sweep(const std::string& job_path, const Common& c) {
  Json job = parse_json(io::read_file(job_path), job_path);
  if (!job.is_object() || !job.contains("type")) fail(job_path, "missing field 'type'");
  const std::string type = str_field(job, job_path, "type");
  FitOptions opts;
  opts.seed = c.seed;

  if (type == "error-vs-phases") {
    check_fields(job, job_path, {"type", "density", "fitter", "ns", "methods"}, {"slices"});
    DensityModel f = io::load_density(resolve_path(job_path, str_field(job, job_path, "density")));
    std::vector<int> slices;
    if (job.contains("slices")) slices = int_array(job, job_path, "slices");
    std::vector<SweepRow> rows = sweep_error_vs_phases(
        f, str_field(job, job_path, "fitter"), int_array(job, job_path, "ns"),
        str_array(job, job_path, "methods"), slices, opts, c.jobs);
    emit(c, io::sweep_csv(rows, c.timings));
    return 0;
  }
  if (type == "shift-law") {
    check_fields(job, job_path, {"type", "shifts", "variance_target"},
                 {"err_threshold", "phase_cap"});
    double threshold = job.contains("err_threshold")
                           ? num_field(job, job_path, "err_threshold")
                           : 1.0;
    int cap = job.contains("phase_cap") ? static_cast<int>(int_field(job, job_path, "phase_cap"))
                                        : 4096;
    std::vector<ShiftLawRow> rows =
        shift_law_experiment(num_array(job, job_path, "shifts"),
                             num_field(job, job_path, "variance_target"), threshold, cap, opts);
    emit(c, io::shift_law_csv(rows));
    return 0;
  }
  fail(job_path, "unknown sweep type '" + type + "' (expected error-vs-phases or shift-law)");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"phase-type approximation toolkit for stochastic timed models"};
  app.require_subcommand(1);

  Common c;

  auto* ingest = app.add_subcommand(
      "ingest", "turn a sample file or ping transcript into a histogram density file");
  std::string ingest_input;
  int ingest_bins = 0;
  ingest->add_option("input", ingest_input, "sample file (one decimal per line) or ping log")
      ->required();
  ingest->add_option("--bins", ingest_bins, "histogram bin count (0 picks automatically)");
  add_common(ingest, c);

  auto* fitc = app.add_subcommand("fit", "fit a phase chain to a density");
  std::string fit_density, fit_fitter = "hyper-erlang";
  int fit_n = 0;
  fitc->add_option("--density", fit_density, "density file to fit")->required();
  fitc->add_option("--fitter", fit_fitter, "erlang | hyper-erlang | hyper-erlang:<branches>");
  fitc->add_option("-n,--phases", fit_n, "transient phase budget")->required();
  add_common(fitc, c);

  auto* iphc = app.add_subcommand(
      "iph", "build a chain with deterministic structure around fitted components");
  std::string iph_density, iph_method, iph_fitter = "hyper-erlang", iph_mode = "exponential";
  int iph_n = 0, iph_p = 0;
  iphc->add_option("--density", iph_density, "density file to approximate")->required();
  iphc->add_option("--method", iph_method, "shift | slice | shift+slice")->required();
  iphc->add_option("--fitter", iph_fitter, "erlang | hyper-erlang | hyper-erlang:<branches>");
  iphc->add_option("-n,--phases", iph_n, "transient phase budget")->required();
  iphc->add_option("-p,--slices", iph_p, "slice count for the slicing methods");
  iphc->add_option("--mode", iph_mode, "slice boundary layout: exponential | equidistant");
  add_common(iphc, c);

  auto* validatec = app.add_subcommand("validate", "check a model file and report its class");
  std::string validate_model;
  validatec->add_option("model", validate_model, "model file")->required();
  add_common(validatec, c);

  auto* approxc = app.add_subcommand(
      "approximate", "replace general events of a model per a job file");
  std::string approx_job;
  approxc->add_option("job", approx_job, "approximation job file")->required();
  add_common(approxc, c);

  auto* analyzec = app.add_subcommand(
      "analyze", "run transient/reachability queries across engines and tabulate them");
  std::string analyze_job;
  analyzec->add_option("job", analyze_job, "analysis job file")->required();
  add_common(analyzec, c);

  auto* simulatec = app.add_subcommand("simulate", "estimate a query by Monte-Carlo runs");
  std::string simulate_job;
  simulatec->add_option("job", simulate_job, "simulation job file")->required();
  add_common(simulatec, c);

  auto* sweepc = app.add_subcommand("sweep", "tabulate error against phase budget or shift");
  std::string sweep_job;
  sweepc->add_option("job", sweep_job, "sweep job file")->required();
  add_common(sweepc, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(ingest_input, ingest_bins, c);
    if (fitc->parsed()) return cmd_fit(fit_density, fit_fitter, fit_n, c);
    if (iphc->parsed()) return cmd_iph(iph_density, iph_method, iph_fitter, iph_n, iph_p, iph_mode, c);
    if (validatec->parsed()) return cmd_validate(validate_model);
    if (approxc->parsed()) return cmd_approximate(approx_job, c);
    if (analyzec->parsed()) return cmd_analyze(analyze_job, c);
    if (simulatec->parsed()) return cmd_simulate(simulate_job, c);
    if (sweepc->parsed()) return cmd_sweep(sweep_job, c);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace iphkit

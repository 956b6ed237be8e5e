#include "iphkit/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "iphkit/errors.hpp"

namespace iphkit::io {
namespace {

// Insertion-ordered JSON keeps written documents in a stable, readable field
// order; parsing is order-insensitive either way.
using Json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& ctx, const std::string& what) {
  throw ValidationError(ctx + ": " + what);
}

void expect_object(const Json& j, const std::string& ctx) {
  if (!j.is_object()) fail(ctx, "expected an object");
}

// Strict schema: every present key must be either required or optional, and
// every required key must be present.
void check_fields(const Json& j, const std::string& ctx,
                  std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional = {}) {
  expect_object(j, ctx);
  for (const auto& item : j.items()) {
    const std::string& key = item.key();
    bool known = std::any_of(required.begin(), required.end(),
                             [&](const char* k) { return key == k; }) ||
                 std::any_of(optional.begin(), optional.end(),
                             [&](const char* k) { return key == k; });
    if (!known) fail(ctx, "unknown field '" + key + "'");
  }
  for (const char* k : required) {
    if (!j.contains(k)) fail(ctx, "missing field '" + std::string(k) + "'");
  }
}

double num_field(const Json& j, const std::string& ctx, const char* key) {
  const Json& v = j.at(key);
  if (!v.is_number()) fail(ctx, "field '" + std::string(key) + "' must be a number");
  return v.get<double>();
}

int int_field(const Json& j, const std::string& ctx, const char* key) {
  const Json& v = j.at(key);
  if (!v.is_number_integer()) fail(ctx, "field '" + std::string(key) + "' must be an integer");
  return v.get<int>();
}

std::string str_field(const Json& j, const std::string& ctx, const char* key) {
  const Json& v = j.at(key);
  if (!v.is_string()) fail(ctx, "field '" + std::string(key) + "' must be a string");
  return v.get<std::string>();
}

// Deterministic delays accept plain numbers or exact rational strings "a/b".
double parse_delay(const Json& v, const std::string& ctx) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    std::size_t slash = s.find('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 == s.size())
      fail(ctx, "delay string must look like 'a/b', got '" + s + "'");
    long long num = 0, den = 0;
    auto r1 = std::from_chars(s.data(), s.data() + slash, num);
    auto r2 = std::from_chars(s.data() + slash + 1, s.data() + s.size(), den);
    if (r1.ec != std::errc{} || r1.ptr != s.data() + slash || r2.ec != std::errc{} ||
        r2.ptr != s.data() + s.size())
      fail(ctx, "delay string must be an integer ratio 'a/b', got '" + s + "'");
    if (den <= 0) fail(ctx, "delay denominator must be positive in '" + s + "'");
    return static_cast<double>(num) / static_cast<double>(den);
  }
  fail(ctx, "delay must be a number or a rational string 'a/b'");
}

Json parse_text(const std::string& text, const std::string& ctx) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(ctx, "not valid JSON");
  return j;
}

// ---- densities -------------------------------------------------------------

Json density_to_json(const DensityModel& d);

Json branch_to_json(const DensityModel::HyperBranch& b) {
  Json j;
  j["weight"] = b.weight;
  j["phases"] = b.phases;
  j["rate"] = b.rate;
  return j;
}

Json density_to_json(const DensityModel& d) {
  Json j;
  const auto& k = d.kind();
  if (const auto* e = std::get_if<DensityModel::Exponential>(&k)) {
    j["kind"] = "exponential";
    j["rate"] = e->rate;
  } else if (const auto* e = std::get_if<DensityModel::Erlang>(&k)) {
    j["kind"] = "erlang";
    j["phases"] = e->phases;
    j["rate"] = e->rate;
  } else if (const auto* u = std::get_if<DensityModel::Uniform>(&k)) {
    j["kind"] = "uniform";
    j["low"] = u->a;
    j["high"] = u->b;
  } else if (const auto* s = std::get_if<DensityModel::Shifted>(&k)) {
    j["kind"] = "shifted";
    j["shift"] = s->shift;
    j["base"] = density_to_json(*s->base);
  } else if (const auto* h = std::get_if<DensityModel::HyperErlang>(&k)) {
    j["kind"] = "hyper-erlang";
    Json arr = Json::array();
    for (const auto& b : h->branches) arr.push_back(branch_to_json(b));
    j["branches"] = std::move(arr);
  } else {
    const auto& e = std::get<DensityModel::Empirical>(k);
    j["kind"] = "empirical";
    j["edges"] = e.edges;
    j["masses"] = e.masses;
  }
  return j;
}

std::vector<double> num_array(const Json& j, const std::string& ctx, const char* key) {
  const Json& v = j.at(key);
  if (!v.is_array()) fail(ctx, "field '" + std::string(key) + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const Json& x : v) {
    if (!x.is_number()) fail(ctx, "field '" + std::string(key) + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

DensityModel density_from_json(const Json& j, const std::string& ctx) {
  expect_object(j, ctx);
  if (!j.contains("kind")) fail(ctx, "missing field 'kind'");
  const std::string kind = str_field(j, ctx, "kind");
  if (kind == "exponential") {
    check_fields(j, ctx, {"kind", "rate"});
    return DensityModel::exponential(num_field(j, ctx, "rate"));
  }
  if (kind == "erlang") {
    check_fields(j, ctx, {"kind", "phases", "rate"});
    return DensityModel::erlang(int_field(j, ctx, "phases"), num_field(j, ctx, "rate"));
  }
  if (kind == "uniform") {
    check_fields(j, ctx, {"kind", "low", "high"});
    return DensityModel::uniform(num_field(j, ctx, "low"), num_field(j, ctx, "high"));
  }
  if (kind == "shifted") {
    check_fields(j, ctx, {"kind", "shift", "base"});
    return DensityModel::shifted(density_from_json(j.at("base"), ctx + ".base"),
                                 num_field(j, ctx, "shift"));
  }
  if (kind == "hyper-erlang") {
    check_fields(j, ctx, {"kind", "branches"});
    const Json& arr = j.at("branches");
    if (!arr.is_array() || arr.empty()) fail(ctx, "'branches' must be a nonempty array");
    std::vector<DensityModel::HyperBranch> branches;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string bctx = ctx + ".branches[" + std::to_string(i) + "]";
      check_fields(arr[i], bctx, {"weight", "phases", "rate"});
      branches.push_back({num_field(arr[i], bctx, "weight"), int_field(arr[i], bctx, "phases"),
                          num_field(arr[i], bctx, "rate")});
    }
    return DensityModel::hyper_erlang(std::move(branches));
  }
  if (kind == "empirical") {
    check_fields(j, ctx, {"kind", "edges", "masses"});
    return DensityModel::empirical(num_array(j, ctx, "edges"), num_array(j, ctx, "masses"));
  }
  fail(ctx, "unknown density kind '" + kind + "'");
}

// ---- models ----------------------------------------------------------------

Json event_to_json(const Event& e) {
  Json j;
  j["id"] = e.id;
  switch (e.kind) {
    case Event::Kind::kExponential:
      j["kind"] = "exponential";
      j["rate"] = e.rate;
      break;
    case Event::Kind::kDeterministic:
      j["kind"] = "deterministic";
      j["delay"] = e.delay;
      break;
    case Event::Kind::kGeneral:
      j["kind"] = "general";
      j["density"] = density_to_json(*e.density);
      break;
  }
  return j;
}

Json branching_to_json(const Gsmp& m, const Branching& b) {
  Json arr = Json::array();
  for (const auto& [state, prob] : b) {
    Json e;
    e["state"] = m.states[static_cast<std::size_t>(state)];
    e["prob"] = prob;
    arr.push_back(std::move(e));
  }
  return arr;
}

Json model_to_json(const Gsmp& m) {
  Json j;
  j["states"] = m.states;
  Json events = Json::array();
  for (const Event& e : m.events) events.push_back(event_to_json(e));
  j["events"] = std::move(events);

  Json active = Json::object();
  for (std::size_t s = 0; s < m.states.size(); ++s) {
    Json ids = Json::array();
    if (s < m.active.size())
      for (int e : m.active[s]) ids.push_back(m.events[static_cast<std::size_t>(e)].id);
    active[m.states[s]] = std::move(ids);
  }
  j["active"] = std::move(active);

  Json succ = Json::array();
  for (const auto& [key, branching] : m.succ) {
    Json e;
    e["state"] = m.states[static_cast<std::size_t>(key.first)];
    e["event"] = m.events[static_cast<std::size_t>(key.second)].id;
    e["to"] = branching_to_json(m, branching);
    succ.push_back(std::move(e));
  }
  j["succ"] = std::move(succ);
  j["init"] = branching_to_json(m, m.init);

  Json order = Json::array();
  for (int e : m.tie_order) order.push_back(m.events[static_cast<std::size_t>(e)].id);
  j["tie_order"] = std::move(order);
  return j;
}

Branching branching_from_json(const Json& arr, const Gsmp& m, const std::string& ctx) {
  if (!arr.is_array()) fail(ctx, "expected an array of {state, prob}");
  Branching out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string ectx = ctx + "[" + std::to_string(i) + "]";
    check_fields(arr[i], ectx, {"state", "prob"});
    const std::string name = str_field(arr[i], ectx, "state");
    int s = m.state_index(name);
    if (s < 0) fail(ectx, "unknown state '" + name + "'");
    out.emplace_back(s, num_field(arr[i], ectx, "prob"));
  }
  return out;
}

Gsmp model_from_json(const Json& j, const std::string& ctx) {
  check_fields(j, ctx, {"states", "events", "active", "succ", "init"}, {"tie_order"});
  Gsmp m;

  const Json& states = j.at("states");
  if (!states.is_array() || states.empty()) fail(ctx, "'states' must be a nonempty array");
  for (const Json& s : states) {
    if (!s.is_string() || s.get<std::string>().empty())
      fail(ctx, "'states' must hold nonempty strings");
    m.states.push_back(s.get<std::string>());
  }
  for (std::size_t a = 0; a < m.states.size(); ++a)
    for (std::size_t b = a + 1; b < m.states.size(); ++b)
      if (m.states[a] == m.states[b]) fail(ctx, "duplicate state '" + m.states[a] + "'");

  const Json& events = j.at("events");
  if (!events.is_array()) fail(ctx, "'events' must be an array");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const std::string ectx = ctx + ".events[" + std::to_string(i) + "]";
    expect_object(events[i], ectx);
    if (!events[i].contains("kind")) fail(ectx, "missing field 'kind'");
    const std::string kind = str_field(events[i], ectx, "kind");
    Event e;
    if (kind == "exponential") {
      check_fields(events[i], ectx, {"id", "kind", "rate"});
      e.kind = Event::Kind::kExponential;
      e.rate = num_field(events[i], ectx, "rate");
    } else if (kind == "deterministic") {
      check_fields(events[i], ectx, {"id", "kind", "delay"});
      e.kind = Event::Kind::kDeterministic;
      e.delay = parse_delay(events[i].at("delay"), ectx);
    } else if (kind == "general") {
      check_fields(events[i], ectx, {"id", "kind", "density"});
      e.kind = Event::Kind::kGeneral;
      e.density = density_from_json(events[i].at("density"), ectx + ".density");
    } else {
      fail(ectx, "unknown event kind '" + kind + "'");
    }
    e.id = str_field(events[i], ectx, "id");
    if (e.id.empty()) fail(ectx, "event id must be nonempty");
    if (m.event_index(e.id) >= 0) fail(ectx, "duplicate event id '" + e.id + "'");
    m.events.push_back(std::move(e));
  }

  const Json& active = j.at("active");
  expect_object(active, ctx + ".active");
  m.active.assign(m.states.size(), {});
  for (const auto& item : active.items()) {
    int s = m.state_index(item.key());
    if (s < 0) fail(ctx + ".active", "unknown state '" + item.key() + "'");
    if (!item.value().is_array())
      fail(ctx + ".active", "entry for '" + item.key() + "' must be an array of event ids");
    for (const Json& id : item.value()) {
      if (!id.is_string()) fail(ctx + ".active", "event ids must be strings");
      int e = m.event_index(id.get<std::string>());
      if (e < 0) fail(ctx + ".active", "unknown event '" + id.get<std::string>() + "'");
      m.active[static_cast<std::size_t>(s)].push_back(e);
    }
    auto& list = m.active[static_cast<std::size_t>(s)];
    std::sort(list.begin(), list.end());
  }

  const Json& succ = j.at("succ");
  if (!succ.is_array()) fail(ctx, "'succ' must be an array");
  for (std::size_t i = 0; i < succ.size(); ++i) {
    const std::string ectx = ctx + ".succ[" + std::to_string(i) + "]";
    check_fields(succ[i], ectx, {"state", "event", "to"});
    const std::string sname = str_field(succ[i], ectx, "state");
    const std::string ename = str_field(succ[i], ectx, "event");
    int s = m.state_index(sname);
    if (s < 0) fail(ectx, "unknown state '" + sname + "'");
    int e = m.event_index(ename);
    if (e < 0) fail(ectx, "unknown event '" + ename + "'");
    if (m.succ.count({s, e})) fail(ectx, "duplicate entry for (" + sname + ", " + ename + ")");
    m.succ[{s, e}] = branching_from_json(succ[i].at("to"), m, ectx + ".to");
  }

  m.init = branching_from_json(j.at("init"), m, ctx + ".init");

  if (j.contains("tie_order")) {
    const Json& order = j.at("tie_order");
    if (!order.is_array()) fail(ctx, "'tie_order' must be an array of event ids");
    for (const Json& id : order) {
      if (!id.is_string()) fail(ctx + ".tie_order", "event ids must be strings");
      int e = m.event_index(id.get<std::string>());
      if (e < 0) fail(ctx + ".tie_order", "unknown event '" + id.get<std::string>() + "'");
      m.tie_order.push_back(e);
    }
  } else {
    for (std::size_t e = 0; e < m.events.size(); ++e) m.tie_order.push_back(static_cast<int>(e));
  }
  return m;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string sanitize_cell(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

Json fit_report_json(const FitResult& r, bool include_timings) {
  Json j;
  j["family"] = r.family;
  j["phases"] = r.phases;
  j["err"] = r.err;
  j["detail"] = r.detail;
  j["converged"] = r.converged;
  j["warnings"] = r.warnings;
  j["seconds"] = include_timings ? r.seconds : 0.0;
  return j;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string density_to_text(const DensityModel& d) { return dump(density_to_json(d)); }

DensityModel density_from_text(const std::string& text, const std::string& context) {
  return density_from_json(parse_text(text, context), context);
}

std::string model_to_text(const Gsmp& m) { return dump(model_to_json(m)); }

Gsmp model_from_text(const std::string& text, const std::string& context) {
  return model_from_json(parse_text(text, context), context);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw ValidationError("failed writing '" + path + "'");
}

DensityModel load_density(const std::string& path) {
  return density_from_text(read_file(path), path);
}

void save_density(const std::string& path, const DensityModel& d) {
  write_file(path, density_to_text(d));
}

Gsmp load_model(const std::string& path) { return model_from_text(read_file(path), path); }

void save_model(const std::string& path, const Gsmp& m) { write_file(path, model_to_text(m)); }

std::vector<double> parse_samples(const std::string& text, const std::string& context,
                                  std::size_t* skipped) {
  static const std::regex ping_time(R"(time[=<]([0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?)\s*ms)");
  std::vector<double> samples;
  std::vector<std::string> diagnostics;
  std::size_t skipped_count = 0;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string trimmed = line;
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    trimmed.erase(trimmed.begin(),
                  std::find_if_not(trimmed.begin(), trimmed.end(), is_space));
    trimmed.erase(std::find_if_not(trimmed.rbegin(), trimmed.rend(), is_space).base(),
                  trimmed.end());
    if (trimmed.empty() || trimmed[0] == '#') continue;

    std::smatch match;
    if (std::regex_search(trimmed, match, ping_time)) {
      samples.push_back(std::strtod(match[1].str().c_str(), nullptr));
      continue;
    }
    char* end = nullptr;
    double v = std::strtod(trimmed.c_str(), &end);
    if (end == trimmed.c_str() + trimmed.size() && end != trimmed.c_str()) {
      samples.push_back(v);
      continue;
    }
    ++skipped_count;
    if (diagnostics.size() < 5)
      diagnostics.push_back("line " + std::to_string(lineno) + ": '" + trimmed + "'");
  }
  if (skipped) *skipped = skipped_count;
  if (samples.empty()) {
    std::string msg = context + ": no parseable samples";
    for (const std::string& d : diagnostics) msg += "\n  " + d;
    throw ValidationError(msg);
  }
  return samples;
}

SampleStats sample_stats(const std::vector<double>& samples) {
  SampleStats st;
  st.count = samples.size();
  if (samples.empty()) return st;
  double sum = 0.0;
  st.min = samples.front();
  st.max = samples.front();
  for (double v : samples) {
    sum += v;
    st.min = std::min(st.min, v);
    st.max = std::max(st.max, v);
  }
  st.mean = sum / static_cast<double>(samples.size());
  double ss = 0.0;
  for (double v : samples) ss += (v - st.mean) * (v - st.mean);
  st.stddev = std::sqrt(ss / static_cast<double>(samples.size()));
  return st;
}

std::string fit_report(const FitResult& r, bool include_timings) {
  return dump(fit_report_json(r, include_timings));
}

std::string iph_report(const std::string& method, const IphResult& r, bool include_timings) {
  Json j;
  j["method"] = method;
  j["err"] = r.err;
  j["phases_used"] = r.phases_used;
  if (r.shift) j["shift"] = *r.shift;
  if (r.plan) {
    Json p;
    p["upper"] = r.plan->upper;
    p["slices"] = r.plan->slices;
    p["boundaries"] = r.plan->boundaries;
    j["plan"] = std::move(p);
  }
  Json comps = Json::array();
  for (const FitResult& c : r.components) comps.push_back(fit_report_json(c, include_timings));
  j["components"] = std::move(comps);
  j["notes"] = r.notes;
  j["seconds"] = include_timings ? r.seconds : 0.0;
  return dump(j);
}

std::string approx_report(const ApproxResult& r) {
  Json j;
  j["states"] = r.model.states.size();
  j["events"] = r.model.events.size();
  j["class"] = model_class_name(classify(r.model));
  Json comps = Json::array();
  for (const ComponentReport& c : r.components) {
    Json e;
    e["event"] = c.event;
    e["method"] = c.method;
    e["phases"] = c.phases;
    e["err"] = c.err;  // NaN serializes as null: metric not applicable
    comps.push_back(std::move(e));
  }
  j["components"] = std::move(comps);
  j["notes"] = r.notes;
  return dump(j);
}

std::string sim_report(const SimResult& r) {
  Json j;
  j["estimate"] = r.estimate;
  j["std_error"] = r.std_error;
  j["runs"] = r.runs;
  j["hits"] = r.hits;
  j["censored"] = r.censored;
  return dump(j);
}

std::string sweep_csv(const std::vector<SweepRow>& rows, bool include_timings) {
  std::string out = "method,n,p,err,seconds,flag\n";
  for (const SweepRow& r : rows) {
    out += sanitize_cell(r.method) + ',' + std::to_string(r.n) + ',' + std::to_string(r.p) + ',' +
           format_double(r.err) + ',' + format_double(include_timings ? r.seconds : 0.0) + ',' +
           sanitize_cell(r.flag) + '\n';
  }
  return out;
}

std::string shift_law_csv(const std::vector<ShiftLawRow>& rows) {
  std::string out = "shift,phases_closed_form,phases_measured,err,flag\n";
  for (const ShiftLawRow& r : rows) {
    out += format_double(r.shift) + ',' + std::to_string(r.phases_closed_form) + ',' +
           std::to_string(r.phases_measured) + ',' + format_double(r.err_at_measured) + ',' +
           sanitize_cell(r.flag) + '\n';
  }
  return out;
}

std::string histogram_csv(const std::vector<HistogramRow>& rows) {
  std::string out = "low,high,count\n";
  for (const HistogramRow& r : rows) {
    out += format_double(r.lo) + ',' + format_double(r.hi) + ',' + std::to_string(r.count) + '\n';
  }
  return out;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows, bool include_timings) {
  std::string out = "engine,phases,result,seconds,note\n";
  for (const ComparisonRow& r : rows) {
    out += sanitize_cell(r.engine) + ',' + std::to_string(r.phases) + ',' +
           format_double(r.result) + ',' + format_double(include_timings ? r.seconds : 0.0) +
           ',' + sanitize_cell(r.note) + '\n';
  }
  return out;
}

}  // namespace iphkit::io

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "iphkit/approximate.hpp"
#include "iphkit/chain.hpp"
#include "iphkit/density.hpp"
#include "iphkit/fit.hpp"
#include "iphkit/gsmp.hpp"
#include "iphkit/iph.hpp"
#include "iphkit/sim.hpp"

namespace iphkit::io {

// All structured documents use one JSON tree per file.  Parsers are strict:
// unknown fields, missing fields, and type mismatches raise ValidationError
// with the offending path.  Writers emit a canonical form (2-space indent,
// shortest round-trip numbers, trailing newline) so identical inputs produce
// byte-identical files.

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);

// ---- density documents -----------------------------------------------------
// {"kind": "exponential" | "erlang" | "uniform" | "shifted" | "hyper-erlang"
//          | "empirical", ...kind-specific fields...}
std::string density_to_text(const DensityModel& d);
DensityModel density_from_text(const std::string& text,
                               const std::string& context = "density");

// ---- model documents -------------------------------------------------------
// {"states": [...], "events": [{"id", "kind", params...}], "active": {state:
// [event ids]}, "succ": [{"state", "event", "to": [{"state", "prob"}]}],
// "init": [{"state", "prob"}], "tie_order": [event ids]}.  Deterministic
// delays accept decimals or rational strings "a/b".  tie_order defaults to
// declaration order.  Chains travel as ordinary model documents.
std::string model_to_text(const Gsmp& m);
Gsmp model_from_text(const std::string& text, const std::string& context = "model");

// ---- whole files -----------------------------------------------------------
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
DensityModel load_density(const std::string& path);
void save_density(const std::string& path, const DensityModel& d);
Gsmp load_model(const std::string& path);
void save_model(const std::string& path, const Gsmp& m);

// ---- sample ingestion ------------------------------------------------------
// Accepts one decimal time per line and ping-style transcripts, taking the
// value of every "time=<x> ms" field.  Other lines (ping chatter, comments)
// are skipped; if nothing parses, throws ValidationError quoting the first
// offending lines.  `skipped`, when given, receives the skipped-line count.
std::vector<double> parse_samples(const std::string& text,
                                  const std::string& context = "samples",
                                  std::size_t* skipped = nullptr);

struct SampleStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population form, 0 for a single sample
  double min = 0.0;
  double max = 0.0;
};
SampleStats sample_stats(const std::vector<double>& samples);

// ---- result documents ------------------------------------------------------
// Wall-time fields print as 0 unless include_timings is set, keeping repeated
// runs byte-identical.
std::string fit_report(const FitResult& r, bool include_timings = false);
std::string iph_report(const std::string& method, const IphResult& r,
                       bool include_timings = false);
std::string approx_report(const ApproxResult& r);
std::string sim_report(const SimResult& r);

// ---- tables ----------------------------------------------------------------
std::string sweep_csv(const std::vector<SweepRow>& rows, bool include_timings = false);
std::string shift_law_csv(const std::vector<ShiftLawRow>& rows);
std::string histogram_csv(const std::vector<HistogramRow>& rows);

struct ComparisonRow {
  std::string engine;
  int phases = 0;       // phase budget spent by the approximation, 0 for none
  double result = 0.0;  // probability computed by the engine
  double seconds = 0.0;
  std::string note;
};
std::string comparison_csv(const std::vector<ComparisonRow>& rows,
                           bool include_timings = false);

}  // namespace iphkit::io

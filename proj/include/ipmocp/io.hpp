#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ipmocp/continuation.hpp"

namespace ipmocp::io {

/// Reading or writing a file failed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Everything a run needs; the CLI fills it from a config file, then flags.
struct RunConfig {
  std::string problem = "robbins";
  Formulation algorithm = Formulation::Primal;
  ContinuationConfig continuation;
  std::string output_dir = ".";
  std::string trajectory_file = "trajectory.csv";
  std::string summary_file = "summary.yaml";
  bool trace = false;
};

/// Parses a YAML mapping. Unknown keys, wrong types and bad values raise
/// ConfigError naming the source, line and field.
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>",
                           RunConfig defaults = RunConfig{});
/// IoError when the file cannot be read.
RunConfig load_run_config(const std::string& path, RunConfig defaults = RunConfig{});

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);
/// Whole-string parse; ConfigError otherwise.
double parse_double(std::string_view text);

/// One row per mesh node: t, x, p, u, theta, eta.
struct TrajectoryTable {
  std::vector<std::string> header;
  Matrix rows;
};

TrajectoryTable trajectory_table(const OcpProblem& problem, const Trajectory& trajectory);

void write_csv(std::ostream& out, const TrajectoryTable& table);
/// IoError on a malformed header, ragged rows or unparsable fields.
TrajectoryTable read_csv(std::istream& in);
void save_csv(const std::string& path, const TrajectoryTable& table);
TrajectoryTable load_csv(const std::string& path);

/// Final cost, stages, wall time, boundedness audit and per-stage diagnostics.
std::string run_summary_yaml(const OcpProblem& problem, const RunConfig& config, const ContinuationRun& run);

void save_text(const std::string& path, const std::string& text);

}  // namespace ipmocp::io

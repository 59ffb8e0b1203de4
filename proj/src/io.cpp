#include "ipmocp/io.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ipmocp::io {

namespace {

[[noreturn]] void config_fail(const std::string& source, const YAML::Mark& mark, const std::string& field,
                              const std::string& msg) {
  std::string where = source;
  if (!mark.is_null()) where += ":" + std::to_string(mark.line + 1);
  throw ConfigError(where + ": field '" + field + "': " + msg);
}

template <class T>
T scalar(const YAML::Node& node, const std::string& source, const std::string& field) {
  if (!node.IsScalar()) config_fail(source, node.Mark(), field, "expected a scalar");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    config_fail(source, node.Mark(), field, "cannot convert '" + node.Scalar() + "'");
  }
}

double number(const YAML::Node& node, const std::string& source, const std::string& field) {
  if (!node.IsScalar()) config_fail(source, node.Mark(), field, "expected a number");
  try {
    return parse_double(node.Scalar());
  } catch (const ConfigError&) {
    config_fail(source, node.Mark(), field, "not a number: '" + node.Scalar() + "'");
  }
}

std::string yaml_number(double v) {
  if (std::isnan(v)) return ".nan";
  if (std::isinf(v)) return v > 0 ? ".inf" : "-.inf";
  return format_double(v);
}

void emit_number(YAML::Emitter& e, const char* key, double v) { e << YAML::Key << key << YAML::Value << yaml_number(v); }

void emit_vector(YAML::Emitter& e, const char* key, const Vector& v) {
  e << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (Index i = 0; i < v.size(); ++i) e << yaml_number(v(i));
  e << YAML::EndSeq;
}

void emit_trail(YAML::Emitter& e, const TrailReport& t) {
  e << YAML::Key << t.name << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "bounded" << YAML::Value << t.bounded;
  emit_number(e, "first_quarter_max", t.first_quarter_max);
  emit_number(e, "last_quarter_max", t.last_quarter_max);
  e << YAML::EndMap;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  if (b < e && text[b] == '+') ++b;
  double v = 0.0;
  const auto res = std::from_chars(text.data() + b, text.data() + e, v);
  if (b == e || res.ec != std::errc() || res.ptr != text.data() + e) {
    throw ConfigError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

RunConfig parse_run_config(const std::string& text, const std::string& source, RunConfig cfg) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    config_fail(source, e.mark, "<document>", e.msg);
  }
  if (root.IsNull()) return cfg;
  if (!root.IsMap()) config_fail(source, root.Mark(), "<document>", "expected a mapping of key: value");

  ContinuationConfig& c = cfg.continuation;
  for (const auto& kv : root) {
    const std::string key = kv.first.as<std::string>();
    const YAML::Node& v = kv.second;
    if (key == "problem") {
      cfg.problem = scalar<std::string>(v, source, key);
    } else if (key == "algorithm") {
      try {
        cfg.algorithm = parse_formulation(scalar<std::string>(v, source, key));
      } catch (const ConfigError& e) {
        config_fail(source, v.Mark(), key, e.what());
      }
    } else if (key == "eps0") {
      c.eps0 = number(v, source, key);
    } else if (key == "alpha") {
      c.alpha = number(v, source, key);
    } else if (key == "tol") {
      c.tol = number(v, source, key);
    } else if (key == "mesh_tol") {
      c.mesh_tol = number(v, source, key);
    } else if (key == "mesh_points") {
      c.mesh_points = scalar<long>(v, source, key);
    } else if (key == "node_budget") {
      c.solver.max_nodes = scalar<long>(v, source, key);
      if (c.solver.max_nodes < 2) config_fail(source, v.Mark(), key, "must be at least 2");
    } else if (key == "max_stages") {
      c.max_stages = scalar<int>(v, source, key);
    } else if (key == "output_dir") {
      cfg.output_dir = scalar<std::string>(v, source, key);
    } else if (key == "trajectory_file") {
      cfg.trajectory_file = scalar<std::string>(v, source, key);
    } else if (key == "summary_file") {
      cfg.summary_file = scalar<std::string>(v, source, key);
    } else if (key == "trace") {
      cfg.trace = scalar<bool>(v, source, key);
    } else {
      config_fail(source, kv.first.Mark(), key, "unknown key");
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path, RunConfig defaults) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path, std::move(defaults));
}

TrajectoryTable trajectory_table(const OcpProblem& problem, const Trajectory& tr) {
  TrajectoryTable table;
  table.header.push_back("t");
  auto names = [&](const char* prefix, Index n) {
    for (Index i = 1; i <= n; ++i) table.header.push_back(prefix + std::to_string(i));
  };
  names("x", problem.nx);
  names("p", problem.nx);
  names("u", problem.nu);
  names("theta", problem.ng);
  names("eta", problem.nc);

  const Index N = tr.t.size();
  table.rows.resize(N, static_cast<Index>(table.header.size()));
  for (Index j = 0; j < N; ++j) {
    Index col = 0;
    table.rows(j, col++) = tr.t(j);
    for (const Matrix* m : {&tr.x, &tr.p, &tr.u, &tr.theta, &tr.eta}) {
      for (Index i = 0; i < m->rows(); ++i) table.rows(j, col++) = (*m)(i, j);
    }
  }
  return table;
}

void write_csv(std::ostream& out, const TrajectoryTable& table) {
  for (std::size_t k = 0; k < table.header.size(); ++k) out << (k ? "," : "") << table.header[k];
  out << '\n';
  for (Index j = 0; j < table.rows.rows(); ++j) {
    for (Index k = 0; k < table.rows.cols(); ++k) out << (k ? "," : "") << format_double(table.rows(j, k));
    out << '\n';
  }
}

TrajectoryTable read_csv(std::istream& in) {
  TrajectoryTable table;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw IoError("trajectory: missing header row");
  table.header = split(line, ',');
  const std::size_t width = table.header.size();
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != width) {
      throw IoError("trajectory line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                    " fields, got " + std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(width);
    for (const auto& f : fields) {
      try {
        row.push_back(parse_double(f));
      } catch (const ConfigError& e) {
        throw IoError("trajectory line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    rows.push_back(std::move(row));
  }
  table.rows.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (std::size_t k = 0; k < width; ++k) table.rows(static_cast<Index>(j), static_cast<Index>(k)) = rows[j][k];
  }
  return table;
}

void save_csv(const std::string& path, const TrajectoryTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_csv(out, table);
  if (!out) throw IoError("write to '" + path + "' failed");
}

TrajectoryTable load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_csv(in);
}

std::string run_summary_yaml(const OcpProblem& problem, const RunConfig& config, const ContinuationRun& run) {
  const ContinuationConfig& c = config.continuation;
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "problem" << YAML::Value << problem.name;
  e << YAML::Key << "algorithm" << YAML::Value << to_string(run.formulation);
  e << YAML::Key << "status" << YAML::Value << to_string(run.status);
  e << YAML::Key << "parameters" << YAML::Value << YAML::BeginMap;
  emit_number(e, "eps0", c.eps0);
  emit_number(e, "alpha", c.alpha);
  emit_number(e, "tol", c.tol);
  emit_number(e, "mesh_tol", c.mesh_tol);
  e << YAML::Key << "mesh_points" << YAML::Value << c.mesh_points;
  e << YAML::Key << "node_budget" << YAML::Value << c.solver.max_nodes;
  e << YAML::EndMap;

  e << YAML::Key << "stages" << YAML::Value << run.stage;
  e << YAML::Key << "planned_stages" << YAML::Value << planned_stage_count(c.eps0, c.alpha, c.tol);
  emit_number(e, "final_eps", run.eps);
  emit_number(e, "wall_time", run.wall_time);
  if (run.failed_stage >= 0) {
    e << YAML::Key << "failed_stage" << YAML::Value << run.failed_stage;
    e << YAML::Key << "failure" << YAML::Value << run.failure;
  }
  const StageDiagnostics* last = nullptr;
  for (const auto& s : run.stages) {
    if (s.success) last = &s;
  }
  if (last) {
    emit_number(e, "final_cost", last->cost);
    emit_number(e, "final_penalized_cost", last->penalized_cost);
    e << YAML::Key << "mesh_nodes" << YAML::Value << last->mesh_nodes;
  }
  emit_number(e, "kc_hat", run.kc_hat);
  if (problem.nc > 0 && !run.stages.empty()) emit_number(e, "worst_margin_ratio", run.worst_margin_ratio());

  const BoundednessReport b = boundedness_trail(run.stages);
  e << YAML::Key << "boundedness" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "all_bounded" << YAML::Value << b.all_bounded();
  emit_trail(e, b.l1_g);
  emit_trail(e, b.l1_c);
  emit_trail(e, b.p_inf);
  e << YAML::EndMap;

  e << YAML::Key << "stage_diagnostics" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : run.stages) {
    e << YAML::BeginMap;
    e << YAML::Key << "stage" << YAML::Value << s.stage;
    emit_number(e, "eps", s.eps);
    e << YAML::Key << "success" << YAML::Value << s.success;
    if (s.retried) e << YAML::Key << "retried" << YAML::Value << true;
    if (!s.success) {
      e << YAML::Key << "error" << YAML::Value << s.error;
      e << YAML::EndMap;
      continue;
    }
    emit_number(e, "cost", s.cost);
    emit_number(e, "penalized_cost", s.penalized_cost);
    emit_vector(e, "min_slack_g", s.min_slack_g);
    emit_vector(e, "min_slack_c", s.min_slack_c);
    emit_vector(e, "l1_g", s.l1_g);
    emit_vector(e, "l1_c", s.l1_c);
    emit_number(e, "p_inf", s.p_inf);
    emit_number(e, "p_jump", s.p_jump);
    emit_number(e, "complementarity_g", s.pointwise_comp_g);
    emit_number(e, "complementarity_c", s.pointwise_comp_c);
    e << YAML::Key << "stationarity" << YAML::Value << YAML::BeginMap;
    emit_number(e, "adjoint", s.stationarity.adjoint);
    emit_number(e, "hamiltonian", s.stationarity.hamiltonian);
    emit_number(e, "boundary", s.stationarity.boundary);
    emit_number(e, "complementarity_integral_g", s.stationarity.complementarity_g);
    emit_number(e, "complementarity_integral_c", s.stationarity.complementarity_c);
    e << YAML::Key << "signs_ok" << YAML::Value << s.stationarity.signs_ok;
    e << YAML::EndMap;
    emit_number(e, "state_change", s.state_change);
    emit_number(e, "cost_change", s.cost_change);
    e << YAML::Key << "newton_iterations" << YAML::Value << s.newton_iterations;
    e << YAML::Key << "mesh_nodes" << YAML::Value << s.mesh_nodes;
    emit_number(e, "bvp_residual", s.bvp_residual);
    emit_number(e, "wall_time", s.wall_time);
    e << YAML::EndMap;
  }
  e << YAML::EndSeq;
  e << YAML::EndMap;
  if (!e.good()) throw IoError(std::string("summary emitter: ") + e.GetLastError());
  return std::string(e.c_str()) + "\n";
}

void save_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace ipmocp::io

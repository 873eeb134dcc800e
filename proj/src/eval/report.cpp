#include "teleimp/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "teleimp/error.hpp"

namespace teleimp::report {

using nlohmann::json;

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string role_label(vlm::Role r) {
  switch (r) {
    case vlm::Role::Role1: return "Role 1";
    case vlm::Role::Role2: return "Role 2";
    case vlm::Role::Role3: return "Role 3";
  }
  return "";
}

const std::array<const char*, 6> kColumnKeys = {"entrance", "y_traverse", "x_traverse", "yz_slant",
                                                 "overall_with_slant", "overall_no_slant"};

std::array<const eval::AccuracyCell*, 6> columns(const eval::GridRow& row) {
  return {&row.phases[0], &row.phases[1], &row.phases[2], &row.phases[3], &row.with_slant, &row.no_slant};
}

json cell_json(const eval::AccuracyCell& c) {
  return {{"mean", c.mean}, {"spread", c.spread}, {"correct", c.correct}, {"n", c.n}};
}

eval::AccuracyCell cell_from(const json& j) {
  return {j.at("mean").get<double>(), j.at("spread").get<double>(), j.at("correct").get<int>(), j.at("n").get<int>()};
}

}  // namespace

std::optional<Format> parse_format(std::string_view text) {
  if (text == "csv") return Format::Csv;
  if (text == "markdown" || text == "markdown-table" || text == "md") return Format::Markdown;
  if (text == "plot-data" || text == "plot") return Format::PlotData;
  return std::nullopt;
}

std::string format_cell(const eval::AccuracyCell& cell) {
  return fmt("%.2f", cell.mean) + " ± " + fmt("%.2f", cell.spread);
}

std::string grid_csv(const eval::GridTable& table) {
  std::string out = "role,priors,detail";
  for (const auto* k : kColumnKeys) {
    const std::string key = k;
    out += "," + key + "_mean," + key + "_spread," + key + "_correct," + key + "_n";
  }
  out += '\n';
  for (const auto& row : table.rows) {
    out += std::string(vlm::to_string(row.config.role)) + ',' + std::string(vlm::to_string(row.config.priors)) + ',' +
           std::string(vlm::to_string(row.config.detail));
    for (const auto* c : columns(row))
      out += ',' + fmt("%.6f", c->mean) + ',' + fmt("%.6f", c->spread) + ',' + std::to_string(c->correct) + ',' +
             std::to_string(c->n);
    out += '\n';
  }
  return out;
}

std::string grid_markdown(const eval::GridTable& table) {
  std::string out =
      "| Role | Prior | Resolution | Entrance | Y-traverse | X-traverse | YZ Slant | Overall (With Slant) | "
      "Overall (No Slant) |\n";
  out += "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& row : table.rows) {
    out += "| " + role_label(row.config.role) + " | " + std::string(vlm::to_string(row.config.priors)) + " | " +
           std::string(vlm::to_string(row.config.detail)) + " |";
    for (const auto* c : columns(row)) out += ' ' + format_cell(*c) + " |";
    out += '\n';
  }
  return out;
}

std::string grid_plot_data(const eval::GridTable& table) {
  std::string out = "# index config column mean lower upper\n";
  int index = 0;
  for (const auto& row : table.rows) {
    const auto cols = columns(row);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const double m = cols[c]->mean, s = cols[c]->spread;
      out += std::to_string(index) + ' ' + vlm::to_string(row.config) + ' ' + kColumnKeys[c] + ' ' +
             fmt("%.6f", m) + ' ' + fmt("%.6f", std::max(0.0, m - s)) + ' ' + fmt("%.6f", std::min(1.0, m + s)) +
             '\n';
    }
    ++index;
  }
  return out;
}

json grid_to_json(const eval::GridTable& table, const std::vector<eval::TrialResult>* trials) {
  json rows = json::array();
  for (const auto& row : table.rows) {
    json phases = json::array();
    for (const auto& c : row.phases) phases.push_back(cell_json(c));
    rows.push_back({{"config", vlm::to_string(row.config)},
                    {"phases", phases},
                    {"with_slant", cell_json(row.with_slant)},
                    {"no_slant", cell_json(row.no_slant)}});
  }
  json j{{"trials", table.trials}, {"seed", table.seed}, {"tol", table.tol}, {"rows", rows}};
  if (trials) {
    json tj = json::array();
    for (const auto& t : *trials) {
      json e{{"config", vlm::to_string(t.config)},
             {"phase", std::string(to_string(t.phase))},
             {"trial", t.trial},
             {"correct", t.correct}};
      e["predicted"] = t.predicted ? json(to_canonical_string(*t.predicted)) : json(nullptr);
      if (!t.error.empty()) e["error"] = t.error;
      tj.push_back(std::move(e));
    }
    j["trial_results"] = std::move(tj);
  }
  return j;
}

eval::GridTable grid_from_json(const json& j) {
  eval::GridTable t;
  try {
    t.trials = j.at("trials").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.tol = j.at("tol").get<double>();
    for (const auto& r : j.at("rows")) {
      eval::GridRow row;
      const auto cfg = vlm::parse_config(r.at("config").get<std::string>());
      if (!cfg) throw Error(ErrorKind::Configuration, "unknown config " + r.at("config").dump());
      row.config = *cfg;
      const auto& ph = r.at("phases");
      if (ph.size() != 4) throw Error(ErrorKind::Configuration, "grid row needs four phase cells");
      for (std::size_t i = 0; i < 4; ++i) row.phases[i] = cell_from(ph[i]);
      row.with_slant = cell_from(r.at("with_slant"));
      row.no_slant = cell_from(r.at("no_slant"));
      t.rows.push_back(row);
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::Configuration, std::string("grid table: ") + ex.what());
  }
  return t;
}

std::vector<NamedFile> telemetry_panels(const sim::TelemetryLog& log, std::size_t decimation,
                                        const std::vector<eval::ReplayEvent>* events) {
  if (decimation == 0) decimation = 1;
  std::string ref = "# time ref_x ref_y ref_z\n", meas = "# time x y z\n",
              force = "# time fx fy fz normal\n", stiff = "# time k00 k01 k02 k10 k11 k12 k20 k21 k22\n";
  auto add3 = [](std::string& s, const Vec3& v) {
    for (int i = 0; i < 3; ++i) s += ' ' + fmt("%.9g", v[i]);
  };
  for (std::size_t i = 0; i < log.samples.size(); i += decimation) {
    const auto& s = log.samples[i];
    const std::string t = fmt("%.6f", s.time);
    ref += t;
    add3(ref, s.reference);
    ref += '\n';
    meas += t;
    add3(meas, s.position);
    meas += '\n';
    force += t;
    add3(force, s.force);
    force += ' ' + fmt("%.9g", s.normal_force) + '\n';
    stiff += t;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) stiff += ' ' + fmt("%.9g", s.stiffness(r, c));
    stiff += '\n';
  }
  std::vector<NamedFile> out{{"reference.dat", ref}, {"measured.dat", meas}, {"forces.dat", force},
                             {"stiffness.dat", stiff}};
  if (events) {
    std::string tr = "# time seq phase\n";
    for (const auto& e : *events)
      if (e.kind == "applied")
        tr += fmt("%.6f", e.t) + ' ' + std::to_string(e.seq) + ' ' +
              (e.phase ? std::string(to_string(*e.phase)) : std::string("none")) + '\n';
    out.push_back({"transitions.dat", tr});
  }
  return out;
}

sim::TelemetryLog telemetry_from_csv(std::string_view csv) {
  sim::TelemetryLog log;
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("time,ref_x", 0) != 0)
    throw Error(ErrorKind::Configuration, "telemetry CSV header missing");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::array<double, 22> v{};
    std::istringstream ls(line);
    std::string field;
    std::size_t n = 0;
    while (std::getline(ls, field, ',')) {
      if (n >= v.size()) break;
      try {
        std::size_t used = 0;
        v[n] = std::stod(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw Error(ErrorKind::Configuration, "telemetry CSV line " + std::to_string(lineno) + ": bad number");
      }
      ++n;
    }
    if (n != v.size()) throw Error(ErrorKind::Configuration, "telemetry CSV line " + std::to_string(lineno) + ": expected 22 fields");
    sim::TelemetrySample s;
    s.time = v[0];
    s.reference = Vec3(v[1], v[2], v[3]);
    s.position = Vec3(v[4], v[5], v[6]);
    s.velocity = Vec3(v[7], v[8], v[9]);
    s.force = Vec3(v[10], v[11], v[12]);
    for (int i = 0; i < 9; ++i) s.stiffness(i / 3, i % 3) = v[13 + static_cast<std::size_t>(i)];
    s.normal_force = s.force.norm();
    log.samples.push_back(s);
  }
  return log;
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace teleimp::report

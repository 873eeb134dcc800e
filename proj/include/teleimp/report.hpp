#pragma once

// Report emission for grid tables and replay telemetry: CSV, a markdown
// accuracy table and whitespace-separated plot data. Every writer formats
// numbers with fixed printf conversions so identical inputs give identical
// bytes.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "teleimp/grid.hpp"
#include "teleimp/groove_sim.hpp"
#include "teleimp/scenario.hpp"

namespace teleimp::report {

enum class Format { Csv, Markdown, PlotData };
std::optional<Format> parse_format(std::string_view text);

/// "0.93 ± 0.06"
std::string format_cell(const eval::AccuracyCell& cell);

/// One row per config: role,priors,detail then mean/spread/correct/n per column.
std::string grid_csv(const eval::GridTable& table);
/// Role | Prior | Resolution | four phases | Overall (With Slant) | Overall (No Slant)
std::string grid_markdown(const eval::GridTable& table);
/// Per config and column: index, mean, mean - SE, mean + SE (whisker plot input).
std::string grid_plot_data(const eval::GridTable& table);

nlohmann::json grid_to_json(const eval::GridTable& table, const std::vector<eval::TrialResult>* trials = nullptr);
eval::GridTable grid_from_json(const nlohmann::json& j);

struct NamedFile {
  std::string name;
  std::string content;
};

/// reference.dat, measured.dat, forces.dat, stiffness.dat, plus
/// transitions.dat when events are given (stiffness applied on the robot).
std::vector<NamedFile> telemetry_panels(const sim::TelemetryLog& log, std::size_t decimation = 1,
                                        const std::vector<eval::ReplayEvent>* events = nullptr);
/// Reads the CSV written by TelemetryLog::to_csv; normal force is not stored
/// there and comes back as the force magnitude.
sim::TelemetryLog telemetry_from_csv(std::string_view csv);

/// Error{Io} naming the path on failure.
void write_file(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace teleimp::report

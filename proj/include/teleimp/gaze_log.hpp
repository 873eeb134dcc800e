#pragma once

// Replayable gaze traces: CSV with header "time,u,v" (seconds, pixels).

#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace teleimp::gaze {

struct GazeSample {
  double time = 0.0;
  double u = 0.0, v = 0.0;
  bool operator==(const GazeSample&) const = default;
};

/// Sorted by time. Throws Error{Configuration} on malformed rows.
std::vector<GazeSample> parse_gaze_csv(std::string_view text);
std::vector<GazeSample> load_gaze_log(const std::filesystem::path& path);

/// Latest sample at or before `t`; nullopt before the first sample.
std::optional<GazeSample> gaze_at(const std::vector<GazeSample>& samples, double t);

}  // namespace teleimp::gaze

#pragma once

// Append-only JSON-lines store of generated stiffness matrices. Each line is
// one entry; the file is re-read on open so entries survive restarts.

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "teleimp/stiffness.hpp"

namespace teleimp::db {

struct StiffnessEntry {
  std::string id;  // assigned by put() when empty
  Mat3 matrix = Mat3::Identity();
  std::optional<TaskPhase> phase;  // classification label, if any
  double timestamp = 0.0;          // seconds since epoch
  std::string source_config;       // e.g. "Role3/Lab/High", or "manual"

  bool operator==(const StiffnessEntry&) const = default;
};

class StiffnessDb {
 public:
  /// Opens (creating if needed) the file at `path`. Throws Error{Io} on
  /// unreadable files and Error{Configuration} on corrupt lines.
  explicit StiffnessDb(std::filesystem::path path);

  /// Validates the matrix, assigns an id if missing, appends and flushes.
  StiffnessEntry put(StiffnessEntry entry);
  /// Throws Error{NotFound} for unknown ids.
  StiffnessEntry get(const std::string& id) const;
  /// Newest first (by insertion order).
  std::vector<StiffnessEntry> list() const;
  std::size_t size() const;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::vector<StiffnessEntry> entries_;
  std::size_t next_id_ = 1;
};

/// JSON text of an entry including its ellipsoid axes and magnitudes.
std::string entry_to_json(const StiffnessEntry& e);

}  // namespace teleimp::db

#include "teleimp/stiffness_db.hpp"

#include <fstream>

#include "json.hpp"
#include "teleimp/error.hpp"

namespace teleimp::db {

namespace {

using nlohmann::json;

json matrix_json(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

Mat3 matrix_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::Configuration, "matrix must be 3x3");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    if (!j[r].is_array() || j[r].size() != 3) throw Error(ErrorKind::Configuration, "matrix must be 3x3");
    for (int c = 0; c < 3; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

json to_json(const StiffnessEntry& e) {
  json j{{"id", e.id},
         {"matrix", matrix_json(e.matrix)},
         {"phase", e.phase ? json(std::string(to_string(*e.phase))) : json(nullptr)},
         {"timestamp", e.timestamp},
         {"source_config", e.source_config}};
  const auto ell = ellipsoid_from_stiffness(StiffnessMatrix(e.matrix));
  json axes = json::array();
  for (const auto& a : ell.axes) axes.push_back({a.x(), a.y(), a.z()});
  j["ellipsoid"] = {{"axes", axes}, {"magnitudes", ell.magnitudes}};
  return j;
}

StiffnessEntry from_json(const json& j) {
  StiffnessEntry e;
  e.id = j.at("id").get<std::string>();
  e.matrix = matrix_from(j.at("matrix"));
  if (j.contains("phase") && !j["phase"].is_null()) {
    e.phase = parse_phase(j["phase"].get<std::string>());
    if (!e.phase) throw Error(ErrorKind::Configuration, "unknown phase label in stiffness db");
  }
  e.timestamp = j.value("timestamp", 0.0);
  e.source_config = j.value("source_config", std::string{});
  return e;
}

std::size_t numeric_suffix(const std::string& id) {
  if (id.size() < 2 || id[0] != 'k') return 0;
  try {
    return std::stoull(id.substr(1));
  } catch (...) {
    return 0;
  }
}

}  // namespace

std::string entry_to_json(const StiffnessEntry& e) { return to_json(e).dump(); }

StiffnessDb::StiffnessDb(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream create(path_, std::ios::app);
    if (!create) throw Error(ErrorKind::Io, "cannot create " + path_.string());
    return;
  }
  std::ifstream in(path_);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path_.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      entries_.push_back(from_json(json::parse(line)));
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::Configuration, path_.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
    next_id_ = std::max(next_id_, numeric_suffix(entries_.back().id) + 1);
  }
}

StiffnessEntry StiffnessDb::put(StiffnessEntry entry) {
  (void)StiffnessMatrix(entry.matrix);  // throws on invalid input
  std::lock_guard lk(mutex_);
  if (entry.id.empty()) entry.id = "k" + std::to_string(next_id_++);
  std::ofstream out(path_, std::ios::app);
  out << to_json(entry).dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path_.string());
  entries_.push_back(entry);
  return entry;
}

StiffnessEntry StiffnessDb::get(const std::string& id) const {
  std::lock_guard lk(mutex_);
  // later entries win if an id was ever reused
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
    if (it->id == id) return *it;
  throw Error(ErrorKind::NotFound, "no stiffness entry " + id);
}

std::vector<StiffnessEntry> StiffnessDb::list() const {
  std::lock_guard lk(mutex_);
  return {entries_.rbegin(), entries_.rend()};
}

std::size_t StiffnessDb::size() const {
  std::lock_guard lk(mutex_);
  return entries_.size();
}

}  // namespace teleimp::db

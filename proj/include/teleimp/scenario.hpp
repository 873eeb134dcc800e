#pragma once

// Scripted operator sessions replayed in lockstep against the simulated
// robot: the same Session, RobotLink and RobotEndpoint as the live backend,
// joined by an in-process datagram pair and driven by simulation time.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "teleimp/groove_sim.hpp"
#include "teleimp/model.hpp"
#include "teleimp/session.hpp"

namespace teleimp::eval {

enum class EventKind { Waypoint, Utterance, Capture };

struct ScenarioEvent {
  double t = 0.0;
  EventKind kind = EventKind::Waypoint;
  Vec3 position = Vec3::Zero();  // waypoint
  std::string text;              // utterance
  std::optional<double> u, v;    // capture gaze; image center when absent
  std::optional<Vec3> look_at;   // capture camera target; the peg when absent
};

struct Scenario {
  std::string name;
  vlm::PromptConfig config;
  std::uint64_t seed = 0;
  std::optional<double> duration;  // defaults to 1 s past the last event
  std::vector<ScenarioEvent> events;

  std::vector<sim::Waypoint> waypoints() const;
  double end_time() const;

  /// {"name", "config", "seed", "duration", "events": [{"t", "kind", ...}]}
  static Scenario from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static Scenario load(const std::filesystem::path& path);
};

/// Forward traversal with one command per phase: an entry request, then a
/// "groove axis" request at each later phase start.
Scenario stiffness_transition_scenario(const sim::GrooveGeometry& geom);
/// Forward through entrance, y and x with a snapshot-backed question per
/// phase, then the reverse path with one backtrack request per phase.
Scenario backtrack_scenario(const sim::GrooveGeometry& geom);

struct ReplayOptions {
  double dt = 1e-3;
  int pose_every = 10;       // steps; 100 Hz commands at 1 ms
  int telemetry_every = 10;  // steps
  sim::SimParams params;
  scene::Environment camera_environment = scene::Environment::Lab;
  double camera_fov = 0.12;
};

struct ReplayEvent {
  double t = 0.0;
  std::string kind;  // utterance, capture, stiffness, applied, error
  std::string text;
  std::optional<TaskPhase> phase;
  std::optional<Mat3> matrix;
  std::uint32_t seq = 0;
};

struct ReplayResult {
  sim::TelemetryLog log;
  std::vector<ReplayEvent> events;
  std::vector<backend::CommandOutcome> outcomes;
  /// (time, phase) whenever the robot starts applying a new stiffness.
  std::vector<std::pair<double, std::optional<TaskPhase>>> applied;
  std::size_t retransmissions = 0;
};

ReplayResult replay_scenario(const Scenario& scenario, const sim::GrooveGeometry& geom, vlm::ModelClient& model,
                             const vlm::ExemplarStore& exemplars, const ReplayOptions& options = {});

nlohmann::json events_to_json(const ReplayResult& result);

std::string_view to_string(EventKind kind);

}  // namespace teleimp::eval

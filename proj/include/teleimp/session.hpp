#pragma once

// Operator session: Idle/Engaged gating, command handling through the model,
// workspace re-indexing and an event feed for UI clients.

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "teleimp/error.hpp"
#include "teleimp/model.hpp"
#include "teleimp/prompt.hpp"
#include "teleimp/response.hpp"
#include "teleimp/robot_link.hpp"
#include "teleimp/snapshot.hpp"
#include "teleimp/stiffness_db.hpp"

namespace teleimp::backend {

enum class Mode { Idle, Engaged };
std::string_view to_string(Mode m);

inline constexpr auto kTelemetryFreshness = std::chrono::milliseconds(200);

/// Fan-out of JSON event strings to subscribers (WebSocket connections).
class EventHub {
 public:
  using Callback = std::function<void(const std::string&)>;
  std::size_t subscribe(Callback cb);
  void unsubscribe(std::size_t token);
  void publish(const std::string& event) const;
  std::size_t subscribers() const;

 private:
  mutable std::mutex mutex_;
  std::size_t next_ = 1;
  std::map<std::size_t, Callback> subs_;
};

struct CommandOutcome {
  bool ok = false;
  std::string confirmation;  // always operator-readable
  std::optional<ErrorKind> error;
  std::string error_message;
  std::string raw_response;
  std::optional<StiffnessMatrix> stiffness;
  std::uint32_t stiffness_seq = 0;
  std::string db_id;
  std::optional<TaskPhase> phase;  // classification of the new matrix
};

struct SessionView {
  std::string id;
  Mode mode = Mode::Idle;
  StiffnessMatrix active_stiffness = StiffnessMatrix::isotropic(100.0);
  std::vector<vlm::ConversationTurn> history;
  Vec3 workspace_offset = Vec3::Zero();
  vlm::PromptConfig config;
  std::optional<std::string> pending_snapshot;
  std::optional<robot::TelemetryView> telemetry;
};

struct SessionDeps {
  robot::RobotLink* link = nullptr;              // required
  vlm::ModelClient* model = nullptr;             // required
  const vlm::ExemplarStore* exemplars = nullptr; // required
  db::StiffnessDb* db = nullptr;                 // optional
  capture::SceneSource* scene = nullptr;         // optional; capture fails without it
  capture::SnapshotStore* snapshots = nullptr;   // required
  std::function<double()> wall_clock;            // seconds; defaults to system clock
  std::function<robot::Clock::time_point()> steady_clock;  // defaults to steady_clock::now
};

/// offset such that local_zero maps onto the robot's current position
Vec3 workspace_offset_for(const Vec3& robot_position, const Vec3& local_zero);

class Session {
 public:
  Session(std::string id, SessionDeps deps, vlm::PromptConfig config, std::uint64_t seed = 0);

  const std::string& id() const { return id_; }

  /// Never throws for model/parse problems; the outcome carries them. Calls
  /// are serialized: one model request in flight per session.
  CommandOutcome handle_command(std::string_view utterance,
                                std::shared_ptr<const vlm::GazeSnapshot> snapshot = nullptr);
  /// Uses the snapshot captured most recently and not yet consumed.
  CommandOutcome handle_command_with_pending(std::string_view utterance);

  /// Operator-corrected matrix; same effects as a successful command.
  CommandOutcome apply_stiffness(const Mat3& k, std::string_view source);

  std::shared_ptr<const vlm::GazeSnapshot> capture(double u, double v);

  /// Sends StartStop only on an actual transition.
  void set_engaged(bool engaged);
  /// Returns false (and sends nothing) while Idle.
  bool submit_pose(const Vec3& local_input);
  /// Error{ReindexRefused} when telemetry is missing or older than 200 ms.
  Vec3 reindex(const Vec3& local_zero);

  SessionView view() const;
  Mode mode() const;
  StiffnessMatrix active_stiffness() const;
  EventHub& events() { return events_; }

 private:
  CommandOutcome commit(const StiffnessMatrix& k, const std::string& raw, std::string confirmation,
                        std::string_view source, std::optional<vlm::ConversationTurn> operator_turn);

  std::string id_;
  SessionDeps deps_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;

  std::mutex command_mutex_;
  mutable std::mutex state_mutex_;
  Mode mode_ = Mode::Idle;
  StiffnessMatrix active_ = StiffnessMatrix::isotropic(100.0);
  std::vector<vlm::ConversationTurn> history_;
  Vec3 offset_ = Vec3::Zero();
  vlm::PromptConfig config_;
  std::shared_ptr<const vlm::GazeSnapshot> pending_snapshot_;
  EventHub events_;
};

class SessionManager {
 public:
  explicit SessionManager(SessionDeps deps) : deps_(std::move(deps)) {}
  std::shared_ptr<Session> create(const vlm::PromptConfig& config, std::uint64_t seed = 0);
  /// nullptr when unknown
  std::shared_ptr<Session> find(const std::string& id) const;
  std::vector<std::shared_ptr<Session>> all() const;

 private:
  SessionDeps deps_;
  mutable std::mutex mutex_;
  std::size_t next_ = 1;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// JSON encodings shared by the HTTP and WebSocket layers.
std::string telemetry_event_json(const wire::Telemetry& t);
std::string stiffness_event_json(const CommandOutcome& outcome);

}  // namespace teleimp::backend

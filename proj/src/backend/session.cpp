#include "teleimp/session.hpp"

#include "json.hpp"

namespace teleimp::backend {

using nlohmann::json;

std::string_view to_string(Mode m) { return m == Mode::Idle ? "idle" : "engaged"; }

std::size_t EventHub::subscribe(Callback cb) {
  std::lock_guard lk(mutex_);
  subs_[next_] = std::move(cb);
  return next_++;
}

void EventHub::unsubscribe(std::size_t token) {
  std::lock_guard lk(mutex_);
  subs_.erase(token);
}

void EventHub::publish(const std::string& event) const {
  std::vector<Callback> targets;
  {
    std::lock_guard lk(mutex_);
    for (const auto& [_, cb] : subs_) targets.push_back(cb);
  }
  for (const auto& cb : targets) cb(event);
}

std::size_t EventHub::subscribers() const {
  std::lock_guard lk(mutex_);
  return subs_.size();
}

namespace {

json mat_json(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

std::string telemetry_event_json(const wire::Telemetry& t) {
  return json{{"type", "telemetry"},
              {"time", t.time},
              {"position", vec_json(t.position)},
              {"velocity", vec_json(t.velocity)},
              {"force", vec_json(t.force)},
              {"stiffness_seq", t.reserved[0]}}
      .dump();
}

std::string stiffness_event_json(const CommandOutcome& o) {
  json j{{"type", "stiffness"}, {"seq", o.stiffness_seq}, {"confirmation", o.confirmation}, {"db_id", o.db_id}};
  j["matrix"] = o.stiffness ? mat_json(o.stiffness->matrix()) : json(nullptr);
  j["phase"] = o.phase ? json(std::string(to_string(*o.phase))) : json(nullptr);
  if (o.stiffness) {
    const auto ell = ellipsoid_from_stiffness(*o.stiffness);
    json axes = json::array();
    for (const auto& a : ell.axes) axes.push_back(vec_json(a));
    j["ellipsoid"] = {{"axes", axes}, {"magnitudes", ell.magnitudes}};
  }
  return j.dump();
}

Vec3 workspace_offset_for(const Vec3& robot_position, const Vec3& local_zero) {
  const Vec3 off = robot_position - local_zero;
  if (!off.allFinite()) throw Error(ErrorKind::Numerical, "non-finite workspace offset");
  return off;
}

Session::Session(std::string id, SessionDeps deps, vlm::PromptConfig config, std::uint64_t seed)
    : id_(std::move(id)), deps_(std::move(deps)), seed_(seed), config_(config) {
  if (!deps_.link || !deps_.model || !deps_.exemplars || !deps_.snapshots)
    throw Error(ErrorKind::Configuration, "session is missing a required dependency");
  if (!deps_.wall_clock)
    deps_.wall_clock = [] {
      return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
    };
  if (!deps_.steady_clock) deps_.steady_clock = [] { return robot::Clock::now(); };
}

CommandOutcome Session::commit(const StiffnessMatrix& k, const std::string& raw, std::string confirmation,
                               std::string_view source, std::optional<vlm::ConversationTurn> operator_turn) {
  CommandOutcome out;
  out.ok = true;
  out.raw_response = raw;
  out.confirmation = std::move(confirmation);
  out.stiffness = k;
  out.phase = classify_stiffness(k);
  const double now = deps_.wall_clock();
  out.stiffness_seq = deps_.link->send_stiffness(k, deps_.steady_clock());
  if (deps_.db) {
    db::StiffnessEntry e;
    e.matrix = k.matrix();
    e.phase = out.phase;
    e.timestamp = now;
    e.source_config = std::string(source);
    try {
      out.db_id = deps_.db->put(e).id;
    } catch (const Error& ex) {
      // the robot already has the matrix; persistence failure is reported, not fatal
      out.error = ex.kind();
      out.error_message = std::string("stiffness applied but not stored: ") + ex.what();
    }
  }
  {
    std::lock_guard lk(state_mutex_);
    active_ = k;
    if (operator_turn) {
      history_.push_back(std::move(*operator_turn));
      history_.push_back({vlm::Author::Model, raw, std::nullopt, now, nullptr});
    }
  }
  events_.publish(stiffness_event_json(out));
  return out;
}

CommandOutcome Session::handle_command(std::string_view utterance,
                                       std::shared_ptr<const vlm::GazeSnapshot> snapshot) {
  std::lock_guard cmd(command_mutex_);
  CommandOutcome fail;
  auto retained = [&](ErrorKind kind, const std::string& why) {
    fail.ok = false;
    fail.error = kind;
    fail.error_message = why;
    fail.confirmation = "Previous stiffness retained: " + why;
    return fail;
  };
  if (utterance.find_first_not_of(" \t\r\n") == std::string_view::npos)
    return retained(ErrorKind::Configuration, "empty command");

  std::vector<vlm::ConversationTurn> history;
  vlm::PromptConfig config;
  {
    std::lock_guard lk(state_mutex_);
    history = history_;
    config = config_;
  }
  const double now = deps_.wall_clock();
  std::string raw;
  try {
    const auto payload = vlm::build_prompt(config, history, snapshot.get(), utterance, *deps_.exemplars, now);
    raw = vlm::call_model(payload, *deps_.model, {seed_ + calls_++, std::nullopt});
  } catch (const Error& e) {
    return retained(e.kind(), std::string("model call failed (") + std::string(to_string(e.kind())) + "): " + e.what());
  }
  fail.raw_response = raw;
  vlm::StiffnessReply reply{StiffnessMatrix::isotropic(100.0), {}, raw};
  try {
    reply = vlm::parse_stiffness_response(raw);
  } catch (const Error& e) {
    return retained(e.kind(), std::string("could not use the model reply (") + std::string(to_string(e.kind())) +
                                  "): " + e.what());
  }
  vlm::ConversationTurn op{vlm::Author::Operator, std::string(utterance), std::nullopt, now, nullptr};
  if (snapshot) {
    op.image_ref = snapshot->url;
    op.image = std::make_shared<const Image>(snapshot->image);
  }
  return commit(reply.matrix, raw, reply.confirmation_text, vlm::to_string(config), std::move(op));
}

CommandOutcome Session::handle_command_with_pending(std::string_view utterance) {
  std::shared_ptr<const vlm::GazeSnapshot> snap;
  {
    std::lock_guard lk(state_mutex_);
    snap = pending_snapshot_;
  }
  auto out = handle_command(utterance, snap);
  if (out.ok) {
    std::lock_guard lk(state_mutex_);
    if (pending_snapshot_ == snap) pending_snapshot_.reset();
  }
  return out;
}

CommandOutcome Session::apply_stiffness(const Mat3& k, std::string_view source) {
  std::lock_guard cmd(command_mutex_);
  try {
    const StiffnessMatrix valid(k);
    return commit(valid, vlm::format_stiffness_block(valid), "Stiffness set manually.", source, std::nullopt);
  } catch (const Error& e) {
    CommandOutcome out;
    out.error = e.kind();
    out.error_message = e.what();
    out.confirmation = std::string("Previous stiffness retained: ") + e.what();
    return out;
  }
}

std::shared_ptr<const vlm::GazeSnapshot> Session::capture(double u, double v) {
  if (!deps_.scene) throw Error(ErrorKind::Capture, "no scene source configured");
  auto snap = capture::capture_snapshot(*deps_.scene, u, v, *deps_.snapshots);
  std::lock_guard lk(state_mutex_);
  pending_snapshot_ = snap;
  return snap;
}

void Session::set_engaged(bool engaged) {
  bool changed = false;
  {
    std::lock_guard lk(state_mutex_);
    const Mode target = engaged ? Mode::Engaged : Mode::Idle;
    if (mode_ != target) {
      // sent under the lock so no pose can slip between StartStop and the mode change
      deps_.link->send_start_stop(engaged);
      mode_ = target;
      changed = true;
    }
  }
  if (changed) events_.publish(json{{"type", "mode"}, {"mode", engaged ? "engaged" : "idle"}}.dump());
}

bool Session::submit_pose(const Vec3& local_input) {
  if (!local_input.allFinite()) throw Error(ErrorKind::Numerical, "non-finite pose input");
  std::lock_guard lk(state_mutex_);
  if (mode_ != Mode::Engaged) return false;
  deps_.link->send_pose(local_input + offset_);
  return true;
}

Vec3 Session::reindex(const Vec3& local_zero) {
  const auto t = deps_.link->latest_telemetry();
  const auto now = deps_.steady_clock();
  if (!t) throw Error(ErrorKind::ReindexRefused, "no telemetry received yet");
  if (now - t->received >= kTelemetryFreshness)
    throw Error(ErrorKind::ReindexRefused,
                "telemetry is " +
                    std::to_string(std::chrono::duration_cast<std::chrono::milliseconds>(now - t->received).count()) +
                    " ms old");
  const Vec3 off = workspace_offset_for(t->data.position, local_zero);
  std::lock_guard lk(state_mutex_);
  offset_ = off;
  return off;
}

SessionView Session::view() const {
  SessionView v;
  v.id = id_;
  v.telemetry = deps_.link->latest_telemetry();
  std::lock_guard lk(state_mutex_);
  v.mode = mode_;
  v.active_stiffness = active_;
  v.history = history_;
  v.workspace_offset = offset_;
  v.config = config_;
  if (pending_snapshot_) v.pending_snapshot = pending_snapshot_->id;
  return v;
}

Mode Session::mode() const {
  std::lock_guard lk(state_mutex_);
  return mode_;
}

StiffnessMatrix Session::active_stiffness() const {
  std::lock_guard lk(state_mutex_);
  return active_;
}

std::shared_ptr<Session> SessionManager::create(const vlm::PromptConfig& config, std::uint64_t seed) {
  std::lock_guard lk(mutex_);
  const std::string id = "session-" + std::to_string(next_++);
  auto s = std::make_shared<Session>(id, deps_, config, seed);
  sessions_[id] = s;
  return s;
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lk(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::vector<std::shared_ptr<Session>> SessionManager::all() const {
  std::lock_guard lk(mutex_);
  std::vector<std::shared_ptr<Session>> out;
  for (const auto& [_, s] : sessions_) out.push_back(s);
  return out;
}

}  // namespace teleimp::backend

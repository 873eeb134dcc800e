#include "teleimp/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "teleimp/error.hpp"
#include "teleimp/robot_link.hpp"
#include "teleimp/scene.hpp"
#include "teleimp/snapshot.hpp"
#include "teleimp/transport.hpp"

namespace teleimp::eval {

using nlohmann::json;

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Waypoint: return "waypoint";
    case EventKind::Utterance: return "utterance";
    case EventKind::Capture: return "capture";
  }
  return "waypoint";
}

namespace {

constexpr std::string_view kBacktrackRequest = "I want to backtrack";

Vec3 vec_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::Configuration, std::string(what) + " needs [x, y, z]");
  Vec3 v(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  if (!v.allFinite()) throw Error(ErrorKind::Configuration, std::string(what) + " is not finite");
  return v;
}

json vec_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json mat_to_json(const Mat3& m) {
  json rows = json::array();
  for (int i = 0; i < 3; ++i) rows.push_back(json::array({m(i, 0), m(i, 1), m(i, 2)}));
  return rows;
}

void sort_events(std::vector<ScenarioEvent>& events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const ScenarioEvent& a, const ScenarioEvent& b) { return a.t < b.t; });
}

void add_waypoints(Scenario& s, const std::vector<sim::Waypoint>& w) {
  for (const auto& p : w) s.events.push_back({p.time, EventKind::Waypoint, p.position, {}, {}, {}, {}});
}

void add_utterance(Scenario& s, double t, std::string text) {
  ScenarioEvent e;
  e.t = t;
  e.kind = EventKind::Utterance;
  e.text = std::move(text);
  s.events.push_back(std::move(e));
}

void add_capture(Scenario& s, double t, const Vec3& look_at) {
  ScenarioEvent e;
  e.t = t;
  e.kind = EventKind::Capture;
  e.look_at = look_at;
  s.events.push_back(std::move(e));
}

}  // namespace

std::vector<sim::Waypoint> Scenario::waypoints() const {
  std::vector<sim::Waypoint> out;
  for (const auto& e : events)
    if (e.kind == EventKind::Waypoint) out.push_back({e.t, e.position});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  return out;
}

double Scenario::end_time() const {
  if (duration) return *duration;
  double last = 0.0;
  for (const auto& e : events) last = std::max(last, e.t);
  return last + 1.0;
}

Scenario Scenario::from_json(const json& j) {
  Scenario s;
  try {
    s.name = j.value("name", "scenario");
    if (j.contains("config")) {
      const auto c = vlm::parse_config(j.at("config").get<std::string>());
      if (!c) throw Error(ErrorKind::Configuration, "unknown prompt configuration " + j.at("config").dump());
      s.config = *c;
    }
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("duration")) {
      s.duration = j.at("duration").get<double>();
      if (!(*s.duration > 0) || !std::isfinite(*s.duration))
        throw Error(ErrorKind::Configuration, "duration must be positive");
    }
    for (const auto& ej : j.value("events", json::array())) {
      ScenarioEvent e;
      e.t = ej.at("t").get<double>();
      if (!(e.t >= 0) || !std::isfinite(e.t)) throw Error(ErrorKind::Configuration, "event time must be >= 0");
      const std::string kind = ej.at("kind");
      if (kind == "waypoint") {
        e.kind = EventKind::Waypoint;
        e.position = vec_from_json(ej.at("position"), "waypoint position");
      } else if (kind == "utterance") {
        e.kind = EventKind::Utterance;
        e.text = ej.at("text").get<std::string>();
      } else if (kind == "capture") {
        e.kind = EventKind::Capture;
        if (ej.contains("u")) e.u = ej.at("u").get<double>();
        if (ej.contains("v")) e.v = ej.at("v").get<double>();
        if (ej.contains("look_at")) e.look_at = vec_from_json(ej.at("look_at"), "look_at");
      } else {
        throw Error(ErrorKind::Configuration, "unknown event kind '" + kind + "'");
      }
      s.events.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::Configuration, std::string("scenario: ") + ex.what());
  }
  sort_events(s.events);
  return s;
}

json Scenario::to_json() const {
  json events_j = json::array();
  for (const auto& e : events) {
    json ej{{"t", e.t}, {"kind", std::string(to_string(e.kind))}};
    switch (e.kind) {
      case EventKind::Waypoint: ej["position"] = vec_to_json(e.position); break;
      case EventKind::Utterance: ej["text"] = e.text; break;
      case EventKind::Capture:
        if (e.u) ej["u"] = *e.u;
        if (e.v) ej["v"] = *e.v;
        if (e.look_at) ej["look_at"] = vec_to_json(*e.look_at);
        break;
    }
    events_j.push_back(std::move(ej));
  }
  json j{{"name", name}, {"config", vlm::to_string(config)}, {"seed", seed}, {"events", std::move(events_j)}};
  if (duration) j["duration"] = *duration;
  return j;
}

Scenario Scenario::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Configuration, "cannot open scenario " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& ex) {
    throw Error(ErrorKind::Configuration, path.string() + ": " + ex.what());
  }
}

Scenario stiffness_transition_scenario(const sim::GrooveGeometry& geom) {
  const auto tr = sim::scripted_traversal(geom);
  Scenario s;
  s.name = "stiffness-transitions";
  s.duration = tr.end_time;
  add_waypoints(s, tr.waypoints);
  for (std::size_t i = 0; i < tr.phase_starts.size(); ++i)
    add_utterance(s, tr.phase_starts[i].first,
                  i == 0 ? "I want to enter the groove" : "Increase stiffness along the groove axis");
  sort_events(s.events);
  return s;
}

Scenario backtrack_scenario(const sim::GrooveGeometry& geom) {
  const sim::TraversalOptions opts;
  const auto tr = sim::scripted_traversal(geom, opts);
  if (tr.phase_starts.size() < 4) throw Error(ErrorKind::Configuration, "backtrack scenario needs four phases");
  const double turn = tr.phase_starts[3].first;  // end of the x run
  const double dwell = opts.dwell;

  std::vector<sim::Waypoint> forward;
  for (const auto& w : tr.waypoints)
    if (w.time < turn) forward.push_back(w);
  forward.push_back({turn, sim::reference_at(tr.waypoints, turn)});

  Scenario s;
  s.name = "backtrack";
  std::vector<sim::Waypoint> path = forward;
  // mirror in time: the reverse leg retraces the forward one after a pause
  for (auto it = forward.rbegin(); it != forward.rend(); ++it)
    path.push_back({turn + dwell + (turn - it->time), it->position});
  add_waypoints(s, path);

  for (std::size_t i = 0; i < 3; ++i) {
    const auto [t, phase] = tr.phase_starts[i];
    add_capture(s, t, scene::phase_view_target(geom, phase, 0.3));
    add_utterance(s, t, std::string(vlm::kStandardQuestion));
  }
  // one request when turning around, then one on reaching each earlier phase start
  add_utterance(s, turn + 0.5 * dwell, std::string(kBacktrackRequest));
  for (std::size_t i = 2; i >= 1; --i) {
    const double start = tr.phase_starts[i].first;
    add_utterance(s, 2 * turn - start + 0.5 * dwell, std::string(kBacktrackRequest));
  }
  s.duration = 2 * turn + dwell + 3.0;
  sort_events(s.events);
  return s;
}

ReplayResult replay_scenario(const Scenario& scenario, const sim::GrooveGeometry& geom, vlm::ModelClient& model,
                             const vlm::ExemplarStore& exemplars, const ReplayOptions& options) {
  if (!(options.dt > 0 && options.dt <= sim::kMaxStep) || options.pose_every < 1)
    throw Error(ErrorKind::Configuration, "replay dt or pose rate out of range");

  const auto waypoints = scenario.waypoints();
  const Vec3 start = waypoints.empty() ? geom.track_start() : waypoints.front().position;
  sim::RobotState init;
  init.position = start;
  init.reference = start;
  sim::Simulator simulator(geom, init, options.params);

  auto [backend_end, robot_end] = net::make_loopback_pair();
  robot::RobotLink link(*backend_end);
  robot::RobotEndpoint endpoint(*robot_end, simulator, {options.dt, options.telemetry_every});

  scene::CameraView view;
  view.environment = options.camera_environment;
  view.field_of_view = options.camera_fov;
  capture::SimulatedCamera camera(geom, view);
  std::optional<Vec3> look_at;
  camera.follow([&]() -> std::optional<Vec3> {
    if (look_at) return std::nullopt;
    return simulator.snapshot().position;
  });
  capture::SnapshotStore snapshots;

  // simulation time stands in for both clocks
  double now = 0.0;
  const auto epoch = robot::Clock::time_point{};
  auto steady = [&] {
    return epoch + std::chrono::duration_cast<robot::Clock::duration>(std::chrono::duration<double>(now));
  };

  backend::SessionDeps deps;
  deps.link = &link;
  deps.model = &model;
  deps.exemplars = &exemplars;
  deps.scene = &camera;
  deps.snapshots = &snapshots;
  deps.wall_clock = [&] { return now; };
  deps.steady_clock = steady;
  backend::Session session("replay", deps, scenario.config, scenario.seed);

  ReplayResult result;
  auto log_event = [&](std::string kind, std::string text) {
    ReplayEvent ev;
    ev.t = now;
    ev.kind = std::move(kind);
    ev.text = std::move(text);
    result.events.push_back(std::move(ev));
  };

  session.set_engaged(true);

  std::vector<const ScenarioEvent*> actions;
  for (const auto& e : scenario.events)
    if (e.kind != EventKind::Waypoint) actions.push_back(&e);
  std::stable_sort(actions.begin(), actions.end(), [](auto* a, auto* b) { return a->t < b->t; });
  std::size_t next_action = 0;

  const auto steps = static_cast<long>(std::ceil(scenario.end_time() / options.dt - 1e-9));
  std::uint32_t applied_seq = simulator.applied_stiffness_seq();
  result.log.samples.reserve(static_cast<std::size_t>(steps));

  for (long i = 0; i < steps; ++i) {
    now = static_cast<double>(i) * options.dt;

    for (; next_action < actions.size() && actions[next_action]->t <= now + 1e-9; ++next_action) {
      const auto& e = *actions[next_action];
      if (e.kind == EventKind::Capture) {
        try {
          if (e.look_at) {
            look_at = e.look_at;
            auto v = camera.view();
            v.target = *e.look_at;
            v.peg = simulator.snapshot().position;
            camera.set_view(v);
          } else {
            look_at.reset();
          }
          const auto cv = camera.view();
          const auto snap = session.capture(e.u.value_or(cv.width / 2.0), e.v.value_or(cv.height / 2.0));
          ReplayEvent ev;
          ev.t = now;
          ev.kind = "capture";
          ev.text = snap->url;
          ev.phase = snap->scene_phase;
          result.events.push_back(std::move(ev));
        } catch (const Error& err) {
          log_event("error", std::string(to_string(err.kind())) + ": " + err.what());
        }
      } else {
        log_event("utterance", e.text);
        auto outcome = session.handle_command_with_pending(e.text);
        ReplayEvent ev;
        ev.t = now;
        ev.kind = outcome.ok ? "stiffness" : "error";
        ev.text = outcome.confirmation;
        ev.phase = outcome.phase;
        if (outcome.stiffness) ev.matrix = outcome.stiffness->matrix();
        ev.seq = outcome.stiffness_seq;
        result.events.push_back(std::move(ev));
        result.outcomes.push_back(std::move(outcome));
      }
    }

    if (!waypoints.empty() && i % options.pose_every == 0) session.submit_pose(sim::reference_at(waypoints, now));

    std::pair<sim::RobotState, sim::ContactReport> stepped;
    try {
      stepped = endpoint.step();
    } catch (const Error& err) {
      // keep what was recorded so far
      log_event("error", std::string(to_string(err.kind())) + ": " + err.what());
      break;
    }
    const auto& [state, contact] = stepped;
    now = state.time;
    while (auto bytes = backend_end->receive(std::chrono::milliseconds(0))) link.on_datagram(*bytes, steady());
    link.tick(steady());

    result.log.samples.push_back({state.time, state.reference, state.position, state.velocity, contact.force,
                                  state.stiffness.matrix(), contact.normal_force});
    if (simulator.applied_stiffness_seq() != applied_seq) {
      applied_seq = simulator.applied_stiffness_seq();
      const auto phase = classify_stiffness(state.stiffness);
      result.applied.emplace_back(state.time, phase);
      ReplayEvent ev;
      ev.t = state.time;
      ev.kind = "applied";
      ev.phase = phase;
      ev.matrix = state.stiffness.matrix();
      ev.seq = applied_seq;
      result.events.push_back(std::move(ev));
    }
  }
  result.retransmissions = link.retransmissions();
  return result;
}

json events_to_json(const ReplayResult& result) {
  json out = json::array();
  for (const auto& e : result.events) {
    json j{{"t", e.t}, {"kind", e.kind}, {"text", e.text}};
    j["phase"] = e.phase ? json(std::string(to_string(*e.phase))) : json(nullptr);
    if (e.matrix) j["matrix"] = mat_to_json(*e.matrix);
    if (e.seq) j["seq"] = e.seq;
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace teleimp::eval

#include "teleimp/app.hpp"

#include <fstream>
#include <set>

#include "teleimp/error.hpp"

namespace teleimp::app {

using nlohmann::json;

AppConfig AppConfig::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Configuration, "config must be a JSON object");
  static const std::set<std::string> known = {
      "host", "http_port", "ws_port", "telemetry_rate_hz", "udp_port", "robot_host", "robot_port",
      "embedded_robot", "db_path", "model", "live", "confusion_path", "exemplar_dir",
      "camera_environment", "camera_fov", "sim"};
  for (const auto& [key, _] : j.items()) {
    if (key.find("key") != std::string::npos || key.find("token") != std::string::npos)
      throw Error(ErrorKind::Configuration,
                  "config key '" + key + "': credentials are read from the environment only");
    if (!known.count(key)) throw Error(ErrorKind::Configuration, "unknown config key '" + key + "'");
  }
  AppConfig c;
  try {
    c.server.host = j.value("host", c.server.host);
    c.server.http_port = j.value("http_port", c.server.http_port);
    c.server.ws_port = j.value("ws_port", c.server.ws_port);
    c.server.telemetry_rate_hz = j.value("telemetry_rate_hz", c.server.telemetry_rate_hz);
    c.udp_port = j.value("udp_port", c.udp_port);
    c.robot_host = j.value("robot_host", c.robot_host);
    c.robot_port = j.value("robot_port", c.robot_port);
    c.embedded_robot = j.value("embedded_robot", c.embedded_robot);
    c.db_path = j.value("db_path", c.db_path);
    c.model = j.value("model", c.model);
    if (j.contains("live")) {
      for (const auto& [key, _] : j["live"].items())
        if (key.find("key") != std::string::npos && key != "credential_env")
          throw Error(ErrorKind::Configuration, "live." + key + ": credentials are read from the environment only");
      c.live = vlm::LiveConfig::from_json(j["live"]);
    }
    if (j.contains("confusion_path")) c.confusion_path = j["confusion_path"].get<std::string>();
    if (j.contains("exemplar_dir")) c.exemplar_dir = j["exemplar_dir"].get<std::string>();
    if (j.contains("camera_environment")) {
      auto env = scene::parse_environment(j["camera_environment"].get<std::string>());
      if (!env) throw Error(ErrorKind::Configuration, "camera_environment must be Ideal or Lab");
      c.camera_environment = *env;
    }
    c.camera_fov = j.value("camera_fov", c.camera_fov);
    if (j.contains("sim")) {
      const auto& s = j["sim"];
      c.sim.mass = s.value("mass", c.sim.mass);
      c.sim.damping_ratio = s.value("damping_ratio", c.sim.damping_ratio);
      c.sim.wall_stiffness = s.value("wall_stiffness", c.sim.wall_stiffness);
      c.sim.friction = s.value("friction", c.sim.friction);
      c.sim.slip_regularization = s.value("slip_regularization", c.sim.slip_regularization);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Configuration, std::string("config: ") + e.what());
  }
  if (c.model != "mock" && c.model != "live") throw Error(ErrorKind::Configuration, "model must be mock or live");
  auto port_ok = [](int p) { return p >= 0 && p <= 65535; };
  if (!port_ok(c.server.http_port) || !port_ok(c.server.ws_port) || !port_ok(c.udp_port) || !port_ok(c.robot_port))
    throw Error(ErrorKind::Configuration, "ports must be in [0, 65535]");
  if (!(c.server.telemetry_rate_hz > 0)) throw Error(ErrorKind::Configuration, "telemetry_rate_hz must be positive");
  if (!(c.camera_fov > 0)) throw Error(ErrorKind::Configuration, "camera_fov must be positive");
  if (!(c.sim.mass > 0) || !(c.sim.wall_stiffness > 0) || c.sim.friction < 0)
    throw Error(ErrorKind::Configuration, "sim parameters out of range");
  if (!c.embedded_robot && c.robot_port == 0)
    throw Error(ErrorKind::Configuration, "robot_port is required for an external robot");
  return c;
}

AppConfig AppConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Configuration, path + ": " + e.what());
  }
  return from_json(j);
}

struct BackendApp::Impl {
  AppConfig config;
  std::unique_ptr<net::UdpChannel> backend_udp;
  std::unique_ptr<net::UdpChannel> robot_udp;
  std::unique_ptr<sim::Simulator> simulator;
  std::unique_ptr<robot::RobotEndpoint> endpoint;
  std::unique_ptr<robot::RobotLink> link;
  std::unique_ptr<vlm::ModelClient> model;
  vlm::ExemplarStore exemplars;
  std::unique_ptr<db::StiffnessDb> db;
  std::unique_ptr<capture::SimulatedCamera> camera;
  capture::SnapshotStore snapshots;
  speech::TextPassthrough speech;
  std::unique_ptr<backend::SessionManager> sessions;
  std::unique_ptr<server::TelemetryFanout> fanout;
  std::unique_ptr<server::HttpServer> http;
  std::unique_ptr<server::WsServer> ws;
  std::jthread robot_thread;
  std::jthread link_thread;
  bool running = false;
};

BackendApp::BackendApp(AppConfig config) : impl_(std::make_unique<Impl>()) {
  auto& m = *impl_;
  m.config = std::move(config);
  const auto geom = sim::build_canonical_groove();

  if (m.config.model == "live") {
    m.model = std::make_unique<vlm::LiveModelClient>(m.config.live);
  } else {
    vlm::ConfusionSet conf;
    if (m.config.confusion_path) {
      std::ifstream in(*m.config.confusion_path);
      if (!in) throw Error(ErrorKind::Io, "cannot read " + *m.config.confusion_path);
      conf = vlm::ConfusionSet::from_json(json::parse(in));
    }
    m.model = std::make_unique<vlm::MockModelClient>(conf);
  }
  m.exemplars = m.config.exemplar_dir ? vlm::ExemplarStore::load(*m.config.exemplar_dir)
                                      : vlm::ExemplarStore::simulated(geom);
  m.db = std::make_unique<db::StiffnessDb>(m.config.db_path);

  scene::CameraView view;
  view.environment = m.config.camera_environment;
  view.field_of_view = m.config.camera_fov;
  view.target = geom.track_start();
  m.camera = std::make_unique<capture::SimulatedCamera>(geom, view);

  m.backend_udp = std::make_unique<net::UdpChannel>(static_cast<std::uint16_t>(m.config.udp_port),
                                                    m.config.server.host);
  if (m.config.embedded_robot) {
    m.robot_udp = std::make_unique<net::UdpChannel>(static_cast<std::uint16_t>(m.config.robot_port), "127.0.0.1");
    sim::RobotState initial;
    initial.position = initial.reference = geom.track_start();  // peg resting in the entrance mouth
    m.simulator = std::make_unique<sim::Simulator>(geom, initial, m.config.sim);
    m.endpoint = std::make_unique<robot::RobotEndpoint>(*m.robot_udp, *m.simulator);
    m.backend_udp->set_peer("127.0.0.1", m.robot_udp->local_port());
    m.robot_udp->set_peer(m.config.server.host == "0.0.0.0" ? "127.0.0.1" : m.config.server.host,
                          m.backend_udp->local_port());
  } else {
    m.backend_udp->set_peer(m.config.robot_host, static_cast<std::uint16_t>(m.config.robot_port));
  }
  m.link = std::make_unique<robot::RobotLink>(*m.backend_udp);
  m.fanout = std::make_unique<server::TelemetryFanout>(m.config.server.telemetry_rate_hz);
  m.link->set_telemetry_callback([f = m.fanout.get()](const wire::Telemetry& t) { f->offer(t); });
  m.camera->follow([l = m.link.get()]() -> std::optional<Vec3> {
    if (auto t = l->latest_telemetry()) return t->data.position;
    return std::nullopt;
  });

  backend::SessionDeps deps;
  deps.link = m.link.get();
  deps.model = m.model.get();
  deps.exemplars = &m.exemplars;
  deps.db = m.db.get();
  deps.scene = m.camera.get();
  deps.snapshots = &m.snapshots;
  m.sessions = std::make_unique<backend::SessionManager>(deps);

  server::ServerDeps sdeps{m.sessions.get(), &m.snapshots, m.db.get(), &m.speech};
  m.http = std::make_unique<server::HttpServer>(sdeps, m.config.server);
  m.ws = std::make_unique<server::WsServer>(*m.sessions, *m.fanout, m.config.server);
}

BackendApp::~BackendApp() { stop(); }

void BackendApp::start() {
  auto& m = *impl_;
  if (m.running) return;
  if (m.endpoint) m.robot_thread = std::jthread([ep = m.endpoint.get()](std::stop_token st) { ep->run_realtime(st); });
  m.link_thread = std::jthread([l = m.link.get()](std::stop_token st) {
    while (!st.stop_requested()) l->poll(std::chrono::milliseconds(5));
  });
  m.http->start();
  m.ws->start();
  m.running = true;
}

void BackendApp::stop() {
  if (!impl_ || !impl_->running) return;
  auto& m = *impl_;
  m.http->stop();
  m.ws->stop();
  m.link_thread = {};
  m.robot_thread = {};
  m.running = false;
}

int BackendApp::http_port() const { return impl_->http->port(); }
int BackendApp::ws_port() const { return impl_->ws->port(); }
int BackendApp::udp_port() const { return impl_->backend_udp->local_port(); }
backend::SessionManager& BackendApp::sessions() { return *impl_->sessions; }
robot::RobotLink& BackendApp::link() { return *impl_->link; }
sim::Simulator* BackendApp::simulator() { return impl_->simulator.get(); }

}  // namespace teleimp::app

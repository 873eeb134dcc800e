#pragma once

// The backend process: UDP link to the robot, optional in-process simulated
// robot on its own UDP socket, camera, database, model and both servers.

#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "teleimp/server.hpp"

namespace teleimp::app {

struct AppConfig {
  server::ServerConfig server;
  int udp_port = 9870;  // backend side; 0 = ephemeral
  std::string robot_host = "127.0.0.1";
  int robot_port = 9871;        // robot side; 0 = ephemeral (embedded robot only)
  bool embedded_robot = true;   // run the groove simulator in-process
  std::string db_path = "teleimp_stiffness.jsonl";
  std::string model = "mock";   // "mock" or "live"
  vlm::LiveConfig live;
  std::optional<std::string> confusion_path;  // JSON confusion tables for the mock
  std::optional<std::string> exemplar_dir;    // default: rendered from the simulated scene
  scene::Environment camera_environment = scene::Environment::Lab;
  double camera_fov = 0.12;
  sim::SimParams sim;

  /// Unknown keys are rejected so typos surface. Throws Error{Configuration}.
  static AppConfig from_json(const nlohmann::json& j);
  static AppConfig load(const std::string& path);
};

class BackendApp {
 public:
  explicit BackendApp(AppConfig config);
  ~BackendApp();

  void start();
  void stop();

  int http_port() const;
  int ws_port() const;
  int udp_port() const;
  backend::SessionManager& sessions();
  robot::RobotLink& link();
  /// nullptr unless the robot is embedded.
  sim::Simulator* simulator();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace teleimp::app

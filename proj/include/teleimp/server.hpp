#pragma once

// HTTP API (cpp-httplib) and WebSocket telemetry feed (Boost.Beast) in front
// of a SessionManager. Both listen on their own port; 0 picks a free one.

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include "teleimp/session.hpp"
#include "teleimp/speech.hpp"

namespace teleimp::server {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int http_port = 8080;
  int ws_port = 8081;
  double telemetry_rate_hz = 20.0;  // WebSocket decimation target
};

struct ServerDeps {
  backend::SessionManager* sessions = nullptr;  // required
  capture::SnapshotStore* snapshots = nullptr;  // required
  db::StiffnessDb* db = nullptr;                // optional; GET /stiffness is empty without it
  speech::SpeechToText* speech = nullptr;       // optional; POST .../speech returns 501 without it
};

/// Telemetry decimation by robot time, shared by every WebSocket client.
class TelemetryFanout {
 public:
  explicit TelemetryFanout(double rate_hz) : period_(1.0 / rate_hz) {}
  /// Publishes to `hub` when at least one period has elapsed since the last one.
  bool offer(const wire::Telemetry& t);
  backend::EventHub& hub() { return hub_; }

 private:
  double period_;
  std::mutex mutex_;
  bool any_ = false;
  double last_ = 0.0;
  backend::EventHub hub_;
};

class HttpServer {
 public:
  HttpServer(ServerDeps deps, ServerConfig config);
  ~HttpServer();
  /// Binds and starts serving on a background thread. Throws Error{Io}.
  void start();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

/// Serves ws://host:port/session/{id}/telemetry.
class WsServer {
 public:
  WsServer(backend::SessionManager& sessions, TelemetryFanout& telemetry, ServerConfig config);
  ~WsServer();
  void start();
  void stop();
  int port() const { return port_; }
  std::size_t connections() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace teleimp::server

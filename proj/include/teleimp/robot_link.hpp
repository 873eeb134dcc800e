#pragma once

// Both ends of the UDP link: RobotLink on the backend side (sequencing,
// stiffness retransmission, telemetry intake) and RobotEndpoint on the
// simulated robot side (mailbox delivery into the simulator, telemetry).

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <optional>
#include <stop_token>
#include <vector>

#include "teleimp/groove_sim.hpp"
#include "teleimp/transport.hpp"
#include "teleimp/wire.hpp"

namespace teleimp::robot {

using Clock = std::chrono::steady_clock;

inline constexpr auto kRetransmitPeriod = std::chrono::milliseconds(100);

struct TelemetryView {
  wire::Telemetry data;
  std::uint32_t seq = 0;
  Clock::time_point received;
};

class RobotLink {
 public:
  explicit RobotLink(net::DatagramChannel& channel);

  std::uint32_t send_pose(const Vec3& position);
  std::uint32_t send_start_stop(bool engage);
  /// Supersedes any pending update; retransmitted until telemetry echoes it.
  std::uint32_t send_stiffness(const StiffnessMatrix& k, Clock::time_point now = Clock::now());

  void tick(Clock::time_point now = Clock::now());
  /// Handles one inbound datagram; returns the decode failure, if any.
  std::optional<wire::DecodeError> on_datagram(std::span<const std::uint8_t> bytes,
                                               Clock::time_point now = Clock::now());
  /// Receives at most one datagram (waiting up to `timeout`), then ticks.
  bool poll(std::chrono::milliseconds timeout);

  std::optional<TelemetryView> latest_telemetry() const;
  bool stiffness_pending() const;
  std::uint32_t acked_stiffness_seq() const;
  std::size_t retransmissions() const;
  std::size_t decode_failures() const;
  void set_telemetry_callback(std::function<void(const wire::Telemetry&)> cb);

 private:
  void send_locked(const wire::Message& msg);

  net::DatagramChannel& channel_;
  mutable std::mutex mutex_;
  std::uint32_t pose_seq_ = 0, stiffness_seq_ = 0, start_stop_seq_ = 0;
  std::optional<wire::Message> pending_stiffness_;
  Clock::time_point last_stiffness_send_{};
  std::uint32_t acked_ = 0;
  std::size_t retransmissions_ = 0;
  std::size_t decode_failures_ = 0;
  std::optional<TelemetryView> telemetry_;
  std::uint32_t telemetry_seq_high_ = 0;
  std::function<void(const wire::Telemetry&)> on_telemetry_;
};

struct EndpointOptions {
  double dt = 1e-3;
  int telemetry_every = 10;  // steps; 100 Hz at 1 ms
};

/// Simulated robot: applies datagrams through the simulator's mailbox and
/// reports telemetry. Pose commands are ignored unless started.
class RobotEndpoint {
 public:
  RobotEndpoint(net::DatagramChannel& channel, sim::Simulator& simulator, EndpointOptions options = {});

  /// Applies every datagram already queued, without waiting.
  void drain();
  /// drain + one integration step + telemetry on schedule.
  std::pair<sim::RobotState, sim::ContactReport> step();
  /// Steps in wall-clock time until stop is requested.
  void run_realtime(std::stop_token stop);

  bool started() const { return started_.load(); }
  std::vector<std::pair<std::uint32_t, bool>> start_stop_log() const;
  std::size_t poses_applied() const { return poses_applied_.load(); }
  std::size_t rejected() const { return rejected_.load(); }

 private:
  void apply(const wire::Message& msg);

  net::DatagramChannel& channel_;
  sim::Simulator& sim_;
  EndpointOptions options_;
  std::atomic<bool> started_{false};
  std::atomic<std::size_t> poses_applied_{0};
  std::atomic<std::size_t> rejected_{0};
  std::uint32_t pose_seq_high_ = 0;
  bool any_pose_ = false;
  std::uint32_t telemetry_seq_ = 0;
  long steps_ = 0;
  mutable std::mutex log_mutex_;
  std::vector<std::pair<std::uint32_t, bool>> start_stop_log_;
};

}  // namespace teleimp::robot

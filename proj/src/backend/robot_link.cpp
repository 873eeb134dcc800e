#include "teleimp/robot_link.hpp"

#include <thread>

#include "teleimp/error.hpp"

namespace teleimp::robot {

RobotLink::RobotLink(net::DatagramChannel& channel) : channel_(channel) {}

void RobotLink::send_locked(const wire::Message& msg) {
  const auto bytes = wire::encode(msg);
  channel_.send(bytes);
}

std::uint32_t RobotLink::send_pose(const Vec3& position) {
  std::lock_guard lk(mutex_);
  const wire::Message m{++pose_seq_, wire::PoseCmd{position}};
  send_locked(m);
  return m.seq;
}

std::uint32_t RobotLink::send_start_stop(bool engage) {
  std::lock_guard lk(mutex_);
  const wire::Message m{++start_stop_seq_, wire::StartStop{engage}};
  send_locked(m);
  return m.seq;
}

std::uint32_t RobotLink::send_stiffness(const StiffnessMatrix& k, Clock::time_point now) {
  std::lock_guard lk(mutex_);
  wire::Message m{++stiffness_seq_, wire::StiffnessUpdate{k.matrix()}};
  send_locked(m);
  pending_stiffness_ = std::move(m);
  last_stiffness_send_ = now;
  return stiffness_seq_;
}

void RobotLink::tick(Clock::time_point now) {
  std::lock_guard lk(mutex_);
  if (!pending_stiffness_) return;
  if (now - last_stiffness_send_ < kRetransmitPeriod) return;
  send_locked(*pending_stiffness_);
  last_stiffness_send_ = now;
  ++retransmissions_;
}

std::optional<wire::DecodeError> RobotLink::on_datagram(std::span<const std::uint8_t> bytes, Clock::time_point now) {
  auto decoded = wire::decode(bytes);
  std::function<void(const wire::Telemetry&)> cb;
  wire::Telemetry tm;
  {
    std::lock_guard lk(mutex_);
    if (auto* err = std::get_if<wire::DecodeError>(&decoded)) {
      ++decode_failures_;
      return *err;
    }
    const auto& msg = std::get<wire::Message>(decoded);
    const auto* t = std::get_if<wire::Telemetry>(&msg.body);
    if (!t) return std::nullopt;  // the robot only sends telemetry
    if (telemetry_ && msg.seq <= telemetry_seq_high_) return std::nullopt;  // reordered
    telemetry_seq_high_ = msg.seq;
    telemetry_ = TelemetryView{*t, msg.seq, now};
    const double echoed = t->reserved[0];
    if (echoed >= 0 && echoed <= 4294967295.0) {
      const auto seq = static_cast<std::uint32_t>(echoed);
      if (seq > acked_) acked_ = seq;
      if (pending_stiffness_ && acked_ >= pending_stiffness_->seq) pending_stiffness_.reset();
    }
    cb = on_telemetry_;
    tm = *t;
  }
  if (cb) cb(tm);
  return std::nullopt;
}

bool RobotLink::poll(std::chrono::milliseconds timeout) {
  auto bytes = channel_.receive(timeout);
  if (bytes) on_datagram(*bytes);
  tick();
  return bytes.has_value();
}

std::optional<TelemetryView> RobotLink::latest_telemetry() const {
  std::lock_guard lk(mutex_);
  return telemetry_;
}

bool RobotLink::stiffness_pending() const {
  std::lock_guard lk(mutex_);
  return pending_stiffness_.has_value();
}

std::uint32_t RobotLink::acked_stiffness_seq() const {
  std::lock_guard lk(mutex_);
  return acked_;
}

std::size_t RobotLink::retransmissions() const {
  std::lock_guard lk(mutex_);
  return retransmissions_;
}

std::size_t RobotLink::decode_failures() const {
  std::lock_guard lk(mutex_);
  return decode_failures_;
}

void RobotLink::set_telemetry_callback(std::function<void(const wire::Telemetry&)> cb) {
  std::lock_guard lk(mutex_);
  on_telemetry_ = std::move(cb);
}

// ---- robot side ----

RobotEndpoint::RobotEndpoint(net::DatagramChannel& channel, sim::Simulator& simulator, EndpointOptions options)
    : channel_(channel), sim_(simulator), options_(options) {
  if (!(options_.dt > 0 && options_.dt <= sim::kMaxStep) || options_.telemetry_every < 1)
    throw Error(ErrorKind::Configuration, "endpoint dt or telemetry rate out of range");
}

void RobotEndpoint::apply(const wire::Message& msg) {
  if (const auto* p = std::get_if<wire::PoseCmd>(&msg.body)) {
    if (!started_ || (any_pose_ && msg.seq <= pose_seq_high_) || !p->position.allFinite()) {
      ++rejected_;
      return;
    }
    any_pose_ = true;
    pose_seq_high_ = msg.seq;
    sim_.post_reference(p->position);
    ++poses_applied_;
  } else if (const auto* s = std::get_if<wire::StiffnessUpdate>(&msg.body)) {
    try {
      sim_.post_stiffness(StiffnessMatrix(0.5 * (s->k + s->k.transpose())), msg.seq);
    } catch (const Error&) {
      ++rejected_;
    }
  } else if (const auto* ss = std::get_if<wire::StartStop>(&msg.body)) {
    started_ = ss->engage;
    std::lock_guard lk(log_mutex_);
    start_stop_log_.emplace_back(msg.seq, ss->engage);
  } else {
    ++rejected_;
  }
}

void RobotEndpoint::drain() {
  while (auto bytes = channel_.receive(std::chrono::milliseconds(0))) {
    auto decoded = wire::decode(*bytes);
    if (auto* m = std::get_if<wire::Message>(&decoded))
      apply(*m);
    else
      ++rejected_;
  }
}

std::pair<sim::RobotState, sim::ContactReport> RobotEndpoint::step() {
  drain();
  auto result = sim_.advance(options_.dt);
  if (++steps_ % options_.telemetry_every == 0) {
    const auto& [state, contact] = result;
    wire::Telemetry t;
    t.time = state.time;
    t.position = state.position;
    t.velocity = state.velocity;
    t.force = contact.force;
    t.reserved = {static_cast<double>(sim_.applied_stiffness_seq()), 0.0, 0.0};
    channel_.send(wire::encode({++telemetry_seq_, t}));
  }
  return result;
}

void RobotEndpoint::run_realtime(std::stop_token stop) {
  const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(options_.dt));
  auto next = Clock::now();
  while (!stop.stop_requested()) {
    step();
    next += period;
    const auto now = Clock::now();
    if (next < now - std::chrono::milliseconds(50)) next = now;  // fell far behind; do not spin to catch up
    std::this_thread::sleep_until(next);
  }
}

std::vector<std::pair<std::uint32_t, bool>> RobotEndpoint::start_stop_log() const {
  std::lock_guard lk(log_mutex_);
  return start_stop_log_;
}

}  // namespace teleimp::robot

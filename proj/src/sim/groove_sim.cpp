#include "teleimp/groove_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace teleimp::sim {

namespace {

// Closest point to p on the segment [a, b], with optional unclamped
// extension of `extend_before` / `extend_after` metres past either end.
Vec3 closest_on_segment(const Vec3& a, const Vec3& b, const Vec3& p, double extend_before,
                        double extend_after) {
  const Vec3 ab = b - a;
  const double len = ab.norm();
  const Vec3 dir = ab / len;
  const double t = std::clamp((p - a).dot(dir), -extend_before, len + extend_after);
  return a + t * dir;
}

bool finite(const RobotState& s) {
  return s.position.allFinite() && s.velocity.allFinite() && std::isfinite(s.time);
}

}  // namespace

double GrooveGeometry::path_length() const {
  double total = 0.0;
  for (const auto& s : segments) total += s.length();
  return total;
}

void GrooveGeometry::validate() const {
  if (segments.empty()) throw Error(ErrorKind::Configuration, "groove has no segments");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (s.length() <= 0.0) {
      throw Error(ErrorKind::Configuration, "segment " + std::to_string(i) + " has zero length");
    }
    if (s.half_width <= peg_radius) {
      throw Error(ErrorKind::Configuration,
                  "segment " + std::to_string(i) + " half_width does not exceed peg radius");
    }
    if (i > 0 && (segments[i - 1].end - s.start).norm() > 1e-9) {
      throw Error(ErrorKind::Configuration,
                  "segments " + std::to_string(i - 1) + " and " + std::to_string(i) +
                      " are not chained");
    }
  }
  if (segments.size() == kAllPhases.size()) {
    for (std::size_t i = 0; i < segments.size(); ++i) {
      if (segments[i].kind != kAllPhases[i]) {
        throw Error(ErrorKind::Configuration, "segment kinds out of canonical order");
      }
    }
  }
}

std::optional<std::size_t> GrooveGeometry::containing_segment(const Vec3& p) const {
  std::optional<std::size_t> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    const double d = (p - closest_on_segment(s.start, s.end, p, 0.0, 0.0)).norm();
    if (d <= s.half_width && d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

GrooveGeometry build_canonical_groove() {
  constexpr double kHalfWidth = 0.006;
  constexpr double kDrop = 0.03;
  const double s = std::sqrt(0.5);

  const Vec3 p0(0.0, 0.0, kDrop);
  const Vec3 p1(0.0, 0.0, 0.0);
  const Vec3 p2(0.0, 0.10, 0.0);
  const Vec3 p3(0.10, 0.10, 0.0);
  const Vec3 p4 = p3 + 0.07 * Vec3(0.0, s, s);

  GrooveGeometry g;
  g.peg_radius = 0.005;
  g.segments = {
      {TaskPhase::Entrance, p0, p1, kHalfWidth, 0.0},
      {TaskPhase::YTraverse, p1, p2, kHalfWidth, kDrop},
      {TaskPhase::XTraverse, p2, p3, kHalfWidth, kDrop},
      {TaskPhase::YZSlant, p3, p4, kHalfWidth, kDrop},
  };
  g.validate();
  return g;
}

std::pair<double, Vec3> wall_clearance(const GrooveGeometry& geom, const Vec3& p) {
  double best = -std::numeric_limits<double>::infinity();
  Vec3 normal = Vec3::UnitZ();
  const std::size_t last = geom.segments.size() - 1;
  for (std::size_t i = 0; i <= last; ++i) {
    const auto& s = geom.segments[i];
    const Vec3 c = closest_on_segment(s.start, s.end, p, i == 0 ? geom.mouth_extension : 0.0,
                                      i == last ? geom.mouth_extension : 0.0);
    const Vec3 offset = p - c;
    const double d = offset.norm();
    const double clearance = s.half_width - d;
    if (clearance > best) {
      best = clearance;
      // Wall pushes back toward the centerline.
      normal = d > 0.0 ? Vec3(-offset / d) : Vec3::UnitZ();
    }
  }
  return {best, normal};
}

ContactReport contact_query(const GrooveGeometry& geom, const Vec3& peg_center, double peg_radius,
                            const Vec3& velocity, const SimParams& params) {
  ContactReport report;
  const auto [clearance, normal] = wall_clearance(geom, peg_center);
  const double penetration = peg_radius - clearance;
  if (!(penetration > 0.0)) return report;

  report.in_contact = true;
  report.penetration = penetration;
  report.normal = normal;
  report.normal_force = params.wall_stiffness * penetration;
  report.force = report.normal_force * normal;

  const Vec3 tangential = velocity - velocity.dot(normal) * normal;
  const double slip = tangential.norm();
  if (slip > 0.0 && params.friction > 0.0) {
    const double scale = params.friction * report.normal_force /
                         std::max(slip, params.slip_regularization);
    report.force -= scale * tangential;
  }
  return report;
}

Mat3 critical_damping(const StiffnessMatrix& k, double mass, double damping_ratio) {
  Eigen::SelfAdjointEigenSolver<Mat3> solver(mass * k.matrix());
  const Vec3 root = solver.eigenvalues().cwiseSqrt();
  const Mat3& v = solver.eigenvectors();
  const Mat3 d = 2.0 * damping_ratio * v * root.asDiagonal() * v.transpose();
  return 0.5 * (d + d.transpose());
}

std::pair<RobotState, ContactReport> step(const RobotState& state, const GrooveGeometry& geom,
                                          double dt, const SimParams& params,
                                          const Mat3* damping) {
  if (!(dt > 0.0 && dt <= kMaxStep)) {
    throw Error(ErrorKind::Configuration, "dt must lie in (0, 2 ms]");
  }
  if (!finite(state)) throw Error(ErrorKind::SimulationDiverged, "non-finite input state");

  const Mat3 d_local = damping ? *damping : critical_damping(state.stiffness, params.mass,
                                                              params.damping_ratio);
  const ContactReport contact =
      contact_query(geom, state.position, geom.peg_radius, state.velocity, params);

  const Vec3 spring = state.stiffness.matrix() * (state.reference - state.position);
  const Vec3 damper = d_local * (state.reference_velocity - state.velocity);
  const Vec3 accel = (spring + damper + contact.force) / params.mass;

  RobotState next = state;
  next.velocity = state.velocity + dt * accel;
  next.position = state.position + dt * next.velocity;
  next.time = state.time + dt;
  if (!finite(next)) throw Error(ErrorKind::SimulationDiverged, "state became non-finite");
  return {next, contact};
}

Vec3 reference_at(const std::vector<Waypoint>& waypoints, double t) {
  if (waypoints.empty()) return Vec3::Zero();
  if (t <= waypoints.front().time) return waypoints.front().position;
  if (t >= waypoints.back().time) return waypoints.back().position;
  auto hi = std::upper_bound(waypoints.begin(), waypoints.end(), t,
                             [](double v, const Waypoint& w) { return v < w.time; });
  auto lo = hi - 1;
  const double span = hi->time - lo->time;
  if (span <= 0.0) return hi->position;
  const double a = (t - lo->time) / span;
  return (1.0 - a) * lo->position + a * hi->position;
}

std::string TelemetryLog::to_csv(std::size_t decimation) const {
  if (decimation == 0) decimation = 1;
  std::ostringstream os;
  os << "time,ref_x,ref_y,ref_z,x,y,z,vx,vy,vz,fx,fy,fz,"
        "k00,k01,k02,k10,k11,k12,k20,k21,k22\n";
  auto put3 = [&](const Vec3& v) {
    os << ',' << format_number(v[0]) << ',' << format_number(v[1]) << ',' << format_number(v[2]);
  };
  for (std::size_t i = 0; i < samples.size(); i += decimation) {
    const auto& s = samples[i];
    os << format_number(s.time);
    put3(s.reference);
    put3(s.position);
    put3(s.velocity);
    put3(s.force);
    os << ',' << to_canonical_string(s.stiffness) << '\n';
  }
  return os.str();
}

double TelemetryLog::peak_normal_force() const {
  double peak = 0.0;
  for (const auto& s : samples) peak = std::max(peak, s.normal_force);
  return peak;
}

TelemetryLog run_schedule(const GrooveGeometry& geom, const std::vector<Waypoint>& waypoints,
                          const std::vector<ScheduledStiffness>& schedule,
                          const RunOptions& options) {
  TelemetryLog log;
  if (waypoints.empty()) return log;
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if (waypoints[i].time < waypoints[i - 1].time) {
      throw Error(ErrorKind::Configuration, "waypoints not time-sorted");
    }
  }
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (i > 0 && schedule[i].time < schedule[i - 1].time) {
      throw Error(ErrorKind::Configuration, "stiffness schedule not time-sorted");
    }
    if (schedule[i].time < waypoints.front().time || schedule[i].time > waypoints.back().time) {
      throw Error(ErrorKind::Configuration, "stiffness schedule time outside trajectory span");
    }
  }

  const double t0 = waypoints.front().time;
  const double t_end = waypoints.back().time + options.extra_time;
  const auto steps = static_cast<std::size_t>(std::llround((t_end - t0) / options.dt));

  RobotState state;
  state.time = t0;
  state.position = waypoints.front().position;
  state.reference = state.position;
  state.stiffness = options.initial_stiffness;
  std::size_t next_k = 0;
  Mat3 damping = critical_damping(state.stiffness, options.params.mass,
                                  options.params.damping_ratio);
  log.samples.reserve(steps);

  for (std::size_t i = 0; i < steps; ++i) {
    bool changed = false;
    while (next_k < schedule.size() && schedule[next_k].time <= state.time + 1e-12) {
      state.stiffness = schedule[next_k].stiffness;
      ++next_k;
      changed = true;
    }
    if (changed) {
      damping = critical_damping(state.stiffness, options.params.mass,
                                 options.params.damping_ratio);
    }
    const Vec3 ref = reference_at(waypoints, state.time);
    state.reference_velocity = i == 0 ? Vec3::Zero() : Vec3((ref - state.reference) / options.dt);
    state.reference = ref;

    std::pair<RobotState, ContactReport> out;
    try {
      out = step(state, geom, options.dt, options.params, &damping);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::SimulationDiverged) {
        throw Error(ErrorKind::SimulationDiverged,
                    std::string(e.what()) + " at step " + std::to_string(i));
      }
      throw;
    }
    log.samples.push_back({out.first.time, state.reference, out.first.position,
                           out.first.velocity, out.second.force, state.stiffness.matrix(),
                           out.second.normal_force});
    state = out.first;
  }
  return log;
}

Vec3 lateral_direction(const GrooveSegment& segment) {
  const Vec3 side = segment.direction().cross(Vec3::UnitZ());
  return side.norm() < 1e-9 ? Vec3::UnitX() : Vec3(side.normalized());
}

Traversal scripted_traversal(const GrooveGeometry& geom, const TraversalOptions& options) {
  Traversal out;
  double t = 0.0;
  const std::size_t last = geom.segments.size() - 1;
  const auto& first = geom.segments.front();
  Vec3 here = first.start - options.approach * first.direction();
  out.waypoints.push_back({t, here});

  auto move_to = [&](const Vec3& target) {
    t += (target - here).norm() / options.speed;
    here = target;
    out.waypoints.push_back({t, here});
  };

  for (std::size_t i = 0; i <= last; ++i) {
    const auto& seg = geom.segments[i];
    const Vec3 dir = seg.direction();
    // Vertical insertion is pushed straight; horizontal and slanted runs lean.
    const bool vertical = std::abs(seg.direction().z()) > 0.99;
    const Vec3 bias = vertical ? Vec3::Zero() : Vec3(options.lateral_bias * lateral_direction(seg));
    const double ramp = std::min(options.ramp, seg.length() / 3.0);

    out.phase_starts.emplace_back(t, seg.kind);
    t += options.dwell;
    out.waypoints.push_back({t, here});
    if (i == 0) move_to(seg.start);
    // Centred at corners, leaning on a wall in between.
    move_to(seg.start + ramp * dir + bias);
    if (i == last) {
      move_to(seg.end + bias);
    } else {
      move_to(seg.end - ramp * dir + bias);
      move_to(seg.end);
    }
  }
  t += options.final_hold;
  out.waypoints.push_back({t, here});
  out.end_time = t;
  return out;
}

StiffnessMatrix transposed_target(TaskPhase phase) {
  Mat3 swap = Mat3::Zero();
  swap(0, 1) = 1.0;
  swap(1, 0) = 1.0;
  swap(2, 2) = 1.0;
  const Mat3 k = swap * phase_target_stiffness(phase).matrix() * swap;
  return StiffnessMatrix(k);
}

Simulator::Simulator(GrooveGeometry geom, RobotState initial, SimParams params)
    : geom_(std::move(geom)),
      params_(params),
      state_(std::move(initial)),
      damping_(critical_damping(state_.stiffness, params_.mass, params_.damping_ratio)),
      published_(state_),
      last_reference_input_(state_.reference) {}

void Simulator::post_reference(const Vec3& reference) {
  std::lock_guard lock(mutex_);
  mailbox_.reference = reference;
}

void Simulator::post_stiffness(const StiffnessMatrix& k, std::uint32_t seq) {
  std::lock_guard lock(mutex_);
  if (seq <= highest_seq_) return;
  highest_seq_ = seq;
  mailbox_.stiffness = k;
  mailbox_.stiffness_seq = seq;
}

std::pair<RobotState, ContactReport> Simulator::advance(double dt) {
  Mailbox pending;
  {
    std::lock_guard lock(mutex_);
    pending = mailbox_;
    mailbox_ = Mailbox{};
  }
  if (pending.stiffness) {
    state_.stiffness = *pending.stiffness;
    damping_ = critical_damping(state_.stiffness, params_.mass, params_.damping_ratio);
  }
  if (pending.reference) {
    const Vec3 ref = *pending.reference;
    const double interval = state_.time - last_reference_time_;
    state_.reference_velocity = (has_reference_input_ && interval > 0.0)
                                    ? Vec3((ref - last_reference_input_) / interval)
                                    : Vec3::Zero();
    state_.reference = ref;
    last_reference_input_ = ref;
    last_reference_time_ = state_.time;
    has_reference_input_ = true;
  } else if (state_.time - last_reference_time_ > 0.05) {
    // Reference stream paused: stop feeding forward a stale velocity.
    state_.reference_velocity = Vec3::Zero();
  }

  auto result = step(state_, geom_, dt, params_, &damping_);
  state_ = result.first;
  last_contact_ = result.second;
  {
    std::lock_guard lock(mutex_);
    if (pending.stiffness) applied_seq_ = pending.stiffness_seq;
    published_ = state_;
  }
  return result;
}

RobotState Simulator::snapshot() const {
  std::lock_guard lock(mutex_);
  return published_;
}

std::uint32_t Simulator::applied_stiffness_seq() const {
  std::lock_guard lock(mutex_);
  return applied_seq_;
}

}  // namespace teleimp::sim

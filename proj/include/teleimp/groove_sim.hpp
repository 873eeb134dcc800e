#pragma once

// Simulated remote site: a Cartesian impedance-controlled spherical peg in a
// tunnel-shaped groove, penalty contact with regularized Coulomb friction,
// semi-implicit Euler integration.

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "teleimp/stiffness.hpp"

namespace teleimp::sim {

struct GrooveSegment {
  TaskPhase kind;
  Vec3 start;
  Vec3 end;
  double half_width;  // m, tunnel radius
  double depth;       // m, centerline depth below the structure's top face at `start`

  double length() const { return (end - start).norm(); }
  Vec3 direction() const { return (end - start).normalized(); }
};

struct GrooveGeometry {
  std::vector<GrooveSegment> segments;
  double peg_radius = 0.005;
  // Open tunnel mouth extension beyond the first start and the last end.
  double mouth_extension = 0.02;

  Vec3 track_start() const { return segments.front().start; }
  Vec3 track_end() const { return segments.back().end; }
  double path_length() const;

  /// Throws Error{Configuration} on chain gaps, wrong kind order or
  /// infeasible widths.
  void validate() const;

  /// Index of the segment whose tunnel contains `p` and whose centerline is
  /// nearest; nullopt when `p` lies in no tunnel.
  std::optional<std::size_t> containing_segment(const Vec3& p) const;
};

/// Entrance drop 0.03 m, y-run 0.10 m, x-run 0.10 m, 45 deg y-z slant 0.07 m.
GrooveGeometry build_canonical_groove();

struct ContactReport {
  Vec3 force = Vec3::Zero();    // N
  double penetration = 0.0;     // m
  Vec3 normal = Vec3::UnitZ();  // unit, from wall into free space
  bool in_contact = false;
  double normal_force = 0.0;    // N, k_wall * penetration
};

struct SimParams {
  double mass = 2.0;            // kg
  double damping_ratio = 1.0;
  double wall_stiffness = 1e4;  // N/m
  double friction = 0.3;
  double slip_regularization = 1e-3;  // m/s
};

/// Signed clearance from `p` to the nearest wall (positive inside the tunnel)
/// together with the outward-into-free-space normal at the closest wall.
std::pair<double, Vec3> wall_clearance(const GrooveGeometry& geom, const Vec3& p);

/// Penalty contact; friction opposes the tangential part of `velocity`.
ContactReport contact_query(const GrooveGeometry& geom, const Vec3& peg_center, double peg_radius,
                            const Vec3& velocity = Vec3::Zero(), const SimParams& params = {});

struct RobotState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 reference = Vec3::Zero();
  Vec3 reference_velocity = Vec3::Zero();
  StiffnessMatrix stiffness = StiffnessMatrix::isotropic(100.0);
  double time = 0.0;
};

/// D = 2 * zeta * sqrtm(mass * K).
Mat3 critical_damping(const StiffnessMatrix& k, double mass, double damping_ratio = 1.0);

inline constexpr double kMaxStep = 2e-3;

/// One semi-implicit Euler step of m a = K (x_ref - x) + D (v_ref - v) + F_contact.
/// `damping` may pass a cached critical_damping(state.stiffness, ...).
/// Throws Error{SimulationDiverged} on non-finite results and
/// Error{Configuration} for dt outside (0, 2 ms].
std::pair<RobotState, ContactReport> step(const RobotState& state, const GrooveGeometry& geom,
                                          double dt, const SimParams& params = {},
                                          const Mat3* damping = nullptr);

struct Waypoint {
  double time;
  Vec3 position;
};

struct ScheduledStiffness {
  double time;
  StiffnessMatrix stiffness;
};

struct TelemetrySample {
  double time;
  Vec3 reference;
  Vec3 position;
  Vec3 velocity;
  Vec3 force;
  Mat3 stiffness;
  double normal_force;
};

struct TelemetryLog {
  std::vector<TelemetrySample> samples;

  /// time,ref_x..z,x,y,z,vx..vz,fx..fz,k00..k22; every `decimation`-th row.
  std::string to_csv(std::size_t decimation = 1) const;
  double peak_normal_force() const;
};

/// Linear interpolation, clamped at both ends.
Vec3 reference_at(const std::vector<Waypoint>& waypoints, double t);

struct RunOptions {
  double dt = 1e-3;
  double extra_time = 0.0;  // hold after the last waypoint
  StiffnessMatrix initial_stiffness = StiffnessMatrix::isotropic(100.0);
  SimParams params;
};

/// Fixed-step rollout from the first waypoint. Throws
/// Error{SimulationDiverged} naming the failing step index.
TelemetryLog run_schedule(const GrooveGeometry& geom, const std::vector<Waypoint>& waypoints,
                          const std::vector<ScheduledStiffness>& schedule,
                          const RunOptions& options = {});

/// Scripted operator motion through the track: approach above the mouth,
/// then each segment in order at constant speed with a dwell at every phase
/// start (where the stiffness command is issued). The reference is biased
/// sideways, as an operator leaning on one wall would do.
struct TraversalOptions {
  double speed = 0.01;          // m/s along the centerline
  double dwell = 1.0;           // s, pause at each phase start
  double lateral_bias = 0.008;  // m, perpendicular reference offset
  double ramp = 0.025;          // m of travel over which the offset builds up
  double approach = 0.01;       // m, start above the entrance mouth
  double final_hold = 8.0;      // s, hold at the track end while the peg settles
};

struct Traversal {
  std::vector<Waypoint> waypoints;
  std::vector<std::pair<double, TaskPhase>> phase_starts;  // command time per phase
  double end_time = 0.0;
};

/// Horizontal direction perpendicular to a segment (x for vertical ones).
Vec3 lateral_direction(const GrooveSegment& segment);

Traversal scripted_traversal(const GrooveGeometry& geom, const TraversalOptions& options = {});

/// Stiffness schedule issuing `stiffness_for(phase)` at every phase start.
template <class F>
std::vector<ScheduledStiffness> phase_schedule(const Traversal& traversal, F&& stiffness_for) {
  std::vector<ScheduledStiffness> out;
  for (const auto& [t, phase] : traversal.phase_starts) out.push_back({t, stiffness_for(phase)});
  return out;
}

/// Phase target with the x and y axes exchanged.
StiffnessMatrix transposed_target(TaskPhase phase);

/// Single-writer simulator with a mailbox: reference and stiffness updates
/// posted from other threads are applied together at the start of the next
/// advance(), never mid-step.
class Simulator {
 public:
  Simulator(GrooveGeometry geom, RobotState initial, SimParams params = {});

  void post_reference(const Vec3& reference);
  /// Keeps the highest seq; older or repeated seqs are ignored.
  void post_stiffness(const StiffnessMatrix& k, std::uint32_t seq);

  std::pair<RobotState, ContactReport> advance(double dt);

  RobotState snapshot() const;
  const ContactReport& last_contact() const { return last_contact_; }
  std::uint32_t applied_stiffness_seq() const;
  const GrooveGeometry& geometry() const { return geom_; }

 private:
  GrooveGeometry geom_;
  SimParams params_;
  RobotState state_;
  Mat3 damping_;
  ContactReport last_contact_;

  mutable std::mutex mutex_;  // guards mailbox_ and published_
  struct Mailbox {
    std::optional<Vec3> reference;
    std::optional<StiffnessMatrix> stiffness;
    std::uint32_t stiffness_seq = 0;
  } mailbox_;
  std::uint32_t highest_seq_ = 0;
  RobotState published_;
  std::uint32_t applied_seq_ = 0;
  Vec3 last_reference_input_;
  double last_reference_time_ = 0.0;
  bool has_reference_input_ = false;
};

}  // namespace teleimp::sim

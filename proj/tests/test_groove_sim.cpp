#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "teleimp/groove_sim.hpp"

using namespace teleimp;
using namespace teleimp::sim;

namespace {

// A single wide tunnel: nothing within reach of the peg.
GrooveGeometry open_space() {
  GrooveGeometry g;
  g.segments = {{TaskPhase::Entrance, Vec3(0, 0, 1), Vec3(0, 0, -1), 1.0, 0.0}};
  return g;
}

// Distance from p to the cylindrical wall of the canonical y-run, by dense
// sampling of the wall surface over the middle of the run.
double sampled_wall_distance(const GrooveSegment& seg, const Vec3& p) {
  const Vec3 n1 = Vec3::UnitX();
  const Vec3 n2 = Vec3::UnitZ();
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 400; ++i) {
    const double t = 0.4 + 0.2 * i / 400.0;
    const Vec3 c = seg.start + t * (seg.end - seg.start);
    for (int k = 0; k < 3600; ++k) {
      const double th = 2 * M_PI * k / 3600.0;
      const Vec3 w = c + seg.half_width * (std::cos(th) * n1 + std::sin(th) * n2);
      best = std::min(best, (w - p).norm());
    }
  }
  return best;
}

double energy(const RobotState& s, double mass) {
  const Vec3 e = s.position - s.reference;
  return 0.5 * mass * s.velocity.squaredNorm() + 0.5 * e.dot(s.stiffness.matrix() * e);
}

}  // namespace

TEST_CASE("canonical groove layout") {
  const auto g = build_canonical_groove();
  REQUIRE(g.segments.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(g.segments[i].kind == kAllPhases[i]);
  for (std::size_t i = 1; i < 4; ++i)
    CHECK((g.segments[i - 1].end - g.segments[i].start).norm() <= 1e-9);
  CHECK((g.segments[3].direction() - Vec3(0, std::sqrt(0.5), std::sqrt(0.5))).norm() < 1e-12);
  CHECK(g.path_length() == doctest::Approx(0.03 + 0.10 + 0.10 + 0.07).epsilon(1e-12));
  for (const auto& s : g.segments) CHECK(s.half_width > g.peg_radius);
}

TEST_CASE("groove validation rejects broken chains") {
  auto g = build_canonical_groove();
  g.segments[2].start += Vec3(0.001, 0, 0);
  CHECK_THROWS_AS(g.validate(), Error);
  auto narrow = build_canonical_groove();
  narrow.segments[1].half_width = 0.004;
  CHECK_THROWS_AS(narrow.validate(), Error);
}

TEST_CASE("peg on the centerline is clear of the walls") {
  const auto g = build_canonical_groove();
  const auto& y_run = g.segments[1];
  const auto r = contact_query(g, 0.5 * (y_run.start + y_run.end), g.peg_radius);
  CHECK_FALSE(r.in_contact);
  CHECK(r.force == Vec3::Zero());
  CHECK(r.penetration == 0.0);
}

TEST_CASE("lateral offsets against a dense-sampling wall oracle") {
  const auto g = build_canonical_groove();
  const auto& y_run = g.segments[1];
  const Vec3 mid = 0.5 * (y_run.start + y_run.end);
  for (double offset : {0.0005, 0.001, 0.002, 0.004, 0.006}) {
    const Vec3 p = mid + offset * Vec3::UnitX();
    const double oracle_pen = std::max(0.0, g.peg_radius - sampled_wall_distance(y_run, p));
    const auto r = contact_query(g, p, g.peg_radius);
    CHECK(r.penetration == doctest::Approx(oracle_pen).epsilon(1e-4));
    CHECK(r.in_contact == (oracle_pen > 1e-12));
    if (r.in_contact) CHECK((r.normal - (-Vec3::UnitX())).norm() < 1e-12);
  }
}

TEST_CASE("peg below the floor") {
  const auto g = build_canonical_groove();
  const auto& y_run = g.segments[1];
  const Vec3 floor_point = 0.5 * (y_run.start + y_run.end) - y_run.half_width * Vec3::UnitZ();
  const auto r = contact_query(g, floor_point - 0.001 * Vec3::UnitZ(), 0.005);
  CHECK(r.penetration >= 0.001);
  CHECK(r.normal.z() > 0.999);
}

TEST_CASE("contact force vanishes exactly without penetration") {
  const auto g = build_canonical_groove();
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.01, 0.16);
  std::normal_distribution<double> v(0.0, 0.02);
  int contacts = 0;
  for (int i = 0; i < 20000; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng) * 0.4);
    const auto r = contact_query(g, p, g.peg_radius, Vec3(v(rng), v(rng), v(rng)));
    CHECK(r.in_contact == (r.penetration > 0.0));
    if (!r.in_contact) {
      CHECK(r.force == Vec3::Zero());
    } else {
      ++contacts;
      // friction is tangential: the normal component equals k_wall * penetration
      CHECK(r.force.dot(r.normal) == doctest::Approx(1e4 * r.penetration).epsilon(1e-9));
    }
  }
  CHECK(contacts > 0);
}

TEST_CASE("friction saturates at mu * N above the slip regularization") {
  const auto g = build_canonical_groove();
  const auto& y_run = g.segments[1];
  const Vec3 p = 0.5 * (y_run.start + y_run.end) + 0.002 * Vec3::UnitX();
  const auto fast = contact_query(g, p, g.peg_radius, Vec3(0, 0.05, 0));
  CHECK(-fast.force.y() == doctest::Approx(0.3 * fast.normal_force));
  const auto slow = contact_query(g, p, g.peg_radius, Vec3(0, 0.0005, 0));
  CHECK(-slow.force.y() == doctest::Approx(0.3 * slow.normal_force * 0.5));
}

TEST_CASE("step at equilibrium only advances time") {
  const auto g = build_canonical_groove();
  RobotState s;
  s.position = s.reference = 0.5 * (g.segments[1].start + g.segments[1].end);
  s.time = 3.0;
  const auto [next, contact] = step(s, g, 1e-3);
  CHECK(next.position == s.position);
  CHECK(next.velocity == Vec3::Zero());
  CHECK(next.time == doctest::Approx(3.001));
  CHECK_FALSE(contact.in_contact);
}

TEST_CASE("initial spring force is K times the reference error") {
  const auto g = open_space();
  RobotState s;
  s.stiffness = StiffnessMatrix::diagonal(250, 100, 100);
  s.reference = Vec3(0.01, 0.01, 0);
  const double dt = 1e-3;
  const auto [next, contact] = step(s, g, dt);
  const Vec3 force = next.velocity * SimParams{}.mass / dt;
  CHECK(force.x() == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(force.y() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(force.z() == doctest::Approx(0.0));
}

TEST_CASE("step rejects bad dt and diverged states") {
  const auto g = open_space();
  RobotState s;
  CHECK_THROWS_AS(step(s, g, 0.0), Error);
  CHECK_THROWS_AS(step(s, g, 3e-3), Error);
  s.velocity.x() = std::numeric_limits<double>::quiet_NaN();
  try {
    step(s, g, 1e-3);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SimulationDiverged);
  }
}

TEST_CASE("critically damped step response tracks the closed form") {
  const auto g = open_space();
  const SimParams params;
  RobotState s;
  s.stiffness = StiffnessMatrix::isotropic(100);
  s.reference = Vec3(0.01, 0, 0);
  const double omega = std::sqrt(100.0 / params.mass);
  double max_x = 0, max_dev = 0;
  for (int i = 0; i < 5000; ++i) {
    s = step(s, g, 1e-3, params).first;
    max_x = std::max(max_x, s.position.x());
    max_dev = std::max(max_dev, std::abs(s.position.x() - oracle::critically_damped_step(0.01, omega, s.time)));
  }
  CHECK(max_x <= 0.01 * 1.01);
  CHECK(max_dev < 1e-4);
  CHECK(s.position.x() == doctest::Approx(0.01).epsilon(1e-3));
}

TEST_CASE("free-space energy never increases") {
  const auto g = open_space();
  const SimParams params;
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    RobotState s;
    s.stiffness = StiffnessMatrix(oracle::random_spd(rng, 100, 250));
    s.position = Vec3(0.01, -0.02, 0.015) * (trial + 1) / 5.0;
    s.velocity = Vec3(0.05, 0.0, -0.03);
    const Mat3 d = critical_damping(s.stiffness, params.mass);
    double e = energy(s, params.mass);
    for (int i = 0; i < 10000; ++i) {
      s = step(s, g, 1e-3, params, &d).first;
      const double e_next = energy(s, params.mass);
      REQUIRE(e_next <= e + 1e-9);
      e = e_next;
    }
  }
}

TEST_CASE("critical damping is the SPD square root scaled") {
  const auto k = phase_target_stiffness(TaskPhase::YZSlant);
  const Mat3 d = critical_damping(k, 2.0);
  // (D/2)^2 == m K
  const Mat3 half = 0.5 * d;
  CHECK(((half * half) - 2.0 * k.matrix()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(d.isApprox(d.transpose()));
}

TEST_CASE("stationary reference with empty schedule yields zero force") {
  const auto g = build_canonical_groove();
  const Vec3 p = 0.5 * (g.segments[1].start + g.segments[1].end);
  const auto log = run_schedule(g, {{0.0, p}, {2.0, p}}, {});
  REQUIRE(log.samples.size() == 2000);
  for (const auto& s : log.samples) CHECK(s.force == Vec3::Zero());
}

TEST_CASE("run_schedule input validation") {
  const auto g = build_canonical_groove();
  const Vec3 p = g.segments[1].start;
  CHECK_THROWS_AS(run_schedule(g, {{1.0, p}, {0.5, p}}, {}), Error);
  CHECK_THROWS_AS(run_schedule(g, {{0.0, p}, {1.0, p}}, {{2.0, StiffnessMatrix::isotropic(100)}}),
                  Error);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    run_schedule(g, {{0.0, p}, {0.1, Vec3(nan, 0, 0)}}, {});
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SimulationDiverged);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("telemetry csv layout") {
  const auto g = build_canonical_groove();
  const Vec3 p = g.segments[1].start;
  const auto log = run_schedule(g, {{0.0, p}, {0.01, p}}, {});
  const std::string csv = log.to_csv(5);
  CHECK(csv.rfind("time,ref_x,ref_y,ref_z,x,y,z,vx,vy,vz,fx,fy,fz,k00,k01,k02,k10,k11,k12,k20,k21,k22\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2);
}

TEST_CASE("rollouts are deterministic") {
  const auto g = build_canonical_groove();
  const auto tr = scripted_traversal(g);
  const auto sched = phase_schedule(tr, phase_target_stiffness);
  RunOptions opt;
  opt.initial_stiffness = sched.front().stiffness;
  CHECK(run_schedule(g, tr.waypoints, sched, opt).to_csv() ==
        run_schedule(g, tr.waypoints, sched, opt).to_csv());
}

TEST_CASE("halving dt barely moves the final position") {
  const auto g = build_canonical_groove();
  TraversalOptions topt;
  topt.final_hold = 1.0;
  const auto tr = scripted_traversal(g, topt);
  const auto sched = phase_schedule(tr, phase_target_stiffness);
  RunOptions coarse;
  coarse.initial_stiffness = sched.front().stiffness;
  RunOptions fine = coarse;
  fine.dt = 0.5e-3;
  const Vec3 a = run_schedule(g, tr.waypoints, sched, coarse).samples.back().position;
  const Vec3 b = run_schedule(g, tr.waypoints, sched, fine).samples.back().position;
  CHECK((a - b).norm() < 1e-4);
}

TEST_CASE("correct schedule finishes the track, transposed one does not") {
  const auto g = build_canonical_groove();
  const auto tr = scripted_traversal(g);
  const auto right = phase_schedule(tr, phase_target_stiffness);
  const auto wrong = phase_schedule(tr, transposed_target);
  RunOptions opt;
  opt.initial_stiffness = right.front().stiffness;
  const auto log_right = run_schedule(g, tr.waypoints, right, opt);
  opt.initial_stiffness = wrong.front().stiffness;
  const auto log_wrong = run_schedule(g, tr.waypoints, wrong, opt);

  CHECK((log_right.samples.back().position - g.track_end()).norm() < 0.002);
  CHECK((log_wrong.samples.back().position - g.track_end()).norm() > 0.002);
  CHECK(2.0 * log_right.peak_normal_force() <= log_wrong.peak_normal_force());
}

TEST_CASE("transposed targets swap x and y") {
  CHECK(transposed_target(TaskPhase::YTraverse) == phase_target_stiffness(TaskPhase::XTraverse));
  CHECK(transposed_target(TaskPhase::Entrance) == phase_target_stiffness(TaskPhase::Entrance));
}

TEST_CASE("simulator mailbox applies the newest stiffness between steps") {
  const auto g = build_canonical_groove();
  RobotState init;
  init.position = init.reference = g.segments[1].start;
  Simulator sim(g, init);
  sim.post_stiffness(phase_target_stiffness(TaskPhase::XTraverse), 5);
  sim.post_stiffness(phase_target_stiffness(TaskPhase::Entrance), 3);  // stale
  CHECK(sim.snapshot().stiffness == StiffnessMatrix::isotropic(100));
  sim.advance(1e-3);
  CHECK(sim.snapshot().stiffness == phase_target_stiffness(TaskPhase::XTraverse));
  CHECK(sim.applied_stiffness_seq() == 5);
  sim.post_stiffness(phase_target_stiffness(TaskPhase::YTraverse), 5);  // repeated seq
  sim.advance(1e-3);
  CHECK(sim.snapshot().stiffness == phase_target_stiffness(TaskPhase::XTraverse));
}

TEST_CASE("simulator reference velocity is finite-differenced and decays") {
  const auto g = build_canonical_groove();
  RobotState init;
  init.position = init.reference = g.segments[1].start;
  Simulator sim(g, init);
  sim.post_reference(init.reference);
  for (int i = 0; i < 10; ++i) sim.advance(1e-3);
  sim.post_reference(init.reference + Vec3(0, 0.0001, 0));
  sim.advance(1e-3);
  CHECK(sim.snapshot().reference_velocity.y() == doctest::Approx(0.01));
  for (int i = 0; i < 100; ++i) sim.advance(1e-3);
  CHECK(sim.snapshot().reference_velocity == Vec3::Zero());
}

TEST_CASE("containing segment") {
  const auto g = build_canonical_groove();
  CHECK(g.containing_segment(Vec3(0, 0.05, 0)) == std::size_t{1});
  CHECK(g.containing_segment(Vec3(0.05, 0.1, 0)) == std::size_t{2});
  CHECK_FALSE(g.containing_segment(Vec3(0.05, 0.05, 0)).has_value());
}

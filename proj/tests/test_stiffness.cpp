#include "doctest.h"

#include <array>
#include <cmath>
#include <random>

#include "teleimp/stiffness.hpp"
#include "oracles.hpp"

using namespace teleimp;

namespace {

void check_close(const Mat3& a, const Mat3& b, double tol) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) CHECK(std::abs(a(r, c) - b(r, c)) <= tol);
}

}  // namespace

TEST_CASE("make_axis_aligned places k_high on the named axis") {
  check_close(make_axis_aligned(Axis::X, 250, 100).matrix(), Vec3(250, 100, 100).asDiagonal().toDenseMatrix(), 0);
  check_close(make_axis_aligned(Axis::Z, 100, 100).matrix(), 100 * Mat3::Identity(), 0);
  check_close(make_axis_aligned(Axis::Z, 250, 100).matrix(), Vec3(100, 100, 250).asDiagonal().toDenseMatrix(), 0);
}

TEST_CASE("make_axis_aligned rejects out-of-bounds values naming them") {
  try {
    make_axis_aligned(Axis::Y, 2500, 100);
    FAIL("expected bounds error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Bounds);
    CHECK(std::string(e.what()).find("2500") != std::string::npos);
  }
  CHECK_THROWS_AS(make_axis_aligned(Axis::Y, 250, 5), Error);
  CHECK_THROWS_AS(make_axis_aligned(Axis::Y, NAN, 100), Error);
}

TEST_CASE("StiffnessMatrix rejects asymmetric and indefinite input") {
  Mat3 m = Vec3(100, 100, 100).asDiagonal();
  m(0, 1) = 5;
  CHECK_THROWS_AS(StiffnessMatrix{m}, Error);
  Mat3 neg = Vec3(100, -1, 100).asDiagonal();
  try {
    StiffnessMatrix{neg};
    FAIL("expected invalid stiffness");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidStiffness);
  }
}

TEST_CASE("rotate_stiffness matches brute-force R K R^T") {
  const Mat3 rx45 = axis_rotation(Axis::X, M_PI / 4);
  const auto k = StiffnessMatrix::diagonal(100, 250, 100);
  const Mat3 got = rotate_stiffness(k, rx45).matrix();
  const Mat3 oracle = oracle::triple_product(rx45, k.matrix());
  check_close(got, oracle, 1e-9);

  Mat3 expected;
  expected << 100, 0, 0, 0, 175, 75, 0, 75, 175;
  check_close(got, expected, 1e-9);

  const auto any = StiffnessMatrix::diagonal(300, 120, 45);
  check_close(rotate_stiffness(any, Mat3::Identity()).matrix(), any.matrix(), 0);

  const Mat3 rz90 = axis_rotation(Axis::Z, M_PI / 2);
  check_close(rotate_stiffness(StiffnessMatrix::diagonal(250, 100, 100), rz90).matrix(),
              oracle::triple_product(rz90, Vec3(250, 100, 100).asDiagonal().toDenseMatrix()), 1e-9);
  check_close(rotate_stiffness(StiffnessMatrix::diagonal(250, 100, 100), rz90).matrix(),
              Vec3(100, 250, 100).asDiagonal().toDenseMatrix(), 1e-9);
}

TEST_CASE("rotate_stiffness rejects improper rotations") {
  const auto k = StiffnessMatrix::isotropic(100);
  Mat3 reflect = Mat3::Identity();
  reflect(2, 2) = -1;
  CHECK_THROWS_AS(rotate_stiffness(k, reflect), Error);
  CHECK_THROWS_AS(rotate_stiffness(k, 1.01 * Mat3::Identity()), Error);
  try {
    rotate_stiffness(k, 2 * Mat3::Identity());
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidRotation);
  }
}

TEST_CASE("rotation preserves eigenvalues on random SPD matrices") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 1000; ++i) {
    const Mat3 k = oracle::random_spd(rng, kStiffnessMin, kStiffnessMax);
    const Mat3 r = oracle::random_rotation(rng);
    const StiffnessMatrix km(k);
    const Vec3 before = km.eigenvalues();
    const Vec3 after = rotate_stiffness(km, r).eigenvalues();
    CHECK((before - after).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("ellipsoid of diagonal input is ordered x, y, z") {
  const auto e = ellipsoid_from_stiffness(StiffnessMatrix::diagonal(250, 100, 100));
  CHECK(e.magnitudes == std::array<double, 3>{250, 100, 100});
  CHECK((e.axes[0] - Vec3::UnitX()).norm() < 1e-12);
  CHECK((e.axes[1] - Vec3::UnitY()).norm() < 1e-12);
  CHECK((e.axes[2] - Vec3::UnitZ()).norm() < 1e-12);
}

TEST_CASE("ellipsoid of isotropic input") {
  const auto k = StiffnessMatrix::isotropic(100);
  const auto e = ellipsoid_from_stiffness(k);
  for (double m : e.magnitudes) CHECK(m == doctest::Approx(100).epsilon(1e-12));
  check_close(e.reconstruct(), k.matrix(), 1e-6);
}

TEST_CASE("ellipsoid of slant target has the 45 degree major axis") {
  const auto e = ellipsoid_from_stiffness(phase_target_stiffness(TaskPhase::YZSlant));
  CHECK(e.magnitudes[0] == doctest::Approx(250).epsilon(1e-12));
  CHECK((e.axes[0] - Vec3(0, std::sqrt(0.5), std::sqrt(0.5))).norm() < 1e-9);
}

TEST_CASE("ellipsoid invariants hold on random SPD matrices") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const StiffnessMatrix k(oracle::random_spd(rng, kStiffnessMin, kStiffnessMax));
    const auto e = ellipsoid_from_stiffness(k);
    CHECK(e.magnitudes[0] >= e.magnitudes[1]);
    CHECK(e.magnitudes[1] >= e.magnitudes[2]);
    CHECK(e.magnitudes[2] > 0);
    for (int a = 0; a < 3; ++a) {
      CHECK(std::abs(e.axes[a].norm() - 1) <= 1e-9);
      for (int b = a + 1; b < 3; ++b) CHECK(std::abs(e.axes[a].dot(e.axes[b])) <= 1e-9);
      // first nonzero component positive
      for (int c = 0; c < 3; ++c) {
        if (std::abs(e.axes[a][c]) > 1e-12) {
          CHECK(e.axes[a][c] > 0);
          break;
        }
      }
    }
    CHECK((e.reconstruct() - k.matrix()).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("phase targets") {
  check_close(phase_target_stiffness(TaskPhase::XTraverse).matrix(), Vec3(250, 100, 100).asDiagonal().toDenseMatrix(), 0);
  check_close(phase_target_stiffness(TaskPhase::YTraverse).matrix(), Vec3(100, 250, 100).asDiagonal().toDenseMatrix(), 0);
  check_close(phase_target_stiffness(TaskPhase::Entrance).matrix(), Vec3(100, 100, 250).asDiagonal().toDenseMatrix(), 0);
  Mat3 slant;
  slant << 100, 0, 0, 0, 175, 75, 0, 75, 175;
  check_close(phase_target_stiffness(TaskPhase::YZSlant).matrix(), slant, 1e-9);
  CHECK(to_canonical_string(phase_target_stiffness(TaskPhase::YZSlant)) ==
        "100,0,0,0,175,75,0,75,175");
}

TEST_CASE("classify_stiffness") {
  CHECK(classify_stiffness(StiffnessMatrix::diagonal(250, 100, 100), 0.05) == TaskPhase::XTraverse);

  const auto near = StiffnessMatrix::diagonal(260, 104, 98);
  // numpy oracle: ||diag(10, 4, -2)||_F / ||diag(250, 100, 100)||_F
  CHECK(relative_distance(near, phase_target_stiffness(TaskPhase::XTraverse)) ==
        doctest::Approx(0.03813850356982369).epsilon(1e-12));
  CHECK(classify_stiffness(near, 0.05) == TaskPhase::XTraverse);

  const auto between = StiffnessMatrix::diagonal(175, 175, 100);
  for (TaskPhase p : kAllPhases) {
    CHECK(oracle::frobenius_relative(between.matrix(), phase_target_stiffness(p).matrix()) > 0.05);
  }
  CHECK_FALSE(classify_stiffness(between, 0.05).has_value());
}

TEST_CASE("classify round-trips every target for any tol") {
  for (double tol : {1e-12, 0.01, 0.05, 0.5, 10.0}) {
    for (TaskPhase p : kAllPhases) CHECK(classify_stiffness(phase_target_stiffness(p), tol) == p);
  }
}

TEST_CASE("targets are pairwise separated by more than the default tolerance") {
  for (TaskPhase a : kAllPhases)
    for (TaskPhase b : kAllPhases)
      if (a != b)
        CHECK(oracle::frobenius_relative(phase_target_stiffness(a).matrix(),
                                         phase_target_stiffness(b).matrix()) > 0.05);
}

TEST_CASE("make_axis_aligned always yields a valid stiffness") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> k(kStiffnessMin, kStiffnessMax);
  std::uniform_int_distribution<int> axis(0, 2);
  for (int i = 0; i < 500; ++i) {
    const auto m = make_axis_aligned(static_cast<Axis>(axis(rng)), k(rng), k(rng));
    CHECK(m.eigenvalues().minCoeff() >= kStiffnessMin);
    CHECK(m.eigenvalues().maxCoeff() <= kStiffnessMax);
  }
}

TEST_CASE("sanitize_stiffness") {
  SUBCASE("in-range symmetric input is untouched") {
    const Mat3 k = phase_target_stiffness(TaskPhase::YZSlant).matrix();
    CHECK(sanitize_stiffness(k).matrix() == k);
  }
  SUBCASE("mild asymmetry is averaged") {
    Mat3 k = Vec3(250, 100, 100).asDiagonal();
    k(0, 1) = 4;
    const auto s = sanitize_stiffness(k);
    CHECK(s(0, 1) == 2);
    CHECK(s(1, 0) == 2);
  }
  SUBCASE("gross asymmetry is rejected") {
    Mat3 k = Vec3(250, 100, 100).asDiagonal();
    k(0, 1) = 30;
    CHECK_THROWS_AS(sanitize_stiffness(k), Error);
  }
  SUBCASE("out-of-range eigenvalues are clamped") {
    const auto s = sanitize_stiffness(Vec3(5000, 100, 1).asDiagonal());
    const Vec3 ev = s.eigenvalues();
    CHECK(ev[0] == doctest::Approx(kStiffnessMin));
    CHECK(ev[2] == doctest::Approx(kStiffnessMax));
  }
  SUBCASE("indefinite input reports eigenvalues") {
    try {
      sanitize_stiffness(Vec3(250, -3, 100).asDiagonal());
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidStiffness);
      CHECK(std::string(e.what()).find("-3") != std::string::npos);
    }
  }
}

TEST_CASE("canonical string") {
  CHECK(to_canonical_string(StiffnessMatrix::diagonal(250, 100, 100)) == "250,0,0,0,100,0,0,0,100");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(0.1) == "0.1");
}

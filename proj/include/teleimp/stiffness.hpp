#pragma once

// Translational stiffness algebra: validated 3x3 SPD matrices, ellipsoid
// extraction, the four groove-task phase targets and nearest-target
// classification.

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "teleimp/error.hpp"

namespace teleimp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kStiffnessMin = 10.0;    // N/m
inline constexpr double kStiffnessMax = 2000.0;  // N/m
inline constexpr double kSymmetryTol = 1e-9;
inline constexpr double kDefaultClassifyTol = 0.05;

enum class Axis { X = 0, Y = 1, Z = 2 };

enum class TaskPhase { Entrance = 0, YTraverse = 1, XTraverse = 2, YZSlant = 3 };

inline constexpr std::array<TaskPhase, 4> kAllPhases = {
    TaskPhase::Entrance, TaskPhase::YTraverse, TaskPhase::XTraverse, TaskPhase::YZSlant};

std::string_view to_string(TaskPhase phase);
std::optional<TaskPhase> parse_phase(std::string_view text);

/// Symmetric positive-definite translational stiffness with eigenvalues in
/// [kStiffnessMin, kStiffnessMax]. Construction validates; there is no way to
/// hold an invalid value.
class StiffnessMatrix {
 public:
  /// Throws Error{InvalidStiffness} for asymmetric or non-PD input and
  /// Error{Bounds} when an eigenvalue leaves the clamping bounds.
  explicit StiffnessMatrix(const Mat3& k);

  static StiffnessMatrix isotropic(double k) { return StiffnessMatrix(k * Mat3::Identity()); }
  static StiffnessMatrix diagonal(double kx, double ky, double kz);

  const Mat3& matrix() const noexcept { return k_; }
  double operator()(int row, int col) const { return k_(row, col); }

  /// Ascending eigenvalues.
  Vec3 eigenvalues() const;

  bool operator==(const StiffnessMatrix& other) const { return k_ == other.k_; }

 private:
  Mat3 k_;
};

/// Eigen-axes and magnitudes, sorted by descending magnitude. Semi-axis
/// length is proportional to the eigenvalue.
struct EllipsoidSpec {
  std::array<Vec3, 3> axes;
  std::array<double, 3> magnitudes;

  Mat3 reconstruct() const;
};

/// diag with k_high on high_axis and k_low on the others.
StiffnessMatrix make_axis_aligned(Axis high_axis, double k_high, double k_low);

/// Proper rotation about a coordinate axis (right-hand rule).
Mat3 axis_rotation(Axis axis, double radians);

/// rot * k * rot^T. Throws Error{InvalidRotation} unless rot is proper
/// orthonormal within 1e-9.
StiffnessMatrix rotate_stiffness(const StiffnessMatrix& k, const Mat3& rot);

EllipsoidSpec ellipsoid_from_stiffness(const StiffnessMatrix& k);

StiffnessMatrix phase_target_stiffness(TaskPhase phase);

/// Relative Frobenius distance ||k - target||_F / ||target||_F.
double relative_distance(const StiffnessMatrix& k, const StiffnessMatrix& target);

/// Nearest phase target when within tol (relative Frobenius); ties go to the
/// earlier phase in enumeration order.
std::optional<TaskPhase> classify_stiffness(const StiffnessMatrix& k,
                                            double tol = kDefaultClassifyTol);

/// Turns a raw (possibly slightly asymmetric, possibly out-of-range) matrix
/// into a valid stiffness: rejects asymmetry above 10% of the largest
/// magnitude, symmetrizes, rejects non-PD results and clamps eigenvalues into
/// the bounds. In-range symmetric input is returned bit-exact.
StiffnessMatrix sanitize_stiffness(const Mat3& raw);

/// Nine comma-separated numbers, row-major, shortest round-trip decimal form.
std::string to_canonical_string(const StiffnessMatrix& k);
std::string to_canonical_string(const Mat3& k);

/// Formats a double in shortest round-trip form ("250", "0.1", "1e-05").
std::string format_number(double value);

}  // namespace teleimp

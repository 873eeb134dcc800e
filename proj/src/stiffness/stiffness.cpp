#include "teleimp/stiffness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace teleimp {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Bounds: return "bounds";
    case ErrorKind::InvalidRotation: return "invalid_rotation";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::InvalidStiffness: return "invalid_stiffness";
    case ErrorKind::UnparseableResponse: return "unparseable_response";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::ModelUnavailable: return "model_unavailable";
    case ErrorKind::Image: return "image";
    case ErrorKind::Capture: return "capture";
    case ErrorKind::SimulationDiverged: return "simulation_diverged";
    case ErrorKind::ReindexRefused: return "reindex_refused";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

std::string_view to_string(TaskPhase phase) {
  switch (phase) {
    case TaskPhase::Entrance: return "Entrance";
    case TaskPhase::YTraverse: return "YTraverse";
    case TaskPhase::XTraverse: return "XTraverse";
    case TaskPhase::YZSlant: return "YZSlant";
  }
  return "?";
}

std::optional<TaskPhase> parse_phase(std::string_view text) {
  for (TaskPhase p : kAllPhases) {
    if (text == to_string(p)) return p;
  }
  return std::nullopt;
}

std::string format_number(double value) {
  if (value == 0.0) return "0";  // folds -0
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

double max_asymmetry(const Mat3& k) {
  return (k - k.transpose()).cwiseAbs().maxCoeff();
}

std::string eigen_list(const Vec3& ev) {
  std::ostringstream os;
  os << "[" << format_number(ev[0]) << ", " << format_number(ev[1]) << ", "
     << format_number(ev[2]) << "]";
  return os.str();
}

void check_entry_bounds(double v, const char* what) {
  if (!std::isfinite(v) || v < kStiffnessMin || v > kStiffnessMax) {
    std::ostringstream os;
    os << what << " = " << v << " N/m outside [" << kStiffnessMin << ", " << kStiffnessMax << "]";
    throw Error(ErrorKind::Bounds, os.str());
  }
}

}  // namespace

StiffnessMatrix::StiffnessMatrix(const Mat3& k) : k_(k) {
  if (!k_.allFinite()) {
    throw Error(ErrorKind::InvalidStiffness, "stiffness has non-finite entries");
  }
  if (max_asymmetry(k_) > kSymmetryTol) {
    throw Error(ErrorKind::InvalidStiffness,
                "stiffness not symmetric: max |k_ij - k_ji| = " + format_number(max_asymmetry(k_)));
  }
  const Vec3 ev = eigenvalues();
  if (ev.minCoeff() <= 0.0) {
    throw Error(ErrorKind::InvalidStiffness,
                "stiffness not positive definite, eigenvalues " + eigen_list(ev));
  }
  // Relative slack so targets built by rotation do not trip on rounding.
  const double slack = 1e-9 * kStiffnessMax;
  if (ev.minCoeff() < kStiffnessMin - slack || ev.maxCoeff() > kStiffnessMax + slack) {
    throw Error(ErrorKind::Bounds, "stiffness eigenvalues " + eigen_list(ev) + " outside [" +
                                       format_number(kStiffnessMin) + ", " +
                                       format_number(kStiffnessMax) + "] N/m");
  }
}

StiffnessMatrix StiffnessMatrix::diagonal(double kx, double ky, double kz) {
  return StiffnessMatrix(Vec3(kx, ky, kz).asDiagonal().toDenseMatrix());
}

Vec3 StiffnessMatrix::eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<Mat3> solver(k_, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

Mat3 EllipsoidSpec::reconstruct() const {
  Mat3 out = Mat3::Zero();
  for (std::size_t i = 0; i < 3; ++i) out += magnitudes[i] * axes[i] * axes[i].transpose();
  return out;
}

StiffnessMatrix make_axis_aligned(Axis high_axis, double k_high, double k_low) {
  check_entry_bounds(k_high, "k_high");
  check_entry_bounds(k_low, "k_low");
  Vec3 d = Vec3::Constant(k_low);
  d[static_cast<int>(high_axis)] = k_high;
  return StiffnessMatrix::diagonal(d[0], d[1], d[2]);
}

Mat3 axis_rotation(Axis axis, double radians) {
  switch (axis) {
    case Axis::X: return Eigen::AngleAxisd(radians, Vec3::UnitX()).toRotationMatrix();
    case Axis::Y: return Eigen::AngleAxisd(radians, Vec3::UnitY()).toRotationMatrix();
    case Axis::Z: return Eigen::AngleAxisd(radians, Vec3::UnitZ()).toRotationMatrix();
  }
  return Mat3::Identity();
}

StiffnessMatrix rotate_stiffness(const StiffnessMatrix& k, const Mat3& rot) {
  if (!rot.allFinite()) throw Error(ErrorKind::InvalidRotation, "rotation has non-finite entries");
  const double ortho = (rot.transpose() * rot - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = rot.determinant();
  if (ortho > 1e-9 || std::abs(det - 1.0) > 1e-9) {
    throw Error(ErrorKind::InvalidRotation, "not a proper rotation: |R^T R - I|_max = " +
                                                format_number(ortho) + ", det = " + format_number(det));
  }
  const Mat3 m = rot * k.matrix() * rot.transpose();
  return StiffnessMatrix(0.5 * (m + m.transpose()));
}

EllipsoidSpec ellipsoid_from_stiffness(const StiffnessMatrix& k) {
  Eigen::SelfAdjointEigenSolver<Mat3> solver(k.matrix());
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::Numerical, "eigen solver failed");
  }
  const Vec3 values = solver.eigenvalues();
  const Mat3 vectors = solver.eigenvectors();

  auto dominant_index = [&](int col) {
    Eigen::Index idx = 0;
    vectors.col(col).cwiseAbs().maxCoeff(&idx);
    return static_cast<int>(idx);
  };

  std::array<int, 3> order{0, 1, 2};
  // Descending magnitude; equal magnitudes ordered by dominant coordinate so
  // diagonal input reports x, y, z.
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double scale = std::max(std::abs(values[a]), std::abs(values[b]));
    if (std::abs(values[a] - values[b]) > 1e-12 * scale) return values[a] > values[b];
    return dominant_index(a) < dominant_index(b);
  });

  EllipsoidSpec spec;
  for (std::size_t i = 0; i < 3; ++i) {
    Vec3 axis = vectors.col(order[i]).normalized();
    for (int c = 0; c < 3; ++c) {
      if (std::abs(axis[c]) > 1e-12) {
        if (axis[c] < 0) axis = -axis;
        break;
      }
    }
    spec.axes[i] = axis;
    spec.magnitudes[i] = values[order[i]];
  }

  const double residual = (spec.reconstruct() - k.matrix()).cwiseAbs().maxCoeff();
  if (residual > 1e-6) {
    throw Error(ErrorKind::Numerical,
                "ellipsoid reconstruction residual " + format_number(residual) + " exceeds 1e-6");
  }
  return spec;
}

StiffnessMatrix phase_target_stiffness(TaskPhase phase) {
  constexpr double kHigh = 250.0;
  constexpr double kLow = 100.0;
  switch (phase) {
    case TaskPhase::Entrance: return make_axis_aligned(Axis::Z, kHigh, kLow);
    case TaskPhase::YTraverse: return make_axis_aligned(Axis::Y, kHigh, kLow);
    case TaskPhase::XTraverse: return make_axis_aligned(Axis::X, kHigh, kLow);
    case TaskPhase::YZSlant: {
      const StiffnessMatrix rotated = rotate_stiffness(make_axis_aligned(Axis::Y, kHigh, kLow),
                                                       axis_rotation(Axis::X, M_PI / 4.0));
      // Snap to a 1e-9 N/m grid so the canonical target prints and parses
      // exactly (175, 75, 0 rather than 174.99999999999997, 1e-14).
      Mat3 snapped = rotated.matrix().unaryExpr([](double v) { return std::round(v * 1e9) / 1e9; });
      return StiffnessMatrix(snapped);
    }
  }
  throw Error(ErrorKind::Configuration, "unknown phase");
}

double relative_distance(const StiffnessMatrix& k, const StiffnessMatrix& target) {
  return (k.matrix() - target.matrix()).norm() / target.matrix().norm();
}

std::optional<TaskPhase> classify_stiffness(const StiffnessMatrix& k, double tol) {
  std::optional<TaskPhase> best;
  double best_dist = 0.0;
  for (TaskPhase p : kAllPhases) {
    const double d = relative_distance(k, phase_target_stiffness(p));
    if (!best || d < best_dist) {
      best = p;
      best_dist = d;
    }
  }
  if (best && best_dist <= tol) return best;
  return std::nullopt;
}

StiffnessMatrix sanitize_stiffness(const Mat3& raw) {
  if (!raw.allFinite()) {
    throw Error(ErrorKind::InvalidStiffness, "stiffness has non-finite entries");
  }
  const double largest = raw.cwiseAbs().maxCoeff();
  const double asym = max_asymmetry(raw);
  if (asym > 0.1 * largest) {
    throw Error(ErrorKind::InvalidStiffness,
                "stiffness asymmetry " + format_number(asym) + " exceeds 10% of largest entry " +
                    format_number(largest));
  }
  Mat3 sym = raw;
  if (asym > kSymmetryTol) sym = 0.5 * (raw + raw.transpose());

  Eigen::SelfAdjointEigenSolver<Mat3> solver(sym);
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::Numerical, "eigen solver failed");
  const Vec3 ev = solver.eigenvalues();
  if (ev.minCoeff() <= 0.0) {
    throw Error(ErrorKind::InvalidStiffness,
                "stiffness not positive definite, eigenvalues " + eigen_list(ev));
  }
  if (ev.minCoeff() >= kStiffnessMin && ev.maxCoeff() <= kStiffnessMax) {
    return StiffnessMatrix(sym);
  }
  const Vec3 clamped = ev.cwiseMax(kStiffnessMin).cwiseMin(kStiffnessMax);
  const Mat3 v = solver.eigenvectors();
  Mat3 rebuilt = v * clamped.asDiagonal() * v.transpose();
  return StiffnessMatrix(0.5 * (rebuilt + rebuilt.transpose()));
}

std::string to_canonical_string(const Mat3& k) {
  std::string out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (r || c) out += ',';
      out += format_number(k(r, c));
    }
  }
  return out;
}

std::string to_canonical_string(const StiffnessMatrix& k) { return to_canonical_string(k.matrix()); }

}  // namespace teleimp

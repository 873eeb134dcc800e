#pragma once

// Synthetic camera frames of the groove structure. Stand-in for the real
// scene camera: deterministic, cheap, and labelled by construction.

#include <cstdint>
#include <optional>
#include <utility>

#include "teleimp/groove_sim.hpp"
#include "teleimp/image.hpp"

namespace teleimp::scene {

// Ideal: even lighting, frontal. Lab: uneven lighting, sensor noise, color cast.
enum class Environment { Ideal, Lab };

std::string_view to_string(Environment env);
std::optional<Environment> parse_environment(std::string_view text);

struct CameraView {
  Vec3 target = Vec3::Zero();  // world point at the image center
  double field_of_view = 0.12;  // m spanned by the image width
  int width = 1280;
  int height = 720;
  Environment environment = Environment::Lab;
  std::uint64_t seed = 0;  // noise seed (Lab only)
  std::optional<Vec3> peg;
};

/// World point -> pixel (u right, v down), oblique projection.
std::pair<double, double> project(const CameraView& view, const Vec3& p);

Image render_scene(const sim::GrooveGeometry& geom, const CameraView& view);

/// Phase of the segment containing the camera target, if any.
std::optional<TaskPhase> scene_phase(const sim::GrooveGeometry& geom, const Vec3& target);

/// Point at fraction `s` in [0, 1] along the centerline of `phase`'s segment.
Vec3 phase_view_target(const sim::GrooveGeometry& geom, TaskPhase phase, double s);

}  // namespace teleimp::scene

#include "teleimp/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "teleimp/error.hpp"

namespace teleimp::scene {

std::string_view to_string(Environment env) {
  return env == Environment::Ideal ? "Ideal" : "Lab";
}

std::optional<Environment> parse_environment(std::string_view text) {
  if (text == "Ideal") return Environment::Ideal;
  if (text == "Lab") return Environment::Lab;
  return std::nullopt;
}

std::pair<double, double> project(const CameraView& view, const Vec3& p) {
  const double s = view.width / view.field_of_view;
  const Vec3 d = p - view.target;
  return {view.width / 2.0 + s * (d.x() + 0.5 * d.y()), view.height / 2.0 - s * (d.z() + 0.5 * d.y())};
}

namespace {

double dist_to_screen_segment(double px, double py, std::pair<double, double> a, std::pair<double, double> b) {
  const double dx = b.first - a.first, dy = b.second - a.second;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - a.first) * dx + (py - a.second) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (a.first + t * dx), py - (a.second + t * dy));
}

void fill_capsule(Image& img, std::pair<double, double> a, std::pair<double, double> b, double r, Rgb c) {
  const int x_lo = std::max(0, static_cast<int>(std::floor(std::min(a.first, b.first) - r)));
  const int x_hi = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(a.first, b.first) + r)));
  const int y_lo = std::max(0, static_cast<int>(std::floor(std::min(a.second, b.second) - r)));
  const int y_hi = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(a.second, b.second) + r)));
  for (int y = y_lo; y <= y_hi; ++y)
    for (int x = x_lo; x <= x_hi; ++x)
      if (dist_to_screen_segment(x + 0.5, y + 0.5, a, b) <= r) img.set(x, y, c);
}

std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

Image render_scene(const sim::GrooveGeometry& geom, const CameraView& view) {
  if (view.width <= 0 || view.height <= 0 || !(view.field_of_view > 0))
    throw Error(ErrorKind::Configuration, "camera view needs positive size and field of view");
  Image img(view.width, view.height, {200, 196, 188});
  const double s = view.width / view.field_of_view;

  // Structure block: a wide light capsule under each run, then the dark
  // tunnel, shaded by height so the slant reads as rising.
  for (const auto& seg : geom.segments)
    fill_capsule(img, project(view, seg.start), project(view, seg.end), 2.5 * seg.half_width * s, {150, 150, 155});
  for (const auto& seg : geom.segments) {
    const int steps = 16;
    for (int i = 0; i < steps; ++i) {
      const Vec3 a = seg.start + (seg.end - seg.start) * (static_cast<double>(i) / steps);
      const Vec3 b = seg.start + (seg.end - seg.start) * (static_cast<double>(i + 1) / steps);
      const double shade = std::clamp(40.0 + 900.0 * 0.5 * (a.z() + b.z()), 20.0, 120.0);
      const auto c = clamp8(shade);
      fill_capsule(img, project(view, a), project(view, b), seg.half_width * s, {c, c, clamp8(shade + 10)});
    }
  }
  if (view.peg) {
    const auto [u, v] = project(view, *view.peg);
    fill_capsule(img, {u, v}, {u, v}, geom.peg_radius * s, {90, 110, 200});
  }

  if (view.environment == Environment::Lab) {
    std::mt19937_64 rng(view.seed);
    std::normal_distribution<double> noise(0.0, 9.0);
    const double cx = 0.25 * view.width, cy = 0.2 * view.height;
    const double diag = std::hypot(view.width, view.height);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const double light = 1.05 - 0.6 * std::hypot(x - cx, y - cy) / diag;
        const Rgb c = img.at(x, y);
        img.set(x, y, {clamp8(c.r * light * 1.08 + noise(rng)), clamp8(c.g * light + noise(rng)),
                       clamp8(c.b * light * 0.85 + noise(rng))});
      }
    }
  }
  return img;
}

std::optional<TaskPhase> scene_phase(const sim::GrooveGeometry& geom, const Vec3& target) {
  const auto idx = geom.containing_segment(target);
  if (!idx) return std::nullopt;
  return geom.segments[*idx].kind;
}

Vec3 phase_view_target(const sim::GrooveGeometry& geom, TaskPhase phase, double s) {
  for (const auto& seg : geom.segments)
    if (seg.kind == phase) return seg.start + std::clamp(s, 0.0, 1.0) * (seg.end - seg.start);
  throw Error(ErrorKind::Configuration, "geometry has no " + std::string(to_string(phase)) + " segment");
}

}  // namespace teleimp::scene

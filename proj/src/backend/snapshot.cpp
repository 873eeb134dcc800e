#include "teleimp/snapshot.hpp"

#include <cmath>

#include "teleimp/error.hpp"

namespace teleimp::capture {

SimulatedCamera::SimulatedCamera(sim::GrooveGeometry geom, scene::CameraView view)
    : geom_(std::move(geom)), view_(std::move(view)) {}

void SimulatedCamera::set_view(const scene::CameraView& view) {
  std::lock_guard lk(mutex_);
  view_ = view;
}

scene::CameraView SimulatedCamera::view() const {
  std::lock_guard lk(mutex_);
  return view_;
}

void SimulatedCamera::follow(std::function<std::optional<Vec3>()> position) {
  std::lock_guard lk(mutex_);
  follow_ = std::move(position);
}

std::optional<Frame> SimulatedCamera::current_frame() {
  scene::CameraView view;
  std::function<std::optional<Vec3>()> follow;
  {
    std::lock_guard lk(mutex_);
    view = view_;
    follow = follow_;
  }
  if (follow) {
    if (auto p = follow()) {
      view.target = *p;
      view.peg = *p;
    }
  }
  return Frame{scene::render_scene(geom_, view), scene::scene_phase(geom_, view.target)};
}

std::shared_ptr<const vlm::GazeSnapshot> SnapshotStore::add(vlm::GazeSnapshot snapshot) {
  std::string bytes;
  {
    const auto raw = encode_png(snapshot.image);
    bytes.assign(raw.begin(), raw.end());
  }
  std::lock_guard lk(mutex_);
  snapshot.id = "s" + std::to_string(next_++);
  snapshot.url = "/snapshots/" + snapshot.id + ".png";
  auto shared = std::make_shared<const vlm::GazeSnapshot>(std::move(snapshot));
  snapshots_[shared->id] = shared;
  png_[shared->id] = std::move(bytes);
  return shared;
}

std::shared_ptr<const vlm::GazeSnapshot> SnapshotStore::get(const std::string& id) const {
  std::lock_guard lk(mutex_);
  auto it = snapshots_.find(id);
  return it == snapshots_.end() ? nullptr : it->second;
}

std::optional<std::string> SnapshotStore::png(const std::string& id) const {
  std::lock_guard lk(mutex_);
  auto it = png_.find(id);
  if (it == png_.end()) return std::nullopt;
  return it->second;
}

std::size_t SnapshotStore::size() const {
  std::lock_guard lk(mutex_);
  return snapshots_.size();
}

std::shared_ptr<const vlm::GazeSnapshot> capture_snapshot(SceneSource& source, double u, double v,
                                                          SnapshotStore& store) {
  auto frame = source.current_frame();
  if (!frame || frame->image.empty())
    throw Error(ErrorKind::Capture, "no camera frame available");
  const auto& img = frame->image;
  if (!std::isfinite(u) || !std::isfinite(v) || u < 0 || v < 0 || u >= img.width || v >= img.height)
    throw Error(ErrorKind::Bounds, "gaze point outside the " + std::to_string(img.width) + "x" +
                                       std::to_string(img.height) + " frame");
  vlm::GazeSnapshot s;
  s.image = img;
  draw_ring(s.image, u, v, kRingRadiusFraction * img.width, kRingStroke, kRingColor);
  s.u = u;
  s.v = v;
  s.overlay_applied = true;
  s.scene_phase = frame->phase;
  return store.add(std::move(s));
}

}  // namespace teleimp::capture

#pragma once

// Scene frames, gaze overlay and the per-session snapshot store that backs
// GET /snapshots/{id}.png.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>

#include "teleimp/prompt.hpp"
#include "teleimp/scene.hpp"

namespace teleimp::capture {

struct Frame {
  Image image;
  std::optional<TaskPhase> phase;  // known only for simulated scenes
};

class SceneSource {
 public:
  virtual ~SceneSource() = default;
  virtual std::optional<Frame> current_frame() = 0;
};

/// Renders the groove from a camera aimed at a fixed point, or at whatever
/// `follow` reports (typically the robot's telemetry position).
class SimulatedCamera : public SceneSource {
 public:
  SimulatedCamera(sim::GrooveGeometry geom, scene::CameraView view);

  void set_view(const scene::CameraView& view);
  scene::CameraView view() const;
  /// Camera target and peg track this position when it has a value.
  void follow(std::function<std::optional<Vec3>()> position);

  std::optional<Frame> current_frame() override;

 private:
  sim::GrooveGeometry geom_;
  mutable std::mutex mutex_;
  scene::CameraView view_;
  std::function<std::optional<Vec3>()> follow_;
};

/// Serves a fixed image (or nothing); used for tests and file-backed frames.
class StaticSource : public SceneSource {
 public:
  explicit StaticSource(std::optional<Frame> frame = std::nullopt) : frame_(std::move(frame)) {}
  std::optional<Frame> current_frame() override { return frame_; }

 private:
  std::optional<Frame> frame_;
};

inline constexpr double kRingRadiusFraction = 0.02;
inline constexpr double kRingStroke = 3.0;
inline constexpr Rgb kRingColor{255, 0, 0};

class SnapshotStore {
 public:
  /// Assigns id and url, stores PNG bytes, returns the completed snapshot.
  std::shared_ptr<const vlm::GazeSnapshot> add(vlm::GazeSnapshot snapshot);
  std::shared_ptr<const vlm::GazeSnapshot> get(const std::string& id) const;
  std::optional<std::string> png(const std::string& id) const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::size_t next_ = 1;
  std::map<std::string, std::shared_ptr<const vlm::GazeSnapshot>> snapshots_;
  std::map<std::string, std::string> png_;
};

/// Copies the current frame, draws the gaze ring and stores the result.
/// Error{Capture} without a frame; Error{Bounds} for gaze outside the image.
std::shared_ptr<const vlm::GazeSnapshot> capture_snapshot(SceneSource& source, double u, double v,
                                                          SnapshotStore& store);

}  // namespace teleimp::capture

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "tar/common.hpp"
#include "tar/descriptor.hpp"

namespace tar {

// ---------------------------------------------------------------------------
// Scene objects and their scripted motion
// ---------------------------------------------------------------------------

struct Disk {
  double radius = 0.0;
};

/// Axis-aligned (world frame) rectangle centred on the object position.
struct Rectangle {
  double width = 0.0;
  double height = 0.0;
};

using Shape = std::variant<Disk, Rectangle>;

struct StaticMotion {
  Vec2 position = Vec2::Zero();
};

struct CircleMotion {
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
  double angular_rate = 0.0;
  double phase = 0.0;
};

struct Waypoint {
  double t = 0.0;
  Vec2 position = Vec2::Zero();
};

/// Piecewise-linear path; held at the first/last waypoint outside its span.
struct WaypointMotion {
  std::vector<Waypoint> points;
};

class MotionScript {
 public:
  using Kind = std::variant<StaticMotion, CircleMotion, WaypointMotion>;

  MotionScript() = default;
  /// Validates the script (strictly increasing waypoint times, non-empty path).
  explicit MotionScript(Kind kind);

  Vec2 position_at(double t) const;
  const Kind& kind() const { return kind_; }

 private:
  Kind kind_ = StaticMotion{};
};

struct SceneObject {
  std::uint32_t instance_id = 0;
  int class_id = 0;
  Shape shape = Disk{0.1};
  int z_order = 0;
  MotionScript motion;
  /// Hidden objects are not rendered (occluders waiting for occlude_start).
  bool visible = true;
  Vec2 position = Vec2::Zero();

  bool covers(const Vec2& ground) const;
  /// Half extents of the world-aligned bounding box.
  Vec2 half_extent() const;
};

// ---------------------------------------------------------------------------
// Drone and camera
// ---------------------------------------------------------------------------

/// World frame: x, y horizontal, z up; yaw counter-clockwise about +z.
/// Body frame: x = right, y = forward, z = up, so body->world is Rz(psi).
struct DroneState {
  Vec3 p = Vec3(0.0, 0.0, 2.0);
  double psi = 0.0;
  Vec3 v = Vec3::Zero();
  double psi_dot = 0.0;
};

Vec2 body_to_world(const Vec2& body, double psi);
Vec2 world_to_body(const Vec2& world, double psi);

/// Downward-facing pinhole camera. Image +x = body right, image +y = body
/// backward, so body forward is toward the top of the image.
struct CameraModel {
  int width = 640;
  int height = 480;
  double focal = 400.0;

  void validate() const;
};

/// Continuous image coordinates of a ground point (no bounds check).
/// Throws ConfigError when the drone is not above ground.
Vec2 ground_to_image(const CameraModel& camera, const DroneState& drone, const Vec2& ground);

/// Ground point seen through an image location (inverse of ground_to_image).
Vec2 image_to_ground(const CameraModel& camera, const DroneState& drone, const Vec2& pixel);

/// nullopt when the point lands outside [0, W) x [0, H).
std::optional<Vec2> project_to_image(const CameraModel& camera, const DroneState& drone,
                                     const Vec2& ground);

// ---------------------------------------------------------------------------
// World state and frames
// ---------------------------------------------------------------------------

struct WorldState {
  double t = 0.0;
  std::uint64_t tick = 0;
  std::vector<SceneObject> objects;
  DroneState drone;

  const SceneObject* find(std::uint32_t instance_id) const;
  SceneObject* find(std::uint32_t instance_id);
};

/// Advances every object along its script and the sim clock by dt. The drone
/// plant is stepped separately by the offboard module.
WorldState step_world(WorldState world, double dt);

/// A rendered camera frame. The descriptor field is evaluated on demand from
/// the descriptor model; every pixel owns an independent seeded stream, so the
/// field is a pure function of (model, seq, pixel) and never materialized.
class Frame {
 public:
  Frame() = default;
  Frame(std::uint64_t seq, double t, int width, int height,
        std::shared_ptr<const DescriptorModel> model);

  std::uint64_t seq() const { return seq_; }
  double t() const { return t_; }
  int width() const { return width_; }
  int height() const { return height_; }

  std::uint32_t id_at(int x, int y) const { return id_map_[index(x, y)]; }
  const std::vector<std::uint32_t>& id_map() const { return id_map_; }
  std::vector<std::uint32_t>& id_map() { return id_map_; }
  const std::vector<std::uint8_t>& render() const { return render_; }
  std::vector<std::uint8_t>& render() { return render_; }

  /// Class of each visible instance; background (0) maps to class 0.
  void set_instance_class(std::uint32_t instance_id, int class_id);
  int class_of(std::uint32_t instance_id) const;

  const DescriptorModel& model() const { return *model_; }
  std::shared_ptr<const DescriptorModel> model_ptr() const { return model_; }
  int descriptor_dim() const { return model_ ? model_->dim() : 0; }

  Descriptor descriptor_at(int x, int y) const;
  /// Adds the descriptor of pixel `index` to `sum`.
  void accumulate_descriptor(std::size_t index, Descriptor& sum) const;

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

 private:
  std::uint64_t seq_ = 0;
  double t_ = 0.0;
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint32_t> id_map_;
  std::vector<std::uint8_t> render_;
  std::map<std::uint32_t, int> instance_class_;
  std::shared_ptr<const DescriptorModel> model_;
};

/// Deterministic grey level of an instance id in rendered frames.
std::uint8_t render_intensity(std::uint32_t instance_id);

/// Rasterizes the scene: each pixel takes the highest z_order object whose
/// shape contains the pixel centre (ties: higher instance id), else 0.
Frame render_frame(const WorldState& world, const CameraModel& camera,
                   std::shared_ptr<const DescriptorModel> model);

}  // namespace tar

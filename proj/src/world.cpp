#include "tar/world.hpp"

#include <algorithm>
#include <string>

namespace tar {

MotionScript::MotionScript(Kind kind) : kind_(std::move(kind)) {
  if (const auto* w = std::get_if<WaypointMotion>(&kind_)) {
    if (w->points.empty()) throw ConfigError("waypoint motion needs at least one waypoint");
    for (std::size_t k = 1; k < w->points.size(); ++k)
      if (!(w->points[k].t > w->points[k - 1].t))
        throw ConfigError("waypoint times must be strictly increasing");
  }
  if (const auto* c = std::get_if<CircleMotion>(&kind_)) {
    if (c->radius < 0.0) throw ConfigError("circle radius must be >= 0");
  }
}

Vec2 MotionScript::position_at(double t) const {
  struct Visitor {
    double t;
    Vec2 operator()(const StaticMotion& s) const { return s.position; }
    Vec2 operator()(const CircleMotion& c) const {
      const double a = c.angular_rate * t + c.phase;
      return c.center + c.radius * Vec2(std::cos(a), std::sin(a));
    }
    Vec2 operator()(const WaypointMotion& w) const {
      const auto& pts = w.points;
      if (t <= pts.front().t) return pts.front().position;
      if (t >= pts.back().t) return pts.back().position;
      auto hi = std::upper_bound(pts.begin(), pts.end(), t,
                                 [](double tt, const Waypoint& p) { return tt < p.t; });
      auto lo = hi - 1;
      const double s = (t - lo->t) / (hi->t - lo->t);
      return lo->position + s * (hi->position - lo->position);
    }
  };
  return std::visit(Visitor{t}, kind_);
}

bool SceneObject::covers(const Vec2& ground) const {
  const Vec2 d = ground - position;
  if (const auto* disk = std::get_if<Disk>(&shape)) return d.squaredNorm() <= disk->radius * disk->radius;
  const auto& r = std::get<Rectangle>(shape);
  return std::abs(d.x()) <= 0.5 * r.width && std::abs(d.y()) <= 0.5 * r.height;
}

Vec2 SceneObject::half_extent() const {
  if (const auto* disk = std::get_if<Disk>(&shape)) return Vec2(disk->radius, disk->radius);
  const auto& r = std::get<Rectangle>(shape);
  return Vec2(0.5 * r.width, 0.5 * r.height);
}

Vec2 body_to_world(const Vec2& body, double psi) {
  const double c = std::cos(psi);
  const double s = std::sin(psi);
  return Vec2(c * body.x() - s * body.y(), s * body.x() + c * body.y());
}

Vec2 world_to_body(const Vec2& world, double psi) { return body_to_world(world, -psi); }

void CameraModel::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("camera width/height must be positive");
  if (!(focal > 0.0)) throw ConfigError("camera focal length must be positive");
}

Vec2 ground_to_image(const CameraModel& camera, const DroneState& drone, const Vec2& ground) {
  if (!(drone.p.z() > 0.0)) throw ConfigError("camera projection needs drone altitude z > 0");
  const Vec2 body = world_to_body(ground - drone.p.head<2>(), drone.psi);
  const double scale = camera.focal / drone.p.z();
  return Vec2(0.5 * camera.width + scale * body.x(), 0.5 * camera.height - scale * body.y());
}

Vec2 image_to_ground(const CameraModel& camera, const DroneState& drone, const Vec2& pixel) {
  if (!(drone.p.z() > 0.0)) throw ConfigError("camera projection needs drone altitude z > 0");
  const double scale = drone.p.z() / camera.focal;
  const Vec2 body((pixel.x() - 0.5 * camera.width) * scale, -(pixel.y() - 0.5 * camera.height) * scale);
  return drone.p.head<2>() + body_to_world(body, drone.psi);
}

std::optional<Vec2> project_to_image(const CameraModel& camera, const DroneState& drone,
                                     const Vec2& ground) {
  const Vec2 px = ground_to_image(camera, drone, ground);
  if (px.x() < 0.0 || px.x() >= camera.width || px.y() < 0.0 || px.y() >= camera.height)
    return std::nullopt;
  return px;
}

const SceneObject* WorldState::find(std::uint32_t instance_id) const {
  for (const auto& o : objects)
    if (o.instance_id == instance_id) return &o;
  return nullptr;
}

SceneObject* WorldState::find(std::uint32_t instance_id) {
  for (auto& o : objects)
    if (o.instance_id == instance_id) return &o;
  return nullptr;
}

WorldState step_world(WorldState world, double dt) {
  if (!(dt > 0.0)) throw ConfigError("step_world needs dt > 0");
  world.t += dt;
  ++world.tick;
  for (auto& o : world.objects) o.position = o.motion.position_at(world.t);
  return world;
}

Frame::Frame(std::uint64_t seq, double t, int width, int height,
             std::shared_ptr<const DescriptorModel> model)
    : seq_(seq),
      t_(t),
      width_(width),
      height_(height),
      id_map_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0),
      render_(id_map_.size(), render_intensity(0)),
      model_(std::move(model)) {
  instance_class_[0] = 0;
}

void Frame::set_instance_class(std::uint32_t instance_id, int class_id) {
  instance_class_[instance_id] = class_id;
}

int Frame::class_of(std::uint32_t instance_id) const {
  auto it = instance_class_.find(instance_id);
  if (it == instance_class_.end())
    throw ConfigError("frame has no instance " + std::to_string(instance_id));
  return it->second;
}

Descriptor Frame::descriptor_at(int x, int y) const {
  const std::size_t i = index(x, y);
  const std::uint32_t id = id_map_[i];
  auto stream = pixel_stream(model_->noise_seed(), seq_, i);
  return pixel_descriptor(*model_, model_->appearance(id, class_of(id)), stream);
}

void Frame::accumulate_descriptor(std::size_t i, Descriptor& sum) const {
  const std::uint32_t id = id_map_[i];
  auto stream = pixel_stream(model_->noise_seed(), seq_, i);
  sum += pixel_descriptor(*model_, model_->appearance(id, class_of(id)), stream);
}

std::uint8_t render_intensity(std::uint32_t instance_id) {
  if (instance_id == 0) return 32;
  return static_cast<std::uint8_t>(96 + (instance_id * 53u) % 160u);
}

Frame render_frame(const WorldState& world, const CameraModel& camera,
                   std::shared_ptr<const DescriptorModel> model) {
  camera.validate();
  Frame frame(world.tick, world.t, camera.width, camera.height, std::move(model));

  std::vector<const SceneObject*> order;
  for (const auto& o : world.objects)
    if (o.visible) order.push_back(&o);
  std::stable_sort(order.begin(), order.end(), [](const SceneObject* a, const SceneObject* b) {
    if (a->z_order != b->z_order) return a->z_order < b->z_order;
    return a->instance_id < b->instance_id;
  });

  auto& ids = frame.id_map();
  auto& render = frame.render();
  for (const SceneObject* o : order) {
    frame.set_instance_class(o->instance_id, o->class_id);
    // Pixel bounding box of the object's world AABB (rotated by yaw).
    const Vec2 h = o->half_extent();
    double u0 = 1e300, v0 = 1e300, u1 = -1e300, v1 = -1e300;
    for (double sx : {-1.0, 1.0}) {
      for (double sy : {-1.0, 1.0}) {
        const Vec2 px = ground_to_image(camera, world.drone, o->position + Vec2(sx * h.x(), sy * h.y()));
        u0 = std::min(u0, px.x());
        u1 = std::max(u1, px.x());
        v0 = std::min(v0, px.y());
        v1 = std::max(v1, px.y());
      }
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(u0 - 1.0)));
    const int x1 = std::min(camera.width - 1, static_cast<int>(std::ceil(u1 + 1.0)));
    const int y0 = std::max(0, static_cast<int>(std::floor(v0 - 1.0)));
    const int y1 = std::min(camera.height - 1, static_cast<int>(std::ceil(v1 + 1.0)));
    const std::uint8_t grey = render_intensity(o->instance_id);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 g = image_to_ground(camera, world.drone, Vec2(x + 0.5, y + 0.5));
        if (o->covers(g)) {
          const std::size_t i = frame.index(x, y);
          ids[i] = o->instance_id;
          render[i] = grey;
        }
      }
    }
  }
  return frame;
}

}  // namespace tar

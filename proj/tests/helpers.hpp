#pragma once

#include <memory>
#include <vector>

#include "tar/perception.hpp"
#include "tar/world.hpp"

namespace tar::testing {

inline SceneObject disk(std::uint32_t id, int cls, double x, double y, double r, int z = 1) {
  SceneObject o;
  o.instance_id = id;
  o.class_id = cls;
  o.shape = Disk{r};
  o.z_order = z;
  o.motion = MotionScript(StaticMotion{Vec2(x, y)});
  o.position = Vec2(x, y);
  return o;
}

inline SceneObject rect(std::uint32_t id, int cls, double x, double y, double w, double h, int z = 1) {
  SceneObject o = disk(id, cls, x, y, 0.1, z);
  o.shape = Rectangle{w, h};
  return o;
}

inline WorldState world_of(std::vector<SceneObject> objects, double z = 2.0, double psi = 0.0) {
  WorldState w;
  w.objects = std::move(objects);
  w.drone.p = Vec3(0.0, 0.0, z);
  w.drone.psi = psi;
  return w;
}

inline std::shared_ptr<const DescriptorModel> model_of(double sigma, int max_class = 4, std::uint64_t noise_seed = 1,
                                                       double spread = 0.0,
                                                       const std::map<std::uint32_t, int>& instances = {}) {
  DescriptorModelConfig c;
  c.sigma = sigma;
  c.noise_seed = noise_seed;
  c.instance_spread = spread;
  return std::make_shared<const DescriptorModel>(c, max_class, instances);
}

/// The segmented frame keeps a pointer to the frame, so both live together.
struct Scene {
  Frame frame;
  std::unique_ptr<RegionSet> regions;

  Scene(const WorldState& w, std::shared_ptr<const DescriptorModel> model, const CameraModel& cam = {}) {
    frame = render_frame(w, cam, std::move(model));
    regions = std::make_unique<RegionSet>(frame, segment(frame));
  }
  Scene(const Scene&) = delete;
  Scene& operator=(const Scene&) = delete;

  /// Index of the region covering instance `id`, or -1.
  int region_of(std::uint32_t id) const {
    for (std::size_t j = 0; j < regions->size(); ++j)
      if (regions->mask(j).source_instance() == id) return static_cast<int>(j);
    return -1;
  }
};

}  // namespace tar::testing

#include "tar/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <sodium.h>

namespace tar {

using nlohmann::json;

namespace {

Vec2 vec2_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(std::string(what) + " must be [x, y]");
  return Vec2(j[0].get<double>(), j[1].get<double>());
}

Vec3 vec3_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + " must be [x, y, z]");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }
json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Shape shape_from(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "disk") {
    Disk d{j.at("radius").get<double>()};
    if (!(d.radius > 0.0)) throw ConfigError("disk radius must be > 0");
    return d;
  }
  if (type == "rectangle") {
    Rectangle r{j.at("width").get<double>(), j.at("height").get<double>()};
    if (!(r.width > 0.0) || !(r.height > 0.0)) throw ConfigError("rectangle extents must be > 0");
    return r;
  }
  throw ConfigError("unknown shape type '" + type + "'");
}

json shape_to_json(const Shape& s) {
  if (const auto* d = std::get_if<Disk>(&s)) return {{"type", "disk"}, {"radius", d->radius}};
  const auto& r = std::get<Rectangle>(s);
  return {{"type", "rectangle"}, {"width", r.width}, {"height", r.height}};
}

MotionScript motion_from(const json& j) {
  const std::string type = j.value("type", std::string("static"));
  if (type == "static") return MotionScript(StaticMotion{vec2_from(j.at("position"), "static position")});
  if (type == "circle") {
    CircleMotion c;
    c.center = vec2_from(j.at("center"), "circle center");
    c.radius = j.at("radius").get<double>();
    c.angular_rate = j.at("angular_rate").get<double>();
    c.phase = j.value("phase", 0.0);
    return MotionScript(c);
  }
  if (type == "waypoints") {
    WaypointMotion w;
    for (const auto& p : j.at("points")) {
      if (!p.is_array() || p.size() != 3) throw ConfigError("waypoints must be [t, x, y]");
      w.points.push_back({p[0].get<double>(), Vec2(p[1].get<double>(), p[2].get<double>())});
    }
    return MotionScript(w);
  }
  throw ConfigError("unknown motion type '" + type + "'");
}

json motion_to_json(const MotionScript& m) {
  struct V {
    json operator()(const StaticMotion& s) const { return {{"type", "static"}, {"position", to_json(s.position)}}; }
    json operator()(const CircleMotion& c) const {
      return {{"type", "circle"},
              {"center", to_json(c.center)},
              {"radius", c.radius},
              {"angular_rate", c.angular_rate},
              {"phase", c.phase}};
    }
    json operator()(const WaypointMotion& w) const {
      json pts = json::array();
      for (const auto& p : w.points) pts.push_back({p.t, p.position.x(), p.position.y()});
      return {{"type", "waypoints"}, {"points", pts}};
    }
  };
  return std::visit(V{}, m.kind());
}

}  // namespace

json query_to_json(const Query& q) {
  if (const auto* c = std::get_if<ClickQuery>(&q)) return {{"click", {c->x, c->y}}};
  if (const auto* b = std::get_if<BoxQuery>(&q)) return {{"bbox", {b->x0, b->y0, b->x1, b->y1}}};
  const auto& t = std::get<TemplateQuery>(q);
  json tj = json::object();
  if (t.class_id) tj["class"] = *t.class_id;
  if (t.descriptor) tj["descriptor"] = std::vector<double>(t.descriptor->data(), t.descriptor->data() + t.descriptor->size());
  return {{"template", tj}};
}

Query query_from_json(const json& j) {
  if (j.contains("click")) {
    const auto& c = j.at("click");
    if (!c.is_array() || c.size() != 2) throw ConfigError("click must be [x, y]");
    return ClickQuery{c[0].get<double>(), c[1].get<double>()};
  }
  if (j.contains("bbox")) {
    const auto& b = j.at("bbox");
    if (!b.is_array() || b.size() != 4) throw ConfigError("bbox must be [x0, y0, x1, y1]");
    return BoxQuery{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  }
  if (j.contains("template")) {
    const auto& t = j.at("template");
    TemplateQuery q;
    if (t.contains("class")) q.class_id = t.at("class").get<int>();
    if (t.contains("descriptor")) {
      const auto v = t.at("descriptor").get<std::vector<double>>();
      q.descriptor = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    if (!q.class_id && !q.descriptor) throw ConfigError("template query needs 'class' or 'descriptor'");
    return q;
  }
  throw ConfigError("query needs one of 'click', 'bbox', 'template'");
}

std::string event_name(const Event& e) {
  struct V {
    std::string operator()(const OccludeStart&) const { return "occlude_start"; }
    std::string operator()(const OccludeEnd&) const { return "occlude_end"; }
    std::string operator()(const AssistNudge&) const { return "assist_nudge"; }
    std::string operator()(const AssistResume&) const { return "assist_resume"; }
    std::string operator()(const HumanAnswer&) const { return "human_answer"; }
    std::string operator()(const SetRedetectLevel&) const { return "set_redetect_level"; }
    std::string operator()(const SubmitQuery&) const { return "query"; }
    std::string operator()(const ResetTrack&) const { return "reset"; }
  };
  return std::visit(V{}, e);
}

json event_to_json(const Event& e) {
  json j = {{"type", event_name(e)}};
  if (const auto* o = std::get_if<OccludeStart>(&e)) j["object"] = o->object;
  if (const auto* o = std::get_if<OccludeEnd>(&e)) j["object"] = o->object;
  if (const auto* n = std::get_if<AssistNudge>(&e)) j["nudge"] = to_json(n->nudge);
  if (const auto* h = std::get_if<HumanAnswer>(&e)) j.update(query_to_json(h->answer));
  if (const auto* l = std::get_if<SetRedetectLevel>(&e)) j["level"] = l->level;
  if (const auto* q = std::get_if<SubmitQuery>(&e)) j.update(query_to_json(q->query));
  return j;
}

Event event_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "occlude_start") return OccludeStart{j.at("object").get<std::uint32_t>()};
  if (type == "occlude_end") return OccludeEnd{j.at("object").get<std::uint32_t>()};
  if (type == "assist_nudge") return AssistNudge{vec3_from(j.at("nudge"), "assist nudge")};
  if (type == "assist_resume") return AssistResume{};
  if (type == "human_answer") {
    Query q = query_from_json(j);
    if (std::holds_alternative<TemplateQuery>(q)) throw ConfigError("human_answer must be a click or bbox");
    return HumanAnswer{q};
  }
  if (type == "set_redetect_level") return SetRedetectLevel{j.at("level").get<int>()};
  if (type == "query") return SubmitQuery{query_from_json(j)};
  if (type == "reset") return ResetTrack{};
  throw ConfigError("unknown event type '" + type + "'");
}

void Scenario::validate() const {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(duration > 0.0)) throw ConfigError("duration must be positive");
  camera.validate();
  if (!(drone.p.z() > 0.0)) throw ConfigError("drone must start above ground (z > 0)");
  tracker.validate();
  gains.validate();
  plant.validate();
  if (bank_tau <= 0) throw ConfigError("tracker tau must be a positive integer");
  if (redetect_level < 1 || redetect_level > 3) throw ConfigError("redetect level must be 1, 2 or 3");
  if (detect_threshold <= -1.0 || detect_threshold >= 1.0) throw ConfigError("detect threshold must be in (-1, 1)");
  if (segmentation.p_split < 0.0 || segmentation.p_split > 1.0) throw ConfigError("p_split must be in [0, 1]");
  if (!(human_timeout > 0.0)) throw ConfigError("human_timeout must be positive");
  if (descriptors.dim <= 0) throw ConfigError("descriptor dim must be positive");
  if (!(descriptors.sigma >= 0.0)) throw ConfigError("descriptor sigma must be >= 0");
  if (!(descriptors.instance_spread >= 0.0)) throw ConfigError("instance_spread must be >= 0");
  ServoFilter(filter_b, filter_a);  // throws on unstable coefficients

  std::set<std::uint32_t> ids;
  for (const auto& o : objects) {
    if (o.instance_id == 0) throw ConfigError("instance_id 0 is reserved for background");
    if (!ids.insert(o.instance_id).second)
      throw ConfigError("duplicate instance_id " + std::to_string(o.instance_id));
    if (o.class_id <= 0) throw ConfigError("object class_id must be positive (0 is background)");
  }
  if (!ids.count(target_id)) throw ConfigError("target_id does not name an object");

  double prev = -1e300;
  for (const auto& e : events) {
    if (e.t < prev) throw ConfigError("events must be sorted by time");
    prev = e.t;
    if (const auto* l = std::get_if<SetRedetectLevel>(&e.event))
      if (l->level < 1 || l->level > 3) throw ConfigError("redetect level must be 1, 2 or 3");
    if (const auto* o = std::get_if<OccludeStart>(&e.event))
      if (!ids.count(o->object)) throw ConfigError("occlude_start names an unknown object");
    if (const auto* o = std::get_if<OccludeEnd>(&e.event))
      if (!ids.count(o->object)) throw ConfigError("occlude_end names an unknown object");
  }
}

std::size_t Scenario::num_ticks() const {
  return static_cast<std::size_t>(std::llround(std::floor(duration / dt + 1e-9)));
}

Scenario scenario_from_json(const json& j) {
  try {
    Scenario s;
    s.name = j.value("name", s.name);
    s.seed = j.value("seed", s.seed);
    s.dt = j.value("dt", s.dt);
    s.duration = j.value("duration", s.duration);
    if (j.contains("camera")) {
      const auto& c = j.at("camera");
      s.camera.width = c.value("width", s.camera.width);
      s.camera.height = c.value("height", s.camera.height);
      s.camera.focal = c.value("focal", s.camera.focal);
    }
    if (j.contains("drone")) {
      const auto& d = j.at("drone");
      if (d.contains("position")) s.drone.p = vec3_from(d.at("position"), "drone position");
      s.drone.psi = wrap_angle(d.value("yaw", 0.0));
    }
    if (j.contains("descriptors")) {
      const auto& d = j.at("descriptors");
      s.descriptors.dim = d.value("dim", s.descriptors.dim);
      s.descriptors.sigma = d.value("sigma", s.descriptors.sigma);
      s.descriptors.prototype_seed = d.value("prototype_seed", s.descriptors.prototype_seed);
      s.descriptors.instance_spread = d.value("instance_spread", s.descriptors.instance_spread);
    }
    for (const auto& oj : j.value("objects", json::array())) {
      SceneObject o;
      o.instance_id = oj.at("id").get<std::uint32_t>();
      o.class_id = oj.at("class").get<int>();
      o.shape = shape_from(oj.at("shape"));
      o.z_order = oj.value("z_order", 0);
      o.visible = oj.value("visible", true);
      o.motion = motion_from(oj.value("motion", json{{"type", "static"}, {"position", {0.0, 0.0}}}));
      o.position = o.motion.position_at(0.0);
      s.objects.push_back(std::move(o));
    }
    s.target_id = j.value("target_id", s.target_id);
    if (j.contains("tracker")) {
      const auto& t = j.at("tracker");
      s.tracker.alpha = t.value("alpha", s.tracker.alpha);
      s.tracker.iou_min = t.value("iou_min", s.tracker.iou_min);
      s.tracker.s_min = t.value("s_min", s.tracker.s_min);
      s.tracker.thresh_redetect = t.value("thresh_redetect", s.tracker.thresh_redetect);
      s.bank_tau = t.value("tau", s.bank_tau);
      s.redetect_level = t.value("redetect_level", s.redetect_level);
    }
    if (j.contains("servo")) {
      const auto& v = j.at("servo");
      s.gains.kx = v.value("kx", s.gains.kx);
      s.gains.ky = v.value("ky", s.gains.ky);
      s.gains.kz = v.value("kz", s.gains.kz);
      s.gains.yaw_k = v.value("yaw_k", s.gains.yaw_k);
      s.filter_b = v.value("b", s.filter_b);
      s.filter_a = v.value("a", s.filter_a);
      s.servo.dead_zone_px = v.value("dead_zone_px", s.servo.dead_zone_px);
      s.servo.area_dz = v.value("area_dz", s.servo.area_dz);
      s.servo.area_ref_px = v.value("area_ref_px", s.servo.area_ref_px);
    }
    if (j.contains("offboard")) {
      const auto& o = j.at("offboard");
      s.plant.tau = o.value("tau", s.plant.tau);
      s.plant.v_max = o.value("v_max", s.plant.v_max);
      s.plant.yaw_rate_max = o.value("yaw_rate_max", s.plant.yaw_rate_max);
      s.plant.z_min = o.value("z_min", s.plant.z_min);
    }
    if (j.contains("segmentation")) {
      const auto& g = j.at("segmentation");
      s.segmentation.oversegment = g.value("oversegment", false);
      s.segmentation.p_split = g.value("p_split", 0.0);
    }
    s.detect_threshold = j.value("detect_threshold", s.detect_threshold);
    s.tracker.thresh_redetect = j.contains("tracker") ? s.tracker.thresh_redetect : s.detect_threshold;
    s.human_timeout = j.value("human_timeout", s.human_timeout);
    if (j.contains("query") && !j.at("query").is_null()) {
      const auto& q = j.at("query");
      s.query = TimedEvent{q.value("t", 0.0), SubmitQuery{query_from_json(q)}};
    }
    for (const auto& ej : j.value("events", json::array()))
      s.events.push_back(TimedEvent{ej.at("t").get<double>(), event_from_json(ej)});
    if (j.contains("case")) {
      const auto& c = j.at("case");
      s.case_label.target = c.value("target", s.case_label.target);
      s.case_label.algorithm = c.value("algorithm", s.case_label.algorithm);
      s.case_label.modality = c.value("modality", s.case_label.modality);
      s.case_label.obstruction = c.value("obstruction", s.case_label.obstruction);
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("scenario " + path + " is not valid JSON: " + e.what());
  }
  return scenario_from_json(j);
}

json scenario_to_json(const Scenario& s) {
  json objects = json::array();
  for (const auto& o : s.objects) {
    objects.push_back({{"id", o.instance_id},
                       {"class", o.class_id},
                       {"shape", shape_to_json(o.shape)},
                       {"z_order", o.z_order},
                       {"visible", o.visible},
                       {"motion", motion_to_json(o.motion)}});
  }
  json events = json::array();
  for (const auto& e : s.events) {
    json ej = event_to_json(e.event);
    ej["t"] = e.t;
    events.push_back(ej);
  }
  json j = {
      {"name", s.name},
      {"seed", s.seed},
      {"dt", s.dt},
      {"duration", s.duration},
      {"camera", {{"width", s.camera.width}, {"height", s.camera.height}, {"focal", s.camera.focal}}},
      {"drone", {{"position", to_json(s.drone.p)}, {"yaw", s.drone.psi}}},
      {"descriptors",
       {{"dim", s.descriptors.dim},
        {"sigma", s.descriptors.sigma},
        {"prototype_seed", s.descriptors.prototype_seed},
        {"instance_spread", s.descriptors.instance_spread}}},
      {"objects", objects},
      {"target_id", s.target_id},
      {"tracker",
       {{"alpha", s.tracker.alpha},
        {"iou_min", s.tracker.iou_min},
        {"s_min", s.tracker.s_min},
        {"thresh_redetect", s.tracker.thresh_redetect},
        {"tau", s.bank_tau},
        {"redetect_level", s.redetect_level}}},
      {"servo",
       {{"kx", s.gains.kx},
        {"ky", s.gains.ky},
        {"kz", s.gains.kz},
        {"yaw_k", s.gains.yaw_k},
        {"b", s.filter_b},
        {"a", s.filter_a},
        {"dead_zone_px", s.servo.dead_zone_px},
        {"area_dz", s.servo.area_dz},
        {"area_ref_px", s.servo.area_ref_px}}},
      {"offboard",
       {{"tau", s.plant.tau}, {"v_max", s.plant.v_max}, {"yaw_rate_max", s.plant.yaw_rate_max}, {"z_min", s.plant.z_min}}},
      {"segmentation", {{"oversegment", s.segmentation.oversegment}, {"p_split", s.segmentation.p_split}}},
      {"detect_threshold", s.detect_threshold},
      {"human_timeout", s.human_timeout},
      {"events", events},
      {"case",
       {{"target", s.case_label.target},
        {"algorithm", s.case_label.algorithm},
        {"modality", s.case_label.modality},
        {"obstruction", s.case_label.obstruction}}},
  };
  if (s.query) {
    json q = query_to_json(std::get<SubmitQuery>(s.query->event).query);
    q["t"] = s.query->t;
    j["query"] = q;
  }
  return j;
}

std::string scenario_hash(const Scenario& s) {
  if (sodium_init() < 0) throw std::runtime_error("libsodium initialization failed");
  const std::string canonical = scenario_to_json(s).dump();
  unsigned char digest[crypto_hash_sha256_BYTES];
  crypto_hash_sha256(digest, reinterpret_cast<const unsigned char*>(canonical.data()), canonical.size());
  char hex[crypto_hash_sha256_BYTES * 2 + 1];
  sodium_bin2hex(hex, sizeof hex, digest, sizeof digest);
  return hex;
}

void apply_seed_env(Scenario& s) {
  if (const char* env = std::getenv("TAR_SIM_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0' || env[0] == '-') throw ConfigError("TAR_SIM_SEED must be a non-negative integer");
    s.seed = v;
  }
}

}  // namespace tar

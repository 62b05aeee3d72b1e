#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tar/descriptor.hpp"
#include "tar/offboard.hpp"
#include "tar/perception.hpp"
#include "tar/servo.hpp"
#include "tar/tracking.hpp"
#include "tar/world.hpp"

namespace tar {

// Scripted events ------------------------------------------------------------

struct OccludeStart {
  std::uint32_t object = 0;
};
struct OccludeEnd {
  std::uint32_t object = 0;
};
struct AssistNudge {
  Vec3 nudge = Vec3::Zero();
};
struct AssistResume {};
struct HumanAnswer {
  Query answer;
};
struct SetRedetectLevel {
  int level = 3;
};
/// A (new) query on the target: click, bbox or template.
struct SubmitQuery {
  Query query;
};
/// Drops the current target and its bank; the drone hovers.
struct ResetTrack {};

using Event =
    std::variant<OccludeStart, OccludeEnd, AssistNudge, AssistResume, HumanAnswer, SetRedetectLevel, SubmitQuery,
                 ResetTrack>;

struct TimedEvent {
  double t = 0.0;
  Event event;
};

std::string event_name(const Event& e);
nlohmann::json event_to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);
nlohmann::json query_to_json(const Query& q);
Query query_from_json(const nlohmann::json& j);

struct CaseLabel {
  std::string target = "target";
  std::string algorithm = "fan";
  std::string modality = "dino";
  std::string obstruction = "no";
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  double dt = 0.05;
  double duration = 10.0;
  CameraModel camera;
  DroneState drone;
  DescriptorModelConfig descriptors;
  std::vector<SceneObject> objects;
  std::uint32_t target_id = 1;
  TrackerParams tracker;
  int bank_tau = 10;
  int redetect_level = 3;
  ServoGains gains;
  std::vector<double> filter_b{0.0674553, 0.1349105, 0.0674553};
  std::vector<double> filter_a{1.0, -1.1429805, 0.4128016};
  ServoOptions servo;
  PlantParams plant;
  SegmentOptions segmentation;
  double detect_threshold = kDefaultSimilarityThreshold;
  /// Level-2 stall limit: sim seconds awaiting a human before aborting.
  double human_timeout = 10.0;
  /// Initial query and when it is issued.
  std::optional<TimedEvent> query;
  std::vector<TimedEvent> events;
  CaseLabel case_label;

  /// Throws ConfigError on any contract violation.
  void validate() const;
  std::size_t num_ticks() const;
};

/// Parses and validates. Throws ConfigError.
Scenario scenario_from_json(const nlohmann::json& j);
Scenario load_scenario(const std::string& path);
nlohmann::json scenario_to_json(const Scenario& s);

/// Hex SHA-256 of the canonical JSON form.
std::string scenario_hash(const Scenario& s);

/// Applies the TAR_SIM_SEED environment override, if set.
void apply_seed_env(Scenario& s);

}  // namespace tar

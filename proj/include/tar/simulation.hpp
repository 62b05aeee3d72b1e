#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tar/dtw.hpp"
#include "tar/offboard.hpp"
#include "tar/scenario.hpp"
#include "tar/servo.hpp"
#include "tar/tracking.hpp"
#include "tar/world.hpp"

namespace tar {

inline constexpr const char* kVersion = "0.1.0";

/// Result of applying one event at a tick boundary.
struct EventOutcome {
  Event event;
  std::optional<std::string> error;
};

/// The per-tick pipeline: perceive -> track -> servo -> offboard -> plant.
///
/// Scripted events fire on the first tick whose time reaches their stamp.
/// External events (from a live session) are applied after the scripted ones
/// of the same tick. Both end up in the tick record, so a session replays
/// headless by scripting its recorded inputs.
class Simulation {
 public:
  struct Options {
    /// Flag a stall (see stall()) when a level-2 request outlives
    /// human_timeout, and reject scenarios that enable level 2 without
    /// scripted answers.
    bool headless = true;
  };

  explicit Simulation(Scenario scenario);
  Simulation(Scenario scenario, Options options);

  const Scenario& scenario() const { return scenario_; }
  nlohmann::json header() const;

  std::uint64_t tick() const { return world_.tick; }
  std::size_t num_ticks() const { return scenario_.num_ticks(); }
  bool finished() const { return tick() >= num_ticks(); }

  /// Runs one tick and returns its log record. `outcomes`, if given, receives
  /// one entry per external event in order.
  nlohmann::json step(std::span<const Event> external = {}, std::vector<EventOutcome>* outcomes = nullptr);

  const WorldState& world() const { return world_; }
  const TrackState& track() const { return track_; }
  const OffboardController& controller() const { return controller_; }
  /// Frame perceived during the last tick (empty before the first).
  const Frame& frame() const { return frame_; }
  const DescriptorModel& model() const { return *model_; }
  /// Set once a headless level-2 request has timed out; the run must stop
  /// after logging the record of that tick.
  const std::optional<std::string>& stall() const { return stall_; }

 private:
  std::optional<std::string> apply_world_event(const Event& e);
  std::optional<std::string> apply_track_event(const Event& e, const RegionSet& regions,
                                               std::optional<Query>& human_answer);
  void start_query(const Query& q, const RegionSet& regions);

  Scenario scenario_;
  Options options_;
  std::shared_ptr<const DescriptorModel> model_;
  WorldState world_;
  TrackState track_;
  Servo servo_;
  OffboardController controller_;
  Frame frame_;
  std::size_t next_event_ = 0;
  bool query_issued_ = false;
  std::optional<double> awaiting_since_;
  bool timeout_logged_ = false;
  std::optional<std::string> stall_;
};

struct RunLog {
  nlohmann::json header;
  std::vector<nlohmann::json> records;
};

/// Runs the scenario to completion. Each line is also written to `out` as it
/// is produced, so an aborted run leaves a readable partial log ending with
/// the timeout record. Throws RunAborted on a level-2 stall.
RunLog run_headless(const Scenario& scenario, std::ostream* out = nullptr);

void write_jsonl(const RunLog& log, std::ostream& out);
/// Parses a JSONL run log. Throws ConfigError on malformed input.
RunLog read_jsonl(std::istream& in);

struct EvalOptions {
  bool xyz = false;
  double resample_dt = 0.0;
  int radius = 4;
};

/// Drone and ground-truth target trajectories from a run log.
std::pair<Trajectory, Trajectory> run_trajectories(const RunLog& log, bool xyz = false);

/// FastDTW between drone and target paths. Throws ConfigError if the log
/// carries no target ground truth.
DtwReport evaluate_run(const RunLog& log, const EvalOptions& options = {});

/// CSV trajectory. A header row names the columns (t, x, y, z; others are
/// ignored). Without one the layout is x,y | t,x,y | t,x,y,z. Rows without t
/// are stamped by index.
Trajectory read_csv_trajectory(std::istream& in);

}  // namespace tar

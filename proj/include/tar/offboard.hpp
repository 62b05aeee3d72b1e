#pragma once

#include <cstdint>
#include <numbers>
#include <optional>
#include <string_view>

#include "tar/common.hpp"
#include "tar/servo.hpp"
#include "tar/world.hpp"

namespace tar {

struct TrajectorySetpoint {
  Vec3 p_target = Vec3::Zero();
  Vec3 v_target = Vec3::Zero();
  double psi_target = 0.0;
  double stamp = 0.0;
};

enum class OffboardMode { Offboard, PositionAssist };

std::string_view to_string(OffboardMode m);

struct PlantParams {
  double tau = 0.3;
  double v_max = 2.0;
  double yaw_rate_max = std::numbers::pi / 2.0;
  /// Altitude floor for commanded setpoints.
  double z_min = 0.2;

  void validate() const;
};

struct OffboardState {
  OffboardMode mode = OffboardMode::Offboard;
  std::uint64_t heartbeat_count = 0;
  std::optional<TrajectorySetpoint> last_setpoint;
  PlantParams plant;
};

/// p_target = p + Rz(psi) * (vx, vy, vz) * dt, psi_target = psi + yaw_rate * dt.
/// `reference` supplies p and psi. Throws ConfigError for dt <= 0 or a reset
/// signal (use handle_reset).
TrajectorySetpoint integrate_setpoint(const DroneState& reference, const ControlSignal& u, double dt,
                                      double stamp = 0.0);

/// Hover: hold the current pose with zero velocity.
TrajectorySetpoint handle_reset(const DroneState& current, double stamp = 0.0);

/// First-order lag toward the setpoint with speed and yaw-rate clamps.
DroneState plant_step(const DroneState& state, const TrajectorySetpoint& sp, double dt,
                      const PlantParams& params);

/// Displaces the setpoint by a world-frame nudge while in position-assist.
/// Throws ConfigError if the mode is wrong or the result would be at or below
/// the altitude floor.
TrajectorySetpoint manual_assist(const OffboardState& state, const DroneState& current, const Vec3& nudge);

/// Controller node: heartbeat, setpoint integration and reset handling.
///
/// While tracking continuously, integration is anchored on the previous
/// setpoint, so the setpoint advances at the commanded velocity and the
/// position-tracking plant follows at that velocity. After a reset, a mode
/// change or on the first tick the anchor is re-based on the plant pose.
class OffboardController {
 public:
  explicit OffboardController(PlantParams plant = {});

  const OffboardState& state() const { return state_; }
  OffboardMode mode() const { return state_.mode; }

  /// One control tick. In OFFBOARD this publishes a heartbeat; `engaged`
  /// (target tracked) turns `u` into a setpoint, otherwise the last setpoint
  /// is held. A reset hovers at the plant pose. In POSITION_ASSIST the assist
  /// setpoint is held and `u` is ignored.
  TrajectorySetpoint tick(const DroneState& current, const ControlSignal& u, bool engaged, double dt,
                          double stamp);

  /// Enters POSITION_ASSIST and displaces the setpoint by `nudge`.
  TrajectorySetpoint assist(const DroneState& current, const Vec3& nudge);
  /// Returns to OFFBOARD; integration restarts from the plant pose.
  void resume();

 private:
  OffboardState state_;
  bool anchored_ = false;
};

}  // namespace tar

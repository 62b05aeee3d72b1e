#include "tar/offboard.hpp"

#include <algorithm>

namespace tar {

std::string_view to_string(OffboardMode m) {
  return m == OffboardMode::Offboard ? "OFFBOARD" : "POSITION_ASSIST";
}

void PlantParams::validate() const {
  if (!(tau > 0.0)) throw ConfigError("plant tau must be positive");
  if (!(v_max > 0.0)) throw ConfigError("plant v_max must be positive");
  if (!(yaw_rate_max > 0.0)) throw ConfigError("plant yaw_rate_max must be positive");
}

TrajectorySetpoint integrate_setpoint(const DroneState& reference, const ControlSignal& u, double dt, double stamp) {
  if (!(dt > 0.0)) throw ConfigError("integrate_setpoint needs dt > 0");
  if (u.reset) throw ConfigError("reset signals are handled by handle_reset");
  const Vec2 vw = body_to_world(Vec2(u.vx, u.vy), reference.psi);
  TrajectorySetpoint sp;
  sp.v_target = Vec3(vw.x(), vw.y(), u.vz);
  sp.p_target = reference.p + sp.v_target * dt;
  sp.psi_target = wrap_angle(reference.psi + u.yaw_rate * dt);
  sp.stamp = stamp;
  return sp;
}

TrajectorySetpoint handle_reset(const DroneState& current, double stamp) {
  TrajectorySetpoint sp;
  sp.p_target = current.p;
  sp.v_target = Vec3::Zero();
  sp.psi_target = wrap_angle(current.psi);
  sp.stamp = stamp;
  return sp;
}

DroneState plant_step(const DroneState& state, const TrajectorySetpoint& sp, double dt, const PlantParams& params) {
  if (!(dt > 0.0)) throw ConfigError("plant_step needs dt > 0");
  DroneState next = state;
  Vec3 v = (sp.p_target - state.p) / params.tau;
  const double speed = v.norm();
  if (speed > params.v_max) v *= params.v_max / speed;
  next.v = v;
  next.p = state.p + v * dt;

  const double yaw_rate =
      std::clamp(wrap_angle(sp.psi_target - state.psi) / params.tau, -params.yaw_rate_max, params.yaw_rate_max);
  next.psi_dot = yaw_rate;
  next.psi = wrap_angle(state.psi + yaw_rate * dt);
  return next;
}

TrajectorySetpoint manual_assist(const OffboardState& state, const DroneState& current, const Vec3& nudge) {
  if (state.mode != OffboardMode::PositionAssist) throw ConfigError("manual assist requires POSITION_ASSIST mode");
  TrajectorySetpoint sp = state.last_setpoint ? *state.last_setpoint : handle_reset(current);
  sp.p_target += nudge;
  sp.v_target = Vec3::Zero();
  if (!(sp.p_target.z() > state.plant.z_min)) throw ConfigError("assist nudge would command z below the floor");
  return sp;
}

OffboardController::OffboardController(PlantParams plant) { state_.plant = plant; }

TrajectorySetpoint OffboardController::tick(const DroneState& current, const ControlSignal& u, bool engaged,
                                            double dt, double stamp) {
  if (state_.mode == OffboardMode::PositionAssist) {
    TrajectorySetpoint sp = state_.last_setpoint ? *state_.last_setpoint : handle_reset(current, stamp);
    sp.stamp = stamp;
    state_.last_setpoint = sp;
    return sp;
  }

  ++state_.heartbeat_count;
  TrajectorySetpoint sp;
  if (u.reset || !state_.last_setpoint) {
    sp = handle_reset(current, stamp);
    anchored_ = false;
  } else if (!engaged) {
    // Hover on the held setpoint; re-anchor on the plant pose when tracking resumes.
    sp = *state_.last_setpoint;
    sp.v_target = Vec3::Zero();
    sp.stamp = stamp;
    anchored_ = false;
  }
  if (engaged && !u.reset) {
    DroneState reference = current;
    if (anchored_) {
      reference.p = state_.last_setpoint->p_target;
      reference.psi = state_.last_setpoint->psi_target;
    }
    sp = integrate_setpoint(reference, u, dt, stamp);
    anchored_ = true;
  }
  state_.last_setpoint = sp;
  return sp;
}

TrajectorySetpoint OffboardController::assist(const DroneState& current, const Vec3& nudge) {
  OffboardState probe = state_;
  probe.mode = OffboardMode::PositionAssist;
  const TrajectorySetpoint sp = manual_assist(probe, current, nudge);
  state_.mode = OffboardMode::PositionAssist;
  state_.last_setpoint = sp;
  return sp;
}

void OffboardController::resume() {
  state_.mode = OffboardMode::Offboard;
  anchored_ = false;
}

}  // namespace tar

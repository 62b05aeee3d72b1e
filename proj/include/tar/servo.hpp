#pragma once

#include <array>
#include <deque>
#include <optional>
#include <vector>

#include "tar/common.hpp"
#include "tar/tracking.hpp"
#include "tar/world.hpp"

namespace tar {

/// Normalized image-space error of the target centroid plus heading angle.
struct DirectionVector {
  double dx = 0.0;
  double dy = 0.0;
  double dz = 0.0;
  double theta = 0.0;
};

struct ServoGains {
  double kx = 1.0;
  double ky = 1.0;
  double kz = 0.5;
  double yaw_k = 0.5;

  void validate() const;
};

/// Velocity / yaw-rate command in the body frame (x right, y forward, z up).
struct ControlSignal {
  double vx = 0.0;
  double vy = 0.0;
  double vz = 0.0;
  double yaw_rate = 0.0;
  bool reset = false;
};

/// Direct-form I IIR filter y[n] = sum b_k x[n-k] - sum_{k>=1} a_k y[n-k],
/// one delay line per direction channel (dx, dy, dz, theta).
class ServoFilter {
 public:
  static constexpr std::size_t kChannels = 4;

  /// Second-order low-pass, cutoff 0.2 of Nyquist.
  static ServoFilter default_lowpass();

  /// Normalizes by a[0]; throws ConfigError for an unstable or malformed filter.
  ServoFilter(std::vector<double> b, std::vector<double> a);

  const std::vector<double>& b() const { return b_; }
  const std::vector<double>& a() const { return a_; }

  double dc_gain() const;
  /// Largest pole magnitude (roots of a(z)).
  double max_pole_magnitude() const;

  DirectionVector apply(const DirectionVector& input);
  double apply_channel(std::size_t channel, double x);
  void reset();
  bool is_zero_state() const;

 private:
  std::vector<double> b_;
  std::vector<double> a_;
  std::array<std::deque<double>, kChannels> x_hist_;
  std::array<std::deque<double>, kChannels> y_hist_;
};

struct ServoOptions {
  /// Radius (px) around the image centre in which theta is forced to zero.
  double dead_zone_px = 10.0;
  /// Area-based standoff channel: dz = clamp(1 - A / A_ref, -0.5, 0.5).
  bool area_dz = false;
  double area_ref_px = 5000.0;
  std::size_t history_length = 8;
};

/// dx = x/W - 0.5, dy = -(y/H - 0.5), theta = -atan2(x - W/2, H/2 - y)
/// (zero inside the dead zone), dz = 0.
DirectionVector direction_vector(const Vec2& centroid, const CameraModel& camera,
                                 const ServoOptions& options = {});

DirectionVector apply_filter(ServoFilter& filter, const DirectionVector& d);

/// Vision-node control law. Owns the filter and the centroid history.
class Servo {
 public:
  Servo(ServoGains gains, ServoFilter filter, ServoOptions options = {});

  /// TRACKING: gains times the filtered direction. Any other status: hover;
  /// the first non-tracking tick after tracking clears the filter and the
  /// history and carries reset = true.
  ControlSignal step(TrackStatus status, const std::optional<Vec2>& centroid,
                     const CameraModel& camera, std::optional<double> mask_area = std::nullopt);

  const ServoFilter& filter() const { return filter_; }
  const std::deque<Vec2>& history() const { return history_; }
  const ServoGains& gains() const { return gains_; }
  const DirectionVector& last_direction() const { return last_; }
  const DirectionVector& last_filtered() const { return last_filtered_; }

 private:
  ServoGains gains_;
  ServoFilter filter_;
  ServoOptions options_;
  std::deque<Vec2> history_;
  bool engaged_ = false;
  DirectionVector last_;
  DirectionVector last_filtered_;
};

}  // namespace tar

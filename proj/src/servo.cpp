#include "tar/servo.hpp"

#include <algorithm>
#include <numbers>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace tar {

void ServoGains::validate() const {
  if (kx < 0.0 || ky < 0.0 || kz < 0.0 || yaw_k < 0.0) throw ConfigError("servo gains must be >= 0");
}

ServoFilter ServoFilter::default_lowpass() {
  return ServoFilter({0.0674553, 0.1349105, 0.0674553}, {1.0, -1.1429805, 0.4128016});
}

ServoFilter::ServoFilter(std::vector<double> b, std::vector<double> a) : b_(std::move(b)), a_(std::move(a)) {
  if (b_.empty() || a_.empty()) throw ConfigError("filter coefficients must be non-empty");
  if (a_[0] == 0.0) throw ConfigError("filter a[0] must be nonzero");
  const double a0 = a_[0];
  for (auto& v : b_) v /= a0;
  for (auto& v : a_) v /= a0;
  if (!(max_pole_magnitude() < 1.0)) throw ConfigError("filter is not strictly stable");
  reset();
}

double ServoFilter::dc_gain() const {
  return std::accumulate(b_.begin(), b_.end(), 0.0) / std::accumulate(a_.begin(), a_.end(), 0.0);
}

double ServoFilter::max_pole_magnitude() const {
  const auto order = static_cast<Eigen::Index>(a_.size()) - 1;
  if (order <= 0) return 0.0;
  // Companion matrix of z^n + a1 z^(n-1) + ... + an.
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(order, order);
  for (Eigen::Index k = 0; k < order; ++k) c(0, k) = -a_[static_cast<std::size_t>(k) + 1];
  for (Eigen::Index k = 1; k < order; ++k) c(k, k - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(c, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

void ServoFilter::reset() {
  for (std::size_t ch = 0; ch < kChannels; ++ch) {
    x_hist_[ch].assign(b_.size() > 1 ? b_.size() - 1 : 0, 0.0);
    y_hist_[ch].assign(a_.size() > 1 ? a_.size() - 1 : 0, 0.0);
  }
}

bool ServoFilter::is_zero_state() const {
  for (std::size_t ch = 0; ch < kChannels; ++ch) {
    for (double v : x_hist_[ch])
      if (v != 0.0) return false;
    for (double v : y_hist_[ch])
      if (v != 0.0) return false;
  }
  return true;
}

double ServoFilter::apply_channel(std::size_t ch, double x) {
  auto& xs = x_hist_[ch];
  auto& ys = y_hist_[ch];
  double y = b_[0] * x;
  for (std::size_t k = 1; k < b_.size(); ++k) y += b_[k] * xs[k - 1];
  for (std::size_t k = 1; k < a_.size(); ++k) y -= a_[k] * ys[k - 1];
  if (!xs.empty()) {
    xs.pop_back();
    xs.push_front(x);
  }
  if (!ys.empty()) {
    ys.pop_back();
    ys.push_front(y);
  }
  return y;
}

DirectionVector ServoFilter::apply(const DirectionVector& d) {
  return {apply_channel(0, d.dx), apply_channel(1, d.dy), apply_channel(2, d.dz), apply_channel(3, d.theta)};
}

DirectionVector direction_vector(const Vec2& centroid, const CameraModel& camera, const ServoOptions& options) {
  const double w = camera.width;
  const double h = camera.height;
  DirectionVector d;
  d.dx = centroid.x() / w - 0.5;
  d.dy = -(centroid.y() / h - 0.5);
  const double ex = centroid.x() - 0.5 * w;
  // Up-positive like dy: theta is zero for a target straight ahead.
  const double ey = 0.5 * h - centroid.y();
  d.theta = std::hypot(ex, ey) <= options.dead_zone_px ? 0.0 : -std::atan2(ex, ey);
  return d;
}

DirectionVector apply_filter(ServoFilter& filter, const DirectionVector& d) { return filter.apply(d); }

Servo::Servo(ServoGains gains, ServoFilter filter, ServoOptions options)
    : gains_(gains), filter_(std::move(filter)), options_(options) {
  gains_.validate();
}

ControlSignal Servo::step(TrackStatus status, const std::optional<Vec2>& centroid, const CameraModel& camera,
                          std::optional<double> mask_area) {
  if (status != TrackStatus::Tracking || !centroid) {
    ControlSignal hover;
    if (engaged_) {
      filter_.reset();
      history_.clear();
      hover.reset = true;
      engaged_ = false;
    }
    last_ = last_filtered_ = DirectionVector{};
    return hover;
  }

  engaged_ = true;
  history_.push_back(*centroid);
  while (history_.size() > options_.history_length) history_.pop_front();

  DirectionVector d = direction_vector(*centroid, camera, options_);
  if (options_.area_dz && mask_area)
    d.dz = std::clamp(1.0 - *mask_area / options_.area_ref_px, -0.5, 0.5);
  last_ = d;
  last_filtered_ = filter_.apply(d);

  // The low-pass overshoots a step by a few percent; saturate at the range
  // an unfiltered direction vector could produce.
  const double v_bound = 0.5 * std::max(gains_.kx, gains_.ky);
  const double yaw_bound = gains_.yaw_k * std::numbers::pi;
  ControlSignal u;
  u.vx = std::clamp(gains_.kx * last_filtered_.dx, -v_bound, v_bound);
  u.vy = std::clamp(gains_.ky * last_filtered_.dy, -v_bound, v_bound);
  u.vz = std::clamp(gains_.kz * last_filtered_.dz, -0.5 * gains_.kz, 0.5 * gains_.kz);
  u.yaw_rate = std::clamp(gains_.yaw_k * last_filtered_.theta, -yaw_bound, yaw_bound);
  return u;
}

}  // namespace tar

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tar/common.hpp"

namespace tar {

/// Timed positions in the world frame. 2-D trajectories keep z = 0.
struct Trajectory {
  std::vector<double> t;
  std::vector<Vec3> p;

  std::size_t size() const { return p.size(); }
  bool empty() const { return p.empty(); }
  void push_back(double time, const Vec3& point) {
    t.push_back(time);
    p.push_back(point);
  }
  /// Throws ConfigError for an empty trajectory or decreasing timestamps.
  void validate() const;
};

using WarpPath = std::vector<std::pair<std::size_t, std::size_t>>;

struct DtwReport {
  double distance = 0.0;
  WarpPath path;
  std::vector<double> pair_distances;
  double mean_distance = 0.0;
  std::string case_name;
};

/// Full O(n*m) dynamic program with the Euclidean ground metric. Ties in the
/// backtrack prefer the diagonal, then (i, j-1), then (i-1, j).
DtwReport dtw_exact(const Trajectory& a, const Trajectory& b);

/// FastDTW: coarsen by pairwise averaging, solve, project the path, widen by
/// `radius` and solve the windowed program. Exact below radius + 2 samples.
DtwReport dtw_fast(const Trajectory& a, const Trajectory& b, int radius);

/// Re-derives pair distances from a path (used to check stored reports).
std::vector<double> path_pair_distances(const Trajectory& a, const Trajectory& b, const WarpPath& path);

/// Linear resampling on a uniform grid starting at the first timestamp.
Trajectory resample(const Trajectory& traj, double dt);

/// target_algorithm_modality[_obstruction]; tokens must be non-empty
/// lowercase. An empty or "-" obstruction gives the three-token form.
std::string case_name(std::string_view target, std::string_view algorithm, std::string_view modality,
                      std::string_view obstruction);

}  // namespace tar

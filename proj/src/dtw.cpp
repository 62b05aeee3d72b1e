#include "tar/dtw.hpp"

#include <algorithm>
#include <cctype>
#include <limits>

namespace tar {

void Trajectory::validate() const {
  if (p.empty()) throw ConfigError("trajectory is empty");
  if (t.size() != p.size()) throw ConfigError("trajectory timestamps and positions differ in length");
  for (std::size_t k = 1; k < t.size(); ++k)
    if (t[k] < t[k - 1]) throw ConfigError("trajectory timestamps must be nondecreasing");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Column range [lo, hi] admitted on every row of the cost matrix.
struct Window {
  std::vector<std::size_t> lo;
  std::vector<std::size_t> hi;
};

Window full_window(std::size_t n, std::size_t m) {
  return Window{std::vector<std::size_t>(n, 0), std::vector<std::size_t>(n, m - 1)};
}

/// Cumulative-cost matrix restricted to a window, stored row by row.
class CostTable {
 public:
  explicit CostTable(const Window& w) : w_(w), offset_(w.lo.size() + 1, 0) {
    for (std::size_t i = 0; i < w.lo.size(); ++i) offset_[i + 1] = offset_[i] + (w.hi[i] - w.lo[i] + 1);
    cells_.assign(offset_.back(), kInf);
  }

  double get(std::size_t i, std::size_t j) const {
    if (j < w_.lo[i] || j > w_.hi[i]) return kInf;
    return cells_[offset_[i] + (j - w_.lo[i])];
  }
  void set(std::size_t i, std::size_t j, double v) { cells_[offset_[i] + (j - w_.lo[i])] = v; }

 private:
  const Window& w_;
  std::vector<std::size_t> offset_;
  std::vector<double> cells_;
};

DtwReport windowed_dtw(const Trajectory& a, const Trajectory& b, const Window& w) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  CostTable d(w);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = w.lo[i]; j <= w.hi[i]; ++j) {
      const double cost = (a.p[i] - b.p[j]).norm();
      if (i == 0 && j == 0) {
        d.set(i, j, cost);
        continue;
      }
      double best = kInf;
      if (i > 0 && j > 0) best = std::min(best, d.get(i - 1, j - 1));
      if (j > 0) best = std::min(best, d.get(i, j - 1));
      if (i > 0) best = std::min(best, d.get(i - 1, j));
      d.set(i, j, cost + best);
    }
  }

  DtwReport r;
  r.distance = d.get(n - 1, m - 1);
  std::size_t i = n - 1;
  std::size_t j = m - 1;
  r.path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const double diag = d.get(i - 1, j - 1);
      const double left = d.get(i, j - 1);
      const double up = d.get(i - 1, j);
      if (diag <= left && diag <= up) {
        --i;
        --j;
      } else if (left <= up) {
        --j;
      } else {
        --i;
      }
    }
    r.path.emplace_back(i, j);
  }
  std::reverse(r.path.begin(), r.path.end());
  r.pair_distances = path_pair_distances(a, b, r.path);
  double sum = 0.0;
  for (double v : r.pair_distances) sum += v;
  r.mean_distance = sum / static_cast<double>(r.pair_distances.size());
  return r;
}

Trajectory reduce_by_half(const Trajectory& x) {
  Trajectory out;
  for (std::size_t k = 0; k + 1 < x.size(); k += 2)
    out.push_back(0.5 * (x.t[k] + x.t[k + 1]), 0.5 * (x.p[k] + x.p[k + 1]));
  return out;
}

Window expand_window(const WarpPath& coarse, std::size_t n, std::size_t m, int radius) {
  const auto rad = static_cast<long>(radius);
  std::vector<long> lo(n, std::numeric_limits<long>::max());
  std::vector<long> hi(n, -1);
  for (const auto& [ci, cj] : coarse) {
    for (long a = -rad; a <= rad; ++a) {
      const long i = static_cast<long>(ci) + a;
      if (i < 0) continue;
      for (long fi = 2 * i; fi <= 2 * i + 1; ++fi) {
        if (fi >= static_cast<long>(n)) continue;
        const long j_lo = std::max(0L, 2 * (static_cast<long>(cj) - rad));
        const long j_hi = std::min(static_cast<long>(m) - 1, 2 * (static_cast<long>(cj) + rad) + 1);
        if (j_lo > j_hi) continue;
        lo[fi] = std::min(lo[fi], j_lo);
        hi[fi] = std::max(hi[fi], j_hi);
      }
    }
  }
  // Rows past the coarse span (odd lengths) inherit the previous row; the
  // window must reach both corners and stay connected for monotone paths.
  Window w{std::vector<std::size_t>(n), std::vector<std::size_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    if (hi[i] < 0) {
      lo[i] = i > 0 ? lo[i - 1] : 0;
      hi[i] = i > 0 ? hi[i - 1] : 0;
    }
    if (i > 0) {
      lo[i] = std::max(lo[i], lo[i - 1]);
      lo[i] = std::min(lo[i], hi[i - 1] + 1);
      hi[i] = std::max(hi[i], hi[i - 1]);
    }
  }
  lo[0] = 0;
  hi[n - 1] = static_cast<long>(m) - 1;
  for (std::size_t i = 0; i < n; ++i) {
    w.lo[i] = static_cast<std::size_t>(std::min(lo[i], static_cast<long>(m) - 1));
    w.hi[i] = static_cast<std::size_t>(std::min(std::max(hi[i], lo[i]), static_cast<long>(m) - 1));
  }
  return w;
}

}  // namespace

std::vector<double> path_pair_distances(const Trajectory& a, const Trajectory& b, const WarpPath& path) {
  std::vector<double> out;
  out.reserve(path.size());
  for (const auto& [i, j] : path) out.push_back((a.p.at(i) - b.p.at(j)).norm());
  return out;
}

DtwReport dtw_exact(const Trajectory& a, const Trajectory& b) {
  a.validate();
  b.validate();
  return windowed_dtw(a, b, full_window(a.size(), b.size()));
}

DtwReport dtw_fast(const Trajectory& a, const Trajectory& b, int radius) {
  if (radius < 0) throw ConfigError("fastdtw radius must be >= 0");
  a.validate();
  b.validate();
  const std::size_t min_size = static_cast<std::size_t>(radius) + 2;
  if (a.size() < min_size || b.size() < min_size) return dtw_exact(a, b);
  const DtwReport coarse = dtw_fast(reduce_by_half(a), reduce_by_half(b), radius);
  return windowed_dtw(a, b, expand_window(coarse.path, a.size(), b.size(), radius));
}

Trajectory resample(const Trajectory& traj, double dt) {
  traj.validate();
  if (!(dt > 0.0)) throw ConfigError("resample dt must be positive");
  Trajectory out;
  const double t0 = traj.t.front();
  const double t1 = traj.t.back();
  std::size_t k = 0;
  for (std::size_t n = 0;; ++n) {
    const double t = t0 + static_cast<double>(n) * dt;
    if (t > t1 + 1e-12) break;
    while (k + 1 < traj.size() && traj.t[k + 1] < t) ++k;
    if (k + 1 >= traj.size() || traj.t[k + 1] == traj.t[k]) {
      out.push_back(t, traj.p[std::min(k + 1, traj.size() - 1)]);
      continue;
    }
    const double s = std::clamp((t - traj.t[k]) / (traj.t[k + 1] - traj.t[k]), 0.0, 1.0);
    out.push_back(t, traj.p[k] + s * (traj.p[k + 1] - traj.p[k]));
  }
  return out;
}

namespace {

void check_token(std::string_view token, std::string_view field) {
  if (token.empty()) throw ConfigError("case name field '" + std::string(field) + "' is empty");
  for (char c : token)
    if (std::isupper(static_cast<unsigned char>(c)) || c == '_' || std::isspace(static_cast<unsigned char>(c)))
      throw ConfigError("case name field '" + std::string(field) + "' must be a lowercase token");
}

}  // namespace

std::string case_name(std::string_view target, std::string_view algorithm, std::string_view modality,
                      std::string_view obstruction) {
  check_token(target, "target");
  check_token(algorithm, "algorithm");
  check_token(modality, "modality");
  std::string out = std::string(target) + "_" + std::string(algorithm) + "_" + std::string(modality);
  if (obstruction.empty() || obstruction == "-" || obstruction == "\xE2\x80\x94") return out;
  check_token(obstruction, "obstruction");
  return out + "_" + std::string(obstruction);
}

}  // namespace tar

#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "tar/dtw.hpp"
#include "tar/simulation.hpp"

using namespace tar;

namespace {

Trajectory line1d(std::initializer_list<double> xs) {
  Trajectory t;
  double k = 0.0;
  for (double x : xs) t.push_back(k++, Vec3(x, 0.0, 0.0));
  return t;
}

Trajectory random_walk(SplitMix64& rng, std::size_t n) {
  std::normal_distribution<double> step(0.0, 0.3);
  Trajectory t;
  Vec3 p = Vec3::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    p += Vec3(step(rng), step(rng), 0.0);
    t.push_back(static_cast<double>(k), p);
  }
  return t;
}

// Reference DP: memoized recursion on the cumulative cost.
double oracle_distance(const Trajectory& a, const Trajectory& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> memo(n * m, -1.0);
  auto rec = [&](auto&& self, std::size_t i, std::size_t j) -> double {
    double& c = memo[i * m + j];
    if (c >= 0.0) return c;
    const double d = (a.p[i] - b.p[j]).norm();
    if (i == 0 && j == 0) return c = d;
    double best = std::numeric_limits<double>::infinity();
    if (i > 0) best = std::min(best, self(self, i - 1, j));
    if (j > 0) best = std::min(best, self(self, i, j - 1));
    if (i > 0 && j > 0) best = std::min(best, self(self, i - 1, j - 1));
    return c = d + best;
  };
  return rec(rec, n - 1, m - 1);
}

void check_path_shape(const DtwReport& r, std::size_t n, std::size_t m) {
  REQUIRE_FALSE(r.path.empty());
  CHECK(r.path.front() == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(r.path.back() == std::pair<std::size_t, std::size_t>{n - 1, m - 1});
  for (std::size_t k = 1; k < r.path.size(); ++k) {
    const std::size_t di = r.path[k].first - r.path[k - 1].first;
    const std::size_t dj = r.path[k].second - r.path[k - 1].second;
    CHECK(di <= 1);
    CHECK(dj <= 1);
    CHECK(di + dj >= 1);
  }
}

nlohmann::json tick_record(std::uint64_t k, const Vec3& drone, const Vec2& target) {
  return {{"type", "tick"},
          {"tick", k},
          {"t", 0.05 * static_cast<double>(k)},
          {"drone", {{"p", {drone.x(), drone.y(), drone.z()}}}},
          {"target", {target.x(), target.y()}}};
}

}  // namespace

TEST_CASE("identical sequences: zero distance, diagonal path") {
  const Trajectory a = line1d({0, 1, 3, 2, 5});
  const DtwReport r = dtw_exact(a, a);
  CHECK(r.distance == 0.0);
  CHECK(r.mean_distance == 0.0);
  REQUIRE(r.path.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) CHECK(r.path[k] == std::pair<std::size_t, std::size_t>{k, k});
  CHECK(dtw_fast(a, a, 1).distance == 0.0);
}

TEST_CASE("single pair is the Euclidean distance") {
  Trajectory a, b;
  a.push_back(0, Vec3(0, 0, 0));
  b.push_back(0, Vec3(3, 4, 0));
  const DtwReport r = dtw_exact(a, b);
  CHECK(r.distance == 5.0);
  CHECK(r.mean_distance == 5.0);
}

TEST_CASE("hand-computed 1-D example") {
  const DtwReport r = dtw_exact(line1d({0, 1, 2}), line1d({0, 2}));
  CHECK(r.distance == 1.0);
  // (1,0) and (1,1) tie at cumulative cost 1; the diagonal from (2,1) wins.
  const WarpPath expected = {{0, 0}, {1, 0}, {2, 1}};
  CHECK(r.path == expected);
  CHECK(r.pair_distances == std::vector<double>{0.0, 1.0, 0.0});
  CHECK(r.mean_distance == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("empty input and bad radius") {
  CHECK_THROWS_AS(dtw_exact(Trajectory{}, line1d({1})), ConfigError);
  CHECK_THROWS_AS(dtw_fast(line1d({1}), Trajectory{}, 2), ConfigError);
  CHECK_THROWS_AS(dtw_fast(line1d({1}), line1d({1}), -1), ConfigError);
}

TEST_CASE("exact DTW matches the reference DP, is symmetric and re-derivable") {
  SplitMix64 rng(21);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  for (int trial = 0; trial < 60; ++trial) {
    const Trajectory a = random_walk(rng, len(rng));
    const Trajectory b = random_walk(rng, len(rng));
    const DtwReport r = dtw_exact(a, b);
    CHECK(r.distance == doctest::Approx(oracle_distance(a, b)).epsilon(1e-12));
    CHECK(dtw_exact(b, a).distance == doctest::Approx(r.distance).epsilon(1e-12));
    CHECK(dtw_exact(a, a).distance == 0.0);
    check_path_shape(r, a.size(), b.size());
    CHECK(path_pair_distances(a, b, r.path) == r.pair_distances);
    double sum = 0.0;
    for (double d : r.pair_distances) sum += d;
    CHECK(sum == doctest::Approx(r.distance).epsilon(1e-12));
    CHECK(r.mean_distance == doctest::Approx(sum / static_cast<double>(r.path.size())));
  }
}

TEST_CASE("fast DTW with a covering radius equals exact DTW") {
  SplitMix64 rng(5);
  std::uniform_int_distribution<std::size_t> len(1, 64);
  for (int trial = 0; trial < 40; ++trial) {
    const Trajectory a = random_walk(rng, len(rng));
    const Trajectory b = random_walk(rng, len(rng));
    const DtwReport e = dtw_exact(a, b);
    const DtwReport f = dtw_fast(a, b, static_cast<int>(std::max(a.size(), b.size())));
    CHECK(f.distance == e.distance);
    CHECK(f.path == e.path);
  }
}

TEST_CASE("fast DTW radius 1 never undershoots and is usually exact") {
  SplitMix64 rng(99);
  std::uniform_int_distribution<std::size_t> len(1, 64);
  int equal = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Trajectory a = random_walk(rng, len(rng));
    const Trajectory b = random_walk(rng, len(rng));
    const double e = dtw_exact(a, b).distance;
    const DtwReport f = dtw_fast(a, b, 1);
    CHECK(f.distance >= e - 1e-9);
    check_path_shape(f, a.size(), b.size());
    CHECK(path_pair_distances(a, b, f.path) == f.pair_distances);
    equal += std::abs(f.distance - e) <= 1e-9 * std::max(1.0, e);
  }
  MESSAGE("radius-1 exact in " << equal << "/100 pairs");
  CHECK(equal >= 80);
}

TEST_CASE("fast DTW handles long runs quickly") {
  SplitMix64 rng(3);
  const Trajectory a = random_walk(rng, 4000);
  const Trajectory b = random_walk(rng, 4000);
  const auto t0 = std::chrono::steady_clock::now();
  const DtwReport r = dtw_fast(a, b, 4);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  check_path_shape(r, a.size(), b.size());
  CHECK(s < 1.0);
}

TEST_CASE("identical trailing points do not raise the mean past the prior maximum") {
  SplitMix64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Trajectory a = random_walk(rng, 20);
    Trajectory b = random_walk(rng, 25);
    const DtwReport before = dtw_exact(a, b);
    const double max_pair = *std::max_element(before.pair_distances.begin(), before.pair_distances.end());
    const Vec3 tail(5.0, 5.0, 0.0);
    for (int k = 0; k < 5; ++k) {
      a.push_back(a.t.back() + 1, tail);
      b.push_back(b.t.back() + 1, tail);
    }
    CHECK(dtw_exact(a, b).mean_distance <= max_pair + 1e-12);
  }
}

TEST_CASE("case names") {
  CHECK(case_name("turtle", "fan", "bb", "no") == "turtle_fan_bb_no");
  CHECK(case_name("apriltag", "fan", "dino", "o") == "apriltag_fan_dino_o");
  CHECK(case_name("apriltag", "vtm", "node", "") == "apriltag_vtm_node");
  CHECK(case_name("apriltag", "vtm", "node", "-") == "apriltag_vtm_node");
  CHECK_THROWS_AS(case_name("", "fan", "bb", "no"), ConfigError);
  CHECK_THROWS_AS(case_name("Turtle", "fan", "bb", "no"), ConfigError);
  CHECK_THROWS_AS(case_name("tur tle", "fan", "bb", "no"), ConfigError);
}

TEST_CASE("resample onto a uniform grid") {
  Trajectory t;
  t.push_back(0.0, Vec3(0, 0, 0));
  t.push_back(1.0, Vec3(2, 0, 0));
  t.push_back(3.0, Vec3(2, 4, 0));
  const Trajectory r = resample(t, 0.5);
  REQUIRE(r.size() == 7);
  CHECK(r.p[1].x() == doctest::Approx(1.0));
  CHECK(r.p[4].y() == doctest::Approx(2.0));
  CHECK(r.t.back() == doctest::Approx(3.0));
  CHECK_THROWS_AS(resample(t, 0.0), ConfigError);
}

TEST_CASE("evaluate_run: glued and constant-offset drones") {
  RunLog glued, offset;
  glued.header = {{"type", "header"}, {"case", {{"target", "disk"}, {"algorithm", "fan"}, {"modality", "dino"}, {"obstruction", "no"}}}};
  offset.header = glued.header;
  for (std::uint64_t k = 0; k < 200; ++k) {
    const double a = 0.01 * static_cast<double>(k);
    const Vec2 target(2 * std::cos(a), 2 * std::sin(a));
    glued.records.push_back(tick_record(k, Vec3(target.x(), target.y(), 2.0), target));
    offset.records.push_back(tick_record(k, Vec3(target.x() + 1.0, target.y(), 2.0), target));
  }
  const DtwReport g = evaluate_run(glued);
  CHECK(g.mean_distance == 0.0);
  CHECK(g.case_name == "disk_fan_dino_no");
  // z adds the altitude offset only when asked for.
  EvalOptions xyz;
  xyz.xyz = true;
  CHECK(evaluate_run(glued, xyz).mean_distance == doctest::Approx(2.0));

  // A constant offset can only be matched diagonally at cost 1 per pair.
  Trajectory line_a, line_b;
  for (int k = 0; k < 50; ++k) {
    line_a.push_back(k, Vec3(0, 0.1 * k, 0));
    line_b.push_back(k, Vec3(1, 0.1 * k, 0));
  }
  CHECK(dtw_fast(line_a, line_b, 4).mean_distance == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(evaluate_run(offset).mean_distance <= 1.0 + 1e-12);

  RunLog missing = glued;
  missing.records[3].erase("target");
  CHECK_THROWS_AS(evaluate_run(missing), ConfigError);
}

TEST_CASE("CSV trajectories") {
  std::istringstream xy("0,0\n1,0\n2,1\n");
  const Trajectory a = read_csv_trajectory(xy);
  REQUIRE(a.size() == 3);
  CHECK(a.t[2] == 2.0);
  CHECK(a.p[2].y() == 1.0);

  std::istringstream named("time,x,y,t\r\n9,1,2,0.5\r\n9,3,4,0.7\r\n");
  const Trajectory b = read_csv_trajectory(named);
  REQUIRE(b.size() == 2);
  CHECK(b.t[1] == 0.7);
  CHECK(b.p[1].x() == 3.0);

  std::istringstream txyz("0,1,2,3\n1,4,5,6\n");
  CHECK(read_csv_trajectory(txyz).p[1].z() == 6.0);

  std::istringstream ragged("0,0\n1,0,3\n");
  CHECK_THROWS_AS(read_csv_trajectory(ragged), ConfigError);
  std::istringstream decreasing("1,0,0\n0,1,1\n");
  CHECK_THROWS_AS(read_csv_trajectory(decreasing), ConfigError);
  std::istringstream empty("");
  CHECK_THROWS_AS(read_csv_trajectory(empty), ConfigError);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "helpers.hpp"
#include "tar/perception.hpp"

using namespace tar;
using namespace tar::testing;

namespace {

// Exhaustive region x query table, labels by argmax with lower query on ties.
struct OracleLabel {
  std::size_t region;
  std::size_t query;
  double similarity;
};

std::vector<OracleLabel> oracle_detect(const RegionSet& regions, const std::vector<Descriptor>& queries,
                                       double threshold) {
  std::vector<OracleLabel> out;
  for (std::size_t j = 0; j < regions.size(); ++j) {
    const Descriptor v = pool_region(regions.frame(), regions.mask(j));
    std::size_t best_q = 0;
    double best = -2.0;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const double s = v.dot(queries[q]) / (v.norm() * queries[q].norm());
      if (s > best) {
        best = s;
        best_q = q;
      }
    }
    if (best >= threshold) out.push_back({j, best_q, best});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.similarity > b.similarity; });
  return out;
}

}  // namespace

TEST_CASE("pixel_descriptor: sigma 0 gives the prototype exactly") {
  const auto m = model_of(0.0);
  SplitMix64 s(3);
  CHECK(pixel_descriptor(*m, 2, s) == m->prototype(2));
  CHECK_THROWS_AS(pixel_descriptor(*m, 99, s), ConfigError);
}

TEST_CASE("pixel_descriptor: sigma 0.05 stays within cosine 0.9 of the prototype") {
  const auto m = model_of(0.05);
  int below = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    SplitMix64 s = pixel_stream(11, 0, static_cast<std::uint64_t>(k));
    below += cosine(pixel_descriptor(*m, 1, s), m->prototype(1)) <= 0.9;
  }
  CHECK(below <= n / 1000);
}

TEST_CASE("pixel_descriptor: the stream advances between draws") {
  const auto m = model_of(0.05);
  SplitMix64 s(9);
  const Descriptor a = pixel_descriptor(*m, 1, s);
  const Descriptor b = pixel_descriptor(*m, 1, s);
  CHECK(a != b);
  CHECK(a.norm() == doctest::Approx(1.0));
}

TEST_CASE("prototypes are separated") {
  const auto m = model_of(0.0, 8);
  for (int a = 0; a <= 8; ++a)
    for (int b = a + 1; b <= 8; ++b) CHECK(cosine(m->prototype(a), m->prototype(b)) < 0.5);
}

TEST_CASE("instance spread sets the same-class cosine") {
  const double spread = 0.7;
  const auto m = model_of(0.0, 4, 1, spread, {{1, 1}, {2, 1}});
  const double c = 1.0 / std::sqrt(1.0 + spread * spread);
  CHECK(cosine(m->appearance(1, 1), m->prototype(1)) == doctest::Approx(c));
  CHECK(cosine(m->appearance(1, 1), m->appearance(2, 1)) == doctest::Approx(c * c));
}

TEST_CASE("segment: two disjoint disks give two masks") {
  const Scene s(world_of({disk(1, 1, -0.4, 0.0, 0.15), disk(2, 2, 0.4, 0.0, 0.15)}), model_of(0.0));
  CHECK(s.regions->size() == 2);
  CHECK(s.region_of(1) >= 0);
  CHECK(s.region_of(2) >= 0);
}

TEST_CASE("segment: empty scene gives no masks") {
  const Scene s(world_of({}), model_of(0.0));
  CHECK(s.regions->size() == 0);
}

TEST_CASE("segment: half-occluded disk keeps one connected mask") {
  const Scene s(world_of({disk(1, 1, 0.0, 0.0, 0.3), rect(2, 2, 0.3, 0.0, 0.6, 1.0, 2)}), model_of(0.0));
  CHECK(s.regions->size() == 2);
  const int j = s.region_of(1);
  REQUIRE(j >= 0);
  CHECK(s.regions->mask(j).centroid().x() < 320.0);
}

TEST_CASE("segment: masks cover exactly the nonzero pixels") {
  const Scene s(world_of({disk(1, 1, -0.4, 0.2, 0.2), rect(2, 2, 0.3, -0.3, 0.5, 0.3), disk(3, 3, 0.2, 0.1, 0.2, 2)}),
                model_of(0.0));
  std::set<std::uint32_t> covered;
  for (const auto& m : s.regions->masks())
    for (auto i : m.pixels()) CHECK(covered.insert(i).second);
  std::set<std::uint32_t> nonzero;
  for (std::uint32_t i = 0; i < s.frame.id_map().size(); ++i)
    if (s.frame.id_map()[i] != 0) nonzero.insert(i);
  CHECK(covered == nonzero);
}

TEST_CASE("segment: oversegmenting with p_split = 1 halves a disk") {
  const Frame f = render_frame(world_of({disk(1, 1, 0.0, 0.0, 0.2)}), CameraModel{}, model_of(0.0));
  const auto whole = segment(f);
  REQUIRE(whole.size() == 1);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SplitMix64 rng(seed);
    const auto parts = segment(f, SegmentOptions{true, 1.0}, rng);
    REQUIRE(parts.size() == 2);
    CHECK(intersection_count(parts[0], parts[1]) == 0);
    std::vector<std::uint32_t> uni;
    std::set_union(parts[0].pixels().begin(), parts[0].pixels().end(), parts[1].pixels().begin(),
                   parts[1].pixels().end(), std::back_inserter(uni));
    CHECK(uni == whole[0].pixels());
  }
}

TEST_CASE("pool_region: two orthogonal pixels average to the bisector") {
  // Two classes with sigma 0: pixel descriptors are exactly their prototypes.
  const auto m = model_of(0.0);
  const Frame f = render_frame(world_of({rect(1, 1, -0.3, 0.0, 0.4, 0.4), rect(2, 2, 0.3, 0.0, 0.4, 0.4)}),
                               CameraModel{}, m);
  std::vector<std::uint32_t> px = {static_cast<std::uint32_t>(f.index(320 - 60, 240)),
                                   static_cast<std::uint32_t>(f.index(320 + 60, 240))};
  REQUIRE(f.id_map()[px[0]] == 1u);
  REQUIRE(f.id_map()[px[1]] == 2u);
  const Mask two(f.width(), f.height(), px);
  const Descriptor expected = normalized(0.5 * (m->prototype(1) + m->prototype(2)));
  CHECK((pool_region(f, two) - expected).norm() < 1e-12);
  CHECK((pool_region_mean(f, two) - 0.5 * (m->prototype(1) + m->prototype(2))).norm() < 1e-12);
}

TEST_CASE("pool_region: sigma 0 gives the prototype, empty mask throws") {
  const auto m = model_of(0.0);
  const Scene s(world_of({disk(1, 3, 0.0, 0.0, 0.2)}), m);
  REQUIRE(s.regions->size() == 1);
  CHECK((pool_region(s.frame, s.regions->mask(0)) - m->prototype(3)).norm() < 1e-12);
  CHECK_THROWS(pool_region(s.frame, Mask{}));
}

TEST_CASE("pool_region: 500 noisy pixels pool to within 0.999 of the prototype") {
  const auto m = model_of(0.05);
  const Frame f = render_frame(world_of({disk(1, 1, 0.0, 0.0, 0.3)}), CameraModel{}, m);
  const auto masks = segment(f);
  REQUIRE(masks.size() == 1);
  std::vector<std::uint32_t> px(masks[0].pixels().begin(), masks[0].pixels().begin() + 500);
  CHECK(cosine(pool_region(f, Mask(f.width(), f.height(), px)), m->prototype(1)) > 0.999);
}

TEST_CASE("pool_region: repeated pixels pool to that pixel's descriptor") {
  const auto m = model_of(0.05);
  const Frame f = render_frame(world_of({disk(1, 1, 0.0, 0.0, 0.3)}), CameraModel{}, m);
  const std::uint32_t i = static_cast<std::uint32_t>(f.index(320, 240));
  const Mask one(f.width(), f.height(), {i});
  CHECK((pool_region(f, one) - normalized(f.descriptor_at(320, 240))).norm() < 1e-12);
  // Scale: sum of k copies divided by k.
  Descriptor sum = Descriptor::Zero(f.descriptor_dim());
  for (int k = 0; k < 5; ++k) f.accumulate_descriptor(i, sum);
  CHECK((sum / 5.0 - f.descriptor_at(320, 240)).norm() < 1e-12);
}

TEST_CASE("resolve_query: click") {
  const auto m = model_of(0.0);
  const Scene s(world_of({disk(1, 2, 0.0, 0.0, 0.2)}), m);
  const ResolvedQuery r = resolve_query(*s.regions, ClickQuery{320.0, 240.0});
  CHECK((r.descriptor - m->prototype(2)).norm() < 1e-12);
  REQUIRE(r.region);
  CHECK(*r.region == 0u);
  CHECK_THROWS_WITH_AS(resolve_query(*s.regions, ClickQuery{5.0, 5.0}), "no region at click", QueryError);
  CHECK_THROWS_AS(resolve_query(*s.regions, ClickQuery{700.0, 5.0}), QueryError);
}

TEST_CASE("resolve_query: box") {
  const auto m = model_of(0.05);
  const Scene s(world_of({disk(1, 1, -0.3, 0.0, 0.15), disk(2, 2, 0.4, 0.2, 0.15)}), m);
  const int j = s.region_of(1);
  REQUIRE(j >= 0);
  const PixelBox b = s.regions->mask(j).bbox();
  const ResolvedQuery exact = resolve_query(*s.regions, BoxQuery{double(b.x0), double(b.y0), double(b.x1), double(b.y1)});
  REQUIRE(exact.region);
  CHECK(*exact.region == static_cast<std::size_t>(j));

  // Click and exact box agree.
  const Vec2 c = s.regions->mask(j).centroid();
  const ResolvedQuery click = resolve_query(*s.regions, ClickQuery{c.x(), c.y()});
  CHECK(cosine(click.descriptor, exact.descriptor) >= 0.999);

  // A sloppy box: shifted so it covers part of the target plus background.
  const double shift = 0.4 * (b.x1 - b.x0);
  const BoxQuery sloppy{b.x0 - shift, double(b.y0), b.x1 - shift, double(b.y1)};
  const ResolvedQuery r = resolve_query(*s.regions, sloppy);
  // Oracle: IoU argmax over all masks.
  const Mask bm = box_mask(s.frame.width(), s.frame.height(),
                           PixelBox{int(std::floor(sloppy.x0)), int(std::floor(sloppy.y0)), int(std::ceil(sloppy.x1)),
                                    int(std::ceil(sloppy.y1))});
  std::size_t best = 0;
  for (std::size_t k = 1; k < s.regions->size(); ++k)
    if (iou(s.regions->mask(k), bm) > iou(s.regions->mask(best), bm)) best = k;
  REQUIRE(r.region);
  CHECK(*r.region == best);
  CHECK(best == static_cast<std::size_t>(j));

  CHECK_THROWS_AS(resolve_query(*s.regions, BoxQuery{0, 0, 10, 10}), QueryError);
  CHECK_THROWS_AS(resolve_query(*s.regions, BoxQuery{10, 10, 10, 20}), QueryError);
}

TEST_CASE("resolve_query: template") {
  const auto m = model_of(0.0);
  const Scene s(world_of({disk(1, 2, 0.0, 0.0, 0.2)}), m);
  TemplateQuery q;
  q.class_id = 3;
  CHECK(resolve_query(*s.regions, q).descriptor == m->prototype(3));
  CHECK_FALSE(resolve_query(*s.regions, q).region);
  TemplateQuery stored;
  stored.descriptor = Descriptor::Constant(16, 2.0);
  CHECK(resolve_query(*s.regions, stored).descriptor == *stored.descriptor);
  q.class_id = 42;
  CHECK_THROWS_AS(resolve_query(*s.regions, q), QueryError);
  CHECK_THROWS_AS(resolve_query(*s.regions, TemplateQuery{}), QueryError);
}

TEST_CASE("detect: target labeled, distractor class not") {
  const auto m = model_of(0.05);
  const Scene s(world_of({disk(1, 1, -0.3, 0.0, 0.15), disk(2, 2, 0.4, 0.2, 0.15)}), m);
  const std::vector<Descriptor> q = {m->prototype(1)};
  const Detection d = detect(*s.regions, q, 0.8);
  REQUIRE(d.results.size() == 1);
  CHECK(d.results[0].region_index == static_cast<std::size_t>(s.region_of(1)));
  CHECK(d.results[0].best_for_query);
  REQUIRE(d.best[0]);
  CHECK(d.best_similarity[0] == doctest::Approx(d.results[0].similarity));
}

TEST_CASE("detect: a region takes its most similar query") {
  const auto m = model_of(0.0);
  const Scene s(world_of({disk(1, 1, 0.0, 0.0, 0.2)}), m);
  const std::vector<Descriptor> q = {normalized(m->prototype(1) + m->prototype(2)), m->prototype(1)};
  const Detection d = detect(*s.regions, q, 0.5);
  REQUIRE(d.results.size() == 1);
  CHECK(d.results[0].query_index == 1u);
  CHECK(d.results[0].similarity == doctest::Approx(1.0));
  CHECK_FALSE(d.best[0]);
}

TEST_CASE("detect: template query labels exactly the queried class at sigma 0") {
  const auto m = model_of(0.0);
  const Scene s(world_of({disk(1, 1, -0.5, 0.0, 0.1), disk(2, 1, 0.5, 0.0, 0.1), disk(3, 2, 0.0, 0.5, 0.1),
                          rect(4, 3, 0.0, -0.5, 0.3, 0.2)}),
                m);
  for (double threshold : {0.5, 0.8, 0.999}) {
    const std::vector<Descriptor> q = {m->prototype(1)};
    std::set<std::uint32_t> labeled;
    for (const auto& r : detect(*s.regions, q, threshold).results)
      labeled.insert(s.regions->mask(r.region_index).source_instance());
    CHECK(labeled == std::set<std::uint32_t>{1, 2});
  }
}

TEST_CASE("detect equals the brute-force oracle on random scenes") {
  SplitMix64 rng(77);
  std::uniform_real_distribution<double> pos(-1.0, 1.0);
  std::uniform_real_distribution<double> rad(0.05, 0.2);
  std::uniform_int_distribution<int> cls(1, 4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<SceneObject> objs;
    for (std::uint32_t k = 1; k <= 5; ++k) objs.push_back(disk(k, cls(rng), pos(rng), pos(rng), rad(rng), int(k)));
    const auto m = model_of(0.08, 4, 100 + trial);
    const Scene s(world_of(objs), m);
    std::vector<Descriptor> q = {m->prototype(cls(rng)), normalized(m->prototype(cls(rng)) + 0.3 * m->prototype(0))};
    for (double threshold : {0.3, 0.8}) {
      const Detection d = detect(*s.regions, q, threshold);
      const auto o = oracle_detect(*s.regions, q, threshold);
      REQUIRE(d.results.size() == o.size());
      for (std::size_t k = 0; k < o.size(); ++k) {
        CHECK(d.results[k].region_index == o[k].region);
        CHECK(d.results[k].query_index == o[k].query);
        CHECK(d.results[k].similarity == doctest::Approx(o[k].similarity).epsilon(1e-12));
      }
      for (std::size_t qi = 0; qi < q.size(); ++qi) {
        const auto it = std::find_if(o.begin(), o.end(), [&](const auto& l) { return l.query == qi; });
        CHECK(d.best[qi].has_value() == (it != o.end()));
        if (it != o.end()) CHECK(*d.best[qi] == it->region);
      }
    }
  }
}

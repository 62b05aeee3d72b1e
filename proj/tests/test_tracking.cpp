#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "tar/tracking.hpp"

using namespace tar;
using namespace tar::testing;

namespace {

TrackState tracking_on(const Scene& s, std::uint32_t id, int level = 3, int tau = 10) {
  TrackState st;
  st.bank = DescriptorBank(tau);
  st.redetect_level = level;
  const int j = s.region_of(id);
  REQUIRE(j >= 0);
  return acquire(std::move(st), *s.regions, static_cast<std::size_t>(j));
}

}  // namespace

TEST_CASE("bank stores every tau-th iteration") {
  DescriptorBank b(5);
  const Descriptor v = Descriptor::Ones(4);
  for (std::uint64_t i = 0; i <= 12; ++i) b.offer(i, v);
  CHECK(b.size() == 3);
  CHECK(b.iterations() == std::vector<std::uint64_t>{0, 5, 10});
  DescriptorBank one(1);
  for (std::uint64_t i = 0; i < 7; ++i) one.offer(i, v);
  CHECK(one.size() == 7);
  CHECK_THROWS_AS(DescriptorBank(0), ConfigError);
}

TEST_CASE("bank growth law over n tracking iterations") {
  for (int tau : {1, 3, 10})
    for (std::uint64_t n = 1; n <= 40; ++n) {
      DescriptorBank b(tau);
      for (std::uint64_t i = 0; i < n; ++i) b.offer(i, Descriptor::Ones(2));
      CHECK(b.size() == (n - 1) / static_cast<std::uint64_t>(tau) + 1);
    }
}

TEST_CASE("bank capacity drops the oldest entry") {
  DescriptorBank b(1, 2);
  for (int i = 0; i < 4; ++i) b.offer(static_cast<std::uint64_t>(i), Descriptor::Constant(1, i));
  CHECK(b.iterations() == std::vector<std::uint64_t>{2, 3});
}

TEST_CASE("bank_query: mean then normalize") {
  DescriptorBank b(1);
  CHECK_FALSE(bank_query(b));
  Descriptor e0 = Descriptor::Zero(4), e1 = Descriptor::Zero(4);
  e0[0] = 1.0;
  e1[1] = 1.0;
  b.offer(0, e0);
  CHECK(*bank_query(b) == e0);
  b.offer(1, e1);
  const Descriptor q = *bank_query(b);
  CHECK(q[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(q[1] == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("bank_query of ten noisy entries recovers the prototype") {
  const auto m = model_of(0.05);
  DescriptorBank b(1);
  for (std::uint64_t k = 0; k < 10; ++k) {
    // Single-pixel entries: the noisiest possible.
    SplitMix64 s = pixel_stream(5, k, 0);
    b.offer(k, pixel_descriptor(*m, 1, s));
  }
  CHECK(cosine(*bank_query(b), m->prototype(1)) > 0.99);
  // Region-pooled entries, as the tracker stores them.
  DescriptorBank pooled(1);
  for (std::uint64_t k = 0; k < 10; ++k) {
    WorldState w = world_of({disk(1, 1, 0.0, 0.0, 0.15)});
    w.tick = k;
    const Scene s(w, m);
    pooled.offer(k, s.regions->descriptor(0));
  }
  CHECK(cosine(*bank_query(pooled), m->prototype(1)) > 0.999);
}

TEST_CASE("track_step on a static scene keeps the same mask") {
  const Scene s(world_of({disk(1, 1, 0.1, 0.0, 0.2), disk(2, 2, -0.5, 0.3, 0.1)}), model_of(0.0));
  TrackState st = tracking_on(s, 1);
  for (int k = 0; k < 5; ++k) {
    const Mask before = *st.current_mask;
    st = track_step(std::move(st), *s.regions, TrackerParams{});
    REQUIRE(st.status == TrackStatus::Tracking);
    CHECK(*st.current_mask == before);
    CHECK(st.similarity == doctest::Approx(1.0));
  }
}

TEST_CASE("track_step declares loss when the target is covered") {
  const auto m = model_of(0.0);
  const Scene s(world_of({disk(1, 1, 0.0, 0.0, 0.2)}), m);
  TrackState st = tracking_on(s, 1);
  const Scene covered(world_of({disk(1, 1, 0.0, 0.0, 0.2), rect(2, 2, 0.0, 0.0, 1.0, 1.0, 2)}), m);
  st = track_step(std::move(st), *covered.regions, TrackerParams{});
  CHECK(st.status == TrackStatus::Lost);
  CHECK_FALSE(st.current_mask);
}

TEST_CASE("track_step: overlapping target beats an identical-class distractor") {
  const auto m = model_of(0.0);
  const Scene a(world_of({disk(1, 1, 0.0, 0.0, 0.15), disk(2, 1, 0.6, 0.0, 0.15)}), m);
  TrackState st = tracking_on(a, 1);
  const Scene b(world_of({disk(1, 1, 0.05, 0.0, 0.15), disk(2, 1, 0.6, 0.0, 0.15)}), m);
  // Score table oracle.
  const TrackerParams p;
  std::vector<double> score(b.regions->size());
  for (std::size_t j = 0; j < b.regions->size(); ++j)
    score[j] = p.alpha * iou(*st.current_mask, b.regions->mask(j)) +
               (1 - p.alpha) * cosine(*st.v_track, b.regions->descriptor(j));
  const auto t = static_cast<std::size_t>(b.region_of(1));
  const auto d = static_cast<std::size_t>(b.region_of(2));
  CHECK(score[t] > score[d]);
  st = track_step(std::move(st), *b.regions, p);
  REQUIRE(st.status == TrackStatus::Tracking);
  CHECK(st.current_mask->source_instance() == 1u);
}

TEST_CASE("bank skips iterations lost in 4..6 (tau 5)") {
  const auto m = model_of(0.0);
  std::vector<SceneObject> objs = {disk(1, 1, 0.0, 0.0, 0.2), rect(2, 2, 0.0, 0.0, 1.0, 1.0, 2)};
  WorldState visible = world_of(objs);
  visible.objects[1].visible = false;
  const WorldState hidden = world_of(objs);
  const Scene vs(visible, m);
  const Scene hs(hidden, m);

  TrackState st = tracking_on(vs, 1, 3, 5);
  int lost_transitions = 0;
  for (std::uint64_t i = 0; i <= 12; ++i) {
    const bool occluded = i >= 4 && i <= 6;
    TrackUpdate u = process_frame(std::move(st), *(occluded ? hs : vs).regions, TrackerParams{});
    lost_transitions += u.transition == TransitionKind::Lost;
    st = std::move(u.state);
    CHECK((st.status == TrackStatus::Tracking) == !occluded);
  }
  CHECK(lost_transitions == 1);
  CHECK(st.bank.iterations() == std::vector<std::uint64_t>{0, 10});
  CHECK(st.iteration == 13);
}

TEST_CASE("level 3 re-acquires on the first visible frame") {
  const auto m = model_of(0.0);
  const Scene vs(world_of({disk(1, 1, 0.0, 0.0, 0.2)}), m);
  const Scene empty(world_of({}), m);
  TrackUpdate u = process_frame(tracking_on(vs, 1), *vs.regions, TrackerParams{});
  u = process_frame(std::move(u.state), *empty.regions, TrackerParams{});
  CHECK(u.transition == TransitionKind::Lost);
  u = process_frame(std::move(u.state), *empty.regions, TrackerParams{});
  CHECK(u.state.status == TrackStatus::Redetecting);
  u = process_frame(std::move(u.state), *vs.regions, TrackerParams{});
  CHECK(u.transition == TransitionKind::Reacquired);
  CHECK(u.state.similarity == doctest::Approx(1.0));
}

TEST_CASE("level 1 takes a same-class distractor, level 3 waits for the target") {
  // Same class, distinct instances: cosine between them is about 0.67.
  const auto m = model_of(0.0, 4, 1, 0.7, {{1, 1}, {2, 1}, {3, 3}});
  const Scene both(world_of({disk(1, 1, 0.0, 0.0, 0.15), disk(2, 1, 0.6, 0.3, 0.15)}), m);
  const Scene distractor_only(world_of({disk(2, 1, 0.6, 0.3, 0.15)}), m);

  for (int level : {1, 3}) {
    TrackState st = tracking_on(both, 1, level);
    st = process_frame(std::move(st), *both.regions, TrackerParams{}).state;
    st.status = TrackStatus::Lost;
    st.current_mask.reset();
    const TrackState r = redetect(st, *distractor_only.regions, TrackerParams{});
    // Oracle: cosine of the distractor to the last tracked descriptor.
    const double c = cosine(*st.v_track, distractor_only.regions->descriptor(0));
    CHECK(c > TrackerParams{}.s_min);
    CHECK(c < TrackerParams{}.thresh_redetect);
    if (level == 1) {
      REQUIRE(r.status == TrackStatus::Tracking);
      CHECK(r.current_mask->source_instance() == 2u);
    } else {
      CHECK(r.status == TrackStatus::Redetecting);
      const TrackState back = redetect(r, *both.regions, TrackerParams{});
      REQUIRE(back.status == TrackStatus::Tracking);
      CHECK(back.current_mask->source_instance() == 1u);
    }
  }
}

TEST_CASE("level 3 ignores a distinct-class distractor") {
  const auto m = model_of(0.0);
  const Scene target(world_of({disk(1, 1, 0.0, 0.0, 0.15)}), m);
  const Scene other(world_of({disk(2, 2, 0.5, 0.0, 0.15)}), m);
  TrackState st = tracking_on(target, 1);
  st.status = TrackStatus::Lost;
  CHECK(redetect(st, *other.regions, TrackerParams{}).status == TrackStatus::Redetecting);
}

TEST_CASE("level 2 waits for a human answer") {
  const auto m = model_of(0.0);
  const Scene s(world_of({disk(1, 1, 0.0, 0.0, 0.15), disk(2, 2, 0.5, 0.0, 0.15)}), m);
  TrackState st = tracking_on(s, 1, 2);
  st.status = TrackStatus::Lost;
  st = redetect(std::move(st), *s.regions, TrackerParams{});
  CHECK(st.status == TrackStatus::AwaitingHuman);
  st = redetect(std::move(st), *s.regions, TrackerParams{});
  CHECK(st.status == TrackStatus::AwaitingHuman);

  CHECK_THROWS_AS(redetect(st, *s.regions, TrackerParams{}, Query{ClickQuery{2, 2}}), QueryError);
  CHECK_THROWS_AS(redetect(st, *s.regions, TrackerParams{}, Query{TemplateQuery{1, std::nullopt}}), QueryError);

  // The human may point at anything, including the other object.
  const Vec2 c = s.regions->mask(static_cast<std::size_t>(s.region_of(2))).centroid();
  const TrackState r = redetect(st, *s.regions, TrackerParams{}, Query{ClickQuery{c.x(), c.y()}});
  REQUIRE(r.status == TrackStatus::Tracking);
  CHECK(r.current_mask->source_instance() == 2u);
}

TEST_CASE("empty bank falls back to the original query") {
  const auto m = model_of(0.0);
  const Scene s(world_of({disk(1, 1, 0.0, 0.0, 0.15)}), m);
  TrackState st;
  st.status = TrackStatus::Lost;
  st.v_track = m->prototype(1);
  st.query_descriptor = m->prototype(1);
  REQUIRE(st.bank.empty());
  CHECK(redetect(st, *s.regions, TrackerParams{}).status == TrackStatus::Tracking);
}

TEST_CASE("acquired masks always come from the segmentation") {
  const auto m = model_of(0.05, 4, 1, 0.7, {{1, 1}, {2, 1}});
  const Scene s(world_of({disk(1, 1, 0.0, 0.0, 0.15), disk(2, 1, 0.6, 0.3, 0.15)}), m);
  for (int level : {1, 3}) {
    TrackState st = tracking_on(s, 1, level);
    st.status = TrackStatus::Lost;
    const TrackState r = redetect(st, *s.regions, TrackerParams{});
    REQUIRE(r.current_mask);
    bool found = false;
    for (const auto& mk : s.regions->masks()) found |= mk == *r.current_mask;
    CHECK(found);
  }
}

TEST_CASE("idle state does not advance") {
  const Scene s(world_of({disk(1, 1, 0.0, 0.0, 0.15)}), model_of(0.0));
  const TrackUpdate u = process_frame(TrackState{}, *s.regions, TrackerParams{});
  CHECK(u.state.status == TrackStatus::Idle);
  CHECK(u.state.iteration == 0);
}

TEST_CASE("tracker parameter validation") {
  TrackerParams p;
  p.alpha = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.thresh_redetect = 1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  CHECK_NOTHROW(TrackerParams{}.validate());
}

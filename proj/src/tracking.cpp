#include "tar/tracking.hpp"

#include <array>

namespace tar {

std::string_view to_string(TrackStatus s) {
  switch (s) {
    case TrackStatus::Idle: return "IDLE";
    case TrackStatus::Tracking: return "TRACKING";
    case TrackStatus::Lost: return "LOST";
    case TrackStatus::Redetecting: return "REDETECTING";
    case TrackStatus::AwaitingHuman: return "AWAITING_HUMAN";
  }
  return "UNKNOWN";
}

DescriptorBank::DescriptorBank(int tau, std::size_t capacity) : tau_(tau), capacity_(capacity) {
  if (tau <= 0) throw ConfigError("bank tau must be a positive integer");
}

bool DescriptorBank::offer(std::uint64_t iteration, const Descriptor& v) {
  if (iteration % static_cast<std::uint64_t>(tau_) != 0) return false;
  if (capacity_ > 0 && entries_.size() == capacity_) {
    entries_.erase(entries_.begin());
    iterations_.erase(iterations_.begin());
  }
  entries_.push_back(v);
  iterations_.push_back(iteration);
  return true;
}

void DescriptorBank::clear() {
  entries_.clear();
  iterations_.clear();
}

std::optional<Descriptor> bank_query(const DescriptorBank& bank) {
  if (bank.empty()) return std::nullopt;
  Descriptor sum = Descriptor::Zero(bank.entries().front().size());
  for (const auto& e : bank.entries()) sum += e;
  return normalized(sum / static_cast<double>(bank.size()));
}

void TrackerParams::validate() const {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("tracker alpha must be in [0, 1]");
  if (iou_min < 0.0 || iou_min > 1.0) throw ConfigError("tracker iou_min must be in [0, 1]");
  if (s_min < -1.0 || s_min > 1.0) throw ConfigError("tracker s_min must be in [-1, 1]");
  if (thresh_redetect <= -1.0 || thresh_redetect >= 1.0)
    throw ConfigError("thresh_redetect must be in (-1, 1)");
}

TrackState acquire(TrackState state, const RegionSet& regions, std::size_t region) {
  state.status = TrackStatus::Tracking;
  state.current_mask = regions.mask(region);
  state.v_track = regions.descriptor(region);
  if (!state.query_descriptor) state.query_descriptor = state.v_track;
  if (state.query_descriptor) state.similarity = cosine(*state.v_track, *state.query_descriptor);
  return state;
}

TrackState track_step(TrackState state, const RegionSet& regions, const TrackerParams& params) {
  if (state.status != TrackStatus::Tracking || !state.current_mask || !state.v_track)
    throw ConfigError("track_step requires TRACKING status");

  std::optional<std::size_t> best;
  double best_score = 0.0;
  double best_cos = 0.0;
  for (std::size_t j = 0; j < regions.size(); ++j) {
    const double overlap = iou(*state.current_mask, regions.mask(j));
    // Regions failing the IoU gate can never be selected; skip pooling them.
    if (overlap < params.iou_min || overlap == 0.0) continue;
    const double c = cosine(*state.v_track, regions.descriptor(j));
    const double score = params.alpha * overlap + (1.0 - params.alpha) * c;
    if (!best || score > best_score) {
      best = j;
      best_score = score;
      best_cos = c;
    }
  }

  if (best && best_score >= params.s_min) {
    state.current_mask = regions.mask(*best);
    state.v_track = regions.descriptor(*best);
    state.similarity = best_cos;
    return state;
  }
  state.status = TrackStatus::Lost;
  state.current_mask.reset();
  return state;
}

TrackState bank_update(TrackState state, const RegionSet& regions) {
  if (state.status != TrackStatus::Tracking || !state.current_mask)
    throw ConfigError("bank_update requires TRACKING status");
  if (state.iteration % static_cast<std::uint64_t>(state.bank.tau()) == 0) {
    // v_track is already pool_region(current mask) whenever it is set.
    state.bank.offer(state.iteration, state.v_track ? *state.v_track : pool_region(regions.frame(), *state.current_mask));
  }
  return state;
}

namespace {

TrackState reacquire(TrackState state, const RegionSet& regions, std::size_t region) {
  state.status = TrackStatus::Tracking;
  state.current_mask = regions.mask(region);
  state.v_track = regions.descriptor(region);
  return state;
}

/// Detection-stage search with a single query.
std::optional<std::size_t> detect_best(const RegionSet& regions, const Descriptor& query,
                                       double threshold, double* similarity) {
  const std::array<Descriptor, 1> queries{query};
  const Detection d = detect(regions, queries, threshold);
  if (d.best[0] && similarity) *similarity = d.best_similarity[0];
  return d.best[0];
}

}  // namespace

TrackState redetect(TrackState state, const RegionSet& regions, const TrackerParams& params,
                    const std::optional<Query>& human_answer) {
  if (state.status != TrackStatus::Lost && state.status != TrackStatus::Redetecting &&
      state.status != TrackStatus::AwaitingHuman)
    throw ConfigError("redetect requires LOST, REDETECTING or AWAITING_HUMAN status");

  // A human answer is honoured at any level; at level 2 it is the only way back.
  if (human_answer) {
    if (std::holds_alternative<TemplateQuery>(*human_answer))
      throw QueryError("human answer must be a click or a bounding box");
    const ResolvedQuery r = resolve_query(regions, *human_answer);
    state = reacquire(std::move(state), regions, *r.region);
    state.similarity = state.query_descriptor ? cosine(*state.v_track, *state.query_descriptor) : 1.0;
    return state;
  }

  double similarity = 0.0;
  std::optional<std::size_t> found;

  if (!state.v_track) {
    // Never acquired: still in the initial detection stage.
    if (state.query_descriptor)
      found = detect_best(regions, *state.query_descriptor, params.thresh_redetect, &similarity);
  } else if (state.redetect_level == 1) {
    // Tracker-only recovery: appearance against the last tracked region,
    // IoU gate dropped, accepted at the tracker's own match floor.
    for (std::size_t j = 0; j < regions.size(); ++j) {
      const double c = cosine(*state.v_track, regions.descriptor(j));
      if (!found || c > similarity) {
        found = j;
        similarity = c;
      }
    }
    if (found && similarity < params.s_min) found.reset();
  } else if (state.redetect_level == 2) {
    state.status = TrackStatus::AwaitingHuman;
    return state;
  } else {
    const auto bank_mean = bank_query(state.bank);
    const auto& query = bank_mean ? bank_mean : state.query_descriptor;
    if (query) found = detect_best(regions, *query, params.thresh_redetect, &similarity);
  }

  if (!found) {
    state.status = TrackStatus::Redetecting;
    return state;
  }
  state = reacquire(std::move(state), regions, *found);
  state.similarity = similarity;
  return state;
}

TrackUpdate process_frame(TrackState state, const RegionSet& regions, const TrackerParams& params,
                          const std::optional<Query>& human_answer) {
  TrackUpdate out;
  const TrackStatus before = state.status;
  switch (before) {
    case TrackStatus::Idle:
      break;
    case TrackStatus::Tracking:
      state = track_step(std::move(state), regions, params);
      if (state.status == TrackStatus::Lost) out.transition = TransitionKind::Lost;
      break;
    case TrackStatus::Lost:
    case TrackStatus::Redetecting:
    case TrackStatus::AwaitingHuman:
      state = redetect(std::move(state), regions, params, human_answer);
      if (state.status == TrackStatus::Tracking) out.transition = TransitionKind::Reacquired;
      break;
  }
  if (state.status == TrackStatus::Tracking) {
    out.bank_stored = state.iteration % static_cast<std::uint64_t>(state.bank.tau()) == 0;
    state = bank_update(std::move(state), regions);
  }
  if (state.status != TrackStatus::Idle) ++state.iteration;
  out.state = std::move(state);
  return out;
}

}  // namespace tar

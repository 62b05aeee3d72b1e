#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "tar/perception.hpp"

namespace tar {

enum class TrackStatus { Idle, Tracking, Lost, Redetecting, AwaitingHuman };

std::string_view to_string(TrackStatus s);

/// Descriptors of the tracked object sampled every `tau` iterations; their
/// mean is the automatic re-detection query.
class DescriptorBank {
 public:
  explicit DescriptorBank(int tau = 10, std::size_t capacity = 0);

  int tau() const { return tau_; }
  /// 0 = unbounded. When full, the oldest entry is dropped.
  std::size_t capacity() const { return capacity_; }
  const std::vector<Descriptor>& entries() const { return entries_; }
  const std::vector<std::uint64_t>& iterations() const { return iterations_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Stores `v` if `iteration` is a multiple of tau. Returns whether it did.
  bool offer(std::uint64_t iteration, const Descriptor& v);
  void clear();

 private:
  int tau_;
  std::size_t capacity_;
  std::vector<Descriptor> entries_;
  std::vector<std::uint64_t> iterations_;
};

/// Normalized mean of the bank entries; nullopt when empty.
std::optional<Descriptor> bank_query(const DescriptorBank& bank);

struct TrackerParams {
  double alpha = 0.5;
  double iou_min = 0.05;
  double s_min = 0.6;
  double thresh_redetect = kDefaultSimilarityThreshold;

  void validate() const;
};

struct TrackState {
  TrackStatus status = TrackStatus::Idle;
  std::optional<Mask> current_mask;
  std::optional<Descriptor> v_track;
  /// Descriptor the current target was acquired with (fallback query).
  std::optional<Descriptor> query_descriptor;
  std::uint64_t iteration = 0;
  DescriptorBank bank;
  int redetect_level = 3;
  /// Similarity of the last selection (appearance term).
  double similarity = 0.0;
};

/// Frame-to-frame association: score_j = alpha * IoU + (1 - alpha) * cos.
/// Keeps the best region if it clears both s_min and iou_min, else LOST.
TrackState track_step(TrackState state, const RegionSet& regions, const TrackerParams& params);

/// Appends pool_region(current mask) when iteration mod tau == 0.
TrackState bank_update(TrackState state, const RegionSet& regions);

/// Recovery attempt while LOST / REDETECTING / AWAITING_HUMAN.
///   level 1: tracker-only, appearance match against the last tracked
///            descriptor with the IoU gate dropped, accepted at s_min;
///   level 2: waits for a human click/bbox (`human_answer`);
///   level 3: detection with the bank mean (or the original query) as query.
/// Throws QueryError if a human answer cannot be resolved (state unchanged).
TrackState redetect(TrackState state, const RegionSet& regions, const TrackerParams& params,
                    const std::optional<Query>& human_answer = std::nullopt);

/// Starts tracking region `region` (acquired through a query).
TrackState acquire(TrackState state, const RegionSet& regions, std::size_t region);

enum class TransitionKind { None, Acquired, Lost, Reacquired };

struct TrackUpdate {
  TrackState state;
  TransitionKind transition = TransitionKind::None;
  bool bank_stored = false;
};

/// One pipeline iteration: track or recover, store into the bank, then
/// advance the iteration counter.
TrackUpdate process_frame(TrackState state, const RegionSet& regions, const TrackerParams& params,
                          const std::optional<Query>& human_answer = std::nullopt);

}  // namespace tar

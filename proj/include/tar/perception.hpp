#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "tar/descriptor.hpp"
#include "tar/world.hpp"

namespace tar {

/// Half-open pixel box [x0, x1) x [y0, y1).
struct PixelBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int area() const { return std::max(0, x1 - x0) * std::max(0, y1 - y0); }
  bool operator==(const PixelBox&) const = default;
};

/// Binary region of a W x H frame, stored as sorted pixel indices.
class Mask {
 public:
  Mask() = default;
  /// `pixels` must be sorted and unique.
  Mask(int width, int height, std::vector<std::uint32_t> pixels, std::uint32_t source_instance = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }
  const std::vector<std::uint32_t>& pixels() const { return pixels_; }

  /// Mean of pixel centres (x + 0.5, y + 0.5).
  Vec2 centroid() const { return centroid_; }
  const PixelBox& bbox() const { return bbox_; }
  bool contains(int x, int y) const;

  /// Ground-truth instance under the mask. Evaluation only; never used for
  /// matching decisions.
  std::uint32_t source_instance() const { return source_instance_; }

  std::vector<std::uint8_t> to_dense() const;

  bool operator==(const Mask& o) const { return pixels_ == o.pixels_ && width_ == o.width_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint32_t> pixels_;
  Vec2 centroid_ = Vec2::Zero();
  PixelBox bbox_;
  std::uint32_t source_instance_ = 0;
};

std::size_t intersection_count(const Mask& a, const Mask& b);
double iou(const Mask& a, const Mask& b);
Mask box_mask(int width, int height, const PixelBox& box);

struct SegmentOptions {
  bool oversegment = false;
  /// Probability of splitting each mask by a random chord when oversegmenting.
  double p_split = 0.0;
};

/// Class-agnostic instance segmentation: one mask per 4-connected component
/// of every nonzero instance id, ordered by first pixel in raster order.
std::vector<Mask> segment(const Frame& frame, const SegmentOptions& options, SplitMix64& rng);
std::vector<Mask> segment(const Frame& frame);

/// Mean of the descriptor field over the mask, un-normalized.
Descriptor pool_region_mean(const Frame& frame, const Mask& mask);
/// Mean descriptor over the mask, L2-normalized. Throws for an empty mask.
Descriptor pool_region(const Frame& frame, const Mask& mask);

/// A segmented frame with lazily pooled, cached region descriptors.
class RegionSet {
 public:
  RegionSet(const Frame& frame, std::vector<Mask> masks);

  const Frame& frame() const { return *frame_; }
  const std::vector<Mask>& masks() const { return masks_; }
  std::size_t size() const { return masks_.size(); }
  const Mask& mask(std::size_t j) const { return masks_[j]; }
  /// Normalized pooled descriptor of region j (computed once).
  const Descriptor& descriptor(std::size_t j) const;
  /// Index of the region whose mask contains pixel (x, y), if any.
  std::optional<std::size_t> region_at(int x, int y) const;

 private:
  const Frame* frame_;
  std::vector<Mask> masks_;
  mutable std::vector<std::optional<Descriptor>> cache_;
};

struct ClickQuery {
  double x = 0.0;
  double y = 0.0;
};

struct BoxQuery {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;
};

/// Image-template query: a class exemplar or a stored descriptor.
struct TemplateQuery {
  std::optional<int> class_id;
  std::optional<Descriptor> descriptor;
};

using Query = std::variant<ClickQuery, BoxQuery, TemplateQuery>;

struct ResolvedQuery {
  Descriptor descriptor;
  /// Region the query pointed at (click/bbox only).
  std::optional<std::size_t> region;
};

/// Throws QueryError for out-of-frame geometry, a click on background or a
/// box overlapping no region.
ResolvedQuery resolve_query(const RegionSet& regions, const Query& query);

struct DetectionResult {
  std::size_t region_index = 0;
  std::size_t query_index = 0;
  double similarity = 0.0;
  /// Highest-similarity region among those labeled with this query.
  bool best_for_query = false;
};

struct Detection {
  /// Labeled regions sorted by similarity descending (ties: lower region).
  std::vector<DetectionResult> results;
  /// Per query, the flagged best region (nullopt if none labeled).
  std::vector<std::optional<std::size_t>> best;
  /// Per query, similarity of the best region.
  std::vector<double> best_similarity;
};

inline constexpr double kDefaultSimilarityThreshold = 0.8;

/// Each region takes the query it is most similar to (ties: lower query
/// index) and is labeled iff that similarity reaches `threshold`.
Detection detect(const RegionSet& regions, std::span<const Descriptor> queries,
                 double threshold = kDefaultSimilarityThreshold);

}  // namespace tar

#include "tar/perception.hpp"

#include <algorithm>
#include <numbers>
#include <random>

namespace tar {

Mask::Mask(int width, int height, std::vector<std::uint32_t> pixels, std::uint32_t source_instance)
    : width_(width), height_(height), pixels_(std::move(pixels)), source_instance_(source_instance) {
  if (pixels_.empty()) return;
  double sx = 0.0, sy = 0.0;
  bbox_ = PixelBox{width_, height_, 0, 0};
  for (std::uint32_t i : pixels_) {
    const int x = static_cast<int>(i % static_cast<std::uint32_t>(width_));
    const int y = static_cast<int>(i / static_cast<std::uint32_t>(width_));
    sx += x + 0.5;
    sy += y + 0.5;
    bbox_.x0 = std::min(bbox_.x0, x);
    bbox_.y0 = std::min(bbox_.y0, y);
    bbox_.x1 = std::max(bbox_.x1, x + 1);
    bbox_.y1 = std::max(bbox_.y1, y + 1);
  }
  const double n = static_cast<double>(pixels_.size());
  centroid_ = Vec2(sx / n, sy / n);
}

bool Mask::contains(int x, int y) const {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return false;
  const auto i = static_cast<std::uint32_t>(y) * static_cast<std::uint32_t>(width_) +
                 static_cast<std::uint32_t>(x);
  return std::binary_search(pixels_.begin(), pixels_.end(), i);
}

std::vector<std::uint8_t> Mask::to_dense() const {
  std::vector<std::uint8_t> dense(static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_), 0);
  for (std::uint32_t i : pixels_) dense[i] = 1;
  return dense;
}

std::size_t intersection_count(const Mask& a, const Mask& b) {
  std::size_t n = 0;
  auto ia = a.pixels().begin();
  auto ib = b.pixels().begin();
  while (ia != a.pixels().end() && ib != b.pixels().end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

double iou(const Mask& a, const Mask& b) {
  const std::size_t inter = intersection_count(a, b);
  const std::size_t uni = a.pixel_count() + b.pixel_count() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Mask box_mask(int width, int height, const PixelBox& box) {
  std::vector<std::uint32_t> pixels;
  for (int y = std::max(0, box.y0); y < std::min(height, box.y1); ++y)
    for (int x = std::max(0, box.x0); x < std::min(width, box.x1); ++x)
      pixels.push_back(static_cast<std::uint32_t>(y * width + x));
  return Mask(width, height, std::move(pixels));
}

namespace {

std::vector<Mask> connected_components(const Frame& frame) {
  const int w = frame.width();
  const int h = frame.height();
  const auto& ids = frame.id_map();
  std::vector<std::uint8_t> seen(ids.size(), 0);
  std::vector<Mask> masks;
  std::vector<std::uint32_t> stack;
  for (std::uint32_t start = 0; start < ids.size(); ++start) {
    if (ids[start] == 0 || seen[start]) continue;
    const std::uint32_t id = ids[start];
    std::vector<std::uint32_t> pixels;
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::uint32_t i = stack.back();
      stack.pop_back();
      pixels.push_back(i);
      const int x = static_cast<int>(i % static_cast<std::uint32_t>(w));
      const int y = static_cast<int>(i / static_cast<std::uint32_t>(w));
      auto visit = [&](int nx, int ny) {
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) return;
        const auto j = static_cast<std::uint32_t>(ny * w + nx);
        if (!seen[j] && ids[j] == id) {
          seen[j] = 1;
          stack.push_back(j);
        }
      };
      visit(x - 1, y);
      visit(x + 1, y);
      visit(x, y - 1);
      visit(x, y + 1);
    }
    std::sort(pixels.begin(), pixels.end());
    masks.emplace_back(w, h, std::move(pixels), id);
  }
  return masks;
}

}  // namespace

std::vector<Mask> segment(const Frame& frame, const SegmentOptions& options, SplitMix64& rng) {
  std::vector<Mask> components = connected_components(frame);
  if (!options.oversegment || options.p_split <= 0.0) return components;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Mask> out;
  for (auto& m : components) {
    const double draw = unit(rng);
    const double angle = unit(rng) * std::numbers::pi;
    if (draw >= options.p_split || m.pixel_count() < 2) {
      out.push_back(std::move(m));
      continue;
    }
    // Chord through the centroid with a random direction.
    const Vec2 c = m.centroid();
    const Vec2 n(std::cos(angle), std::sin(angle));
    std::vector<std::uint32_t> left, right;
    for (std::uint32_t i : m.pixels()) {
      const double x = (i % static_cast<std::uint32_t>(m.width())) + 0.5;
      const double y = (i / static_cast<std::uint32_t>(m.width())) + 0.5;
      (n.dot(Vec2(x, y) - c) >= 0.0 ? left : right).push_back(i);
    }
    if (left.empty() || right.empty()) {
      out.push_back(std::move(m));
      continue;
    }
    out.emplace_back(m.width(), m.height(), std::move(left), m.source_instance());
    out.emplace_back(m.width(), m.height(), std::move(right), m.source_instance());
  }
  return out;
}

std::vector<Mask> segment(const Frame& frame) {
  SplitMix64 unused(0);
  return segment(frame, SegmentOptions{}, unused);
}

Descriptor pool_region_mean(const Frame& frame, const Mask& mask) {
  if (mask.empty()) throw QueryError("cannot pool an empty mask");
  Descriptor sum = Descriptor::Zero(frame.descriptor_dim());
  for (std::uint32_t i : mask.pixels()) frame.accumulate_descriptor(i, sum);
  return sum / static_cast<double>(mask.pixel_count());
}

Descriptor pool_region(const Frame& frame, const Mask& mask) {
  return normalized(pool_region_mean(frame, mask));
}

RegionSet::RegionSet(const Frame& frame, std::vector<Mask> masks)
    : frame_(&frame), masks_(std::move(masks)), cache_(masks_.size()) {}

const Descriptor& RegionSet::descriptor(std::size_t j) const {
  if (!cache_.at(j)) cache_[j] = pool_region(*frame_, masks_[j]);
  return *cache_[j];
}

std::optional<std::size_t> RegionSet::region_at(int x, int y) const {
  for (std::size_t j = 0; j < masks_.size(); ++j)
    if (masks_[j].contains(x, y)) return j;
  return std::nullopt;
}

ResolvedQuery resolve_query(const RegionSet& regions, const Query& query) {
  const Frame& frame = regions.frame();
  const int w = frame.width();
  const int h = frame.height();

  if (const auto* click = std::get_if<ClickQuery>(&query)) {
    if (click->x < 0.0 || click->y < 0.0 || click->x >= w || click->y >= h)
      throw QueryError("click outside frame");
    const auto j = regions.region_at(static_cast<int>(click->x), static_cast<int>(click->y));
    if (!j) throw QueryError("no region at click");
    return {regions.descriptor(*j), j};
  }

  if (const auto* box = std::get_if<BoxQuery>(&query)) {
    if (!(box->x1 > box->x0) || !(box->y1 > box->y0)) throw QueryError("empty bounding box");
    if (box->x0 < 0.0 || box->y0 < 0.0 || box->x1 > w || box->y1 > h)
      throw QueryError("bounding box outside frame");
    // Pixels whose centres fall inside the box.
    const PixelBox pb{static_cast<int>(std::ceil(box->x0 - 0.5)), static_cast<int>(std::ceil(box->y0 - 0.5)),
                      static_cast<int>(std::floor(box->x1 - 0.5)) + 1,
                      static_cast<int>(std::floor(box->y1 - 0.5)) + 1};
    const Mask boxm = box_mask(w, h, pb);
    std::optional<std::size_t> best;
    double best_iou = 0.0;
    for (std::size_t j = 0; j < regions.size(); ++j) {
      const double v = iou(boxm, regions.mask(j));
      if (v > best_iou) {
        best_iou = v;
        best = j;
      }
    }
    if (!best) throw QueryError("bounding box overlaps no region");
    return {regions.descriptor(*best), best};
  }

  const auto& tmpl = std::get<TemplateQuery>(query);
  if (tmpl.descriptor) return {*tmpl.descriptor, std::nullopt};
  if (tmpl.class_id) {
    if (!frame.model().has_class(*tmpl.class_id)) throw QueryError("unknown template class");
    return {frame.model().prototype(*tmpl.class_id), std::nullopt};
  }
  throw QueryError("template query needs a class or a descriptor");
}

Detection detect(const RegionSet& regions, std::span<const Descriptor> queries, double threshold) {
  Detection out;
  out.best.assign(queries.size(), std::nullopt);
  out.best_similarity.assign(queries.size(), -1.0);
  if (queries.empty()) return out;

  for (std::size_t j = 0; j < regions.size(); ++j) {
    const Descriptor& v = regions.descriptor(j);
    std::size_t q_best = 0;
    double s_best = cosine(v, queries[0]);
    for (std::size_t q = 1; q < queries.size(); ++q) {
      const double s = cosine(v, queries[q]);
      if (s > s_best) {
        s_best = s;
        q_best = q;
      }
    }
    if (s_best < threshold) continue;
    out.results.push_back({j, q_best, s_best, false});
    // Regions are visited in index order, so strict > keeps the lower index.
    if (!out.best[q_best] || s_best > out.best_similarity[q_best]) {
      out.best[q_best] = j;
      out.best_similarity[q_best] = s_best;
    }
  }
  std::stable_sort(out.results.begin(), out.results.end(),
                   [](const DetectionResult& a, const DetectionResult& b) { return a.similarity > b.similarity; });
  for (auto& r : out.results) r.best_for_query = out.best[r.query_index] == r.region_index;
  return out;
}

}  // namespace tar

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "tar/common.hpp"

namespace tar {

/// Appearance descriptor of a pixel or region. Compared by cosine similarity.
using Descriptor = Eigen::VectorXd;

Descriptor normalized(const Descriptor& v);
double cosine(const Descriptor& a, const Descriptor& b);

struct DescriptorModelConfig {
  int dim = 16;
  double sigma = 0.05;
  /// Seed for the per-frame noise streams.
  std::uint64_t noise_seed = 1;
  /// Seed for the class prototypes. Bumped until prototypes separate.
  std::uint64_t prototype_seed = 20240601;
  /// Strength of per-instance appearance offsets (0 = all instances of a
  /// class share the class prototype).
  double instance_spread = 0.0;
};

/// Synthetic per-pixel feature extractor: each class owns a random unit
/// prototype, each pixel sees normalize(base + sigma * eps).
class DescriptorModel {
 public:
  static constexpr double kMaxPrototypeCosine = 0.5;

  /// `max_class_id` bounds the prototype table (class 0 = background).
  /// `instances` maps instance_id -> class_id and is only needed when
  /// instance_spread > 0.
  DescriptorModel(const DescriptorModelConfig& config, int max_class_id,
                  const std::map<std::uint32_t, int>& instances = {});

  int dim() const { return config_.dim; }
  double sigma() const { return config_.sigma; }
  std::uint64_t noise_seed() const { return config_.noise_seed; }
  /// The prototype seed actually used after regeneration.
  std::uint64_t prototype_seed() const { return prototype_seed_; }
  const DescriptorModelConfig& config() const { return config_; }

  bool has_class(int class_id) const;
  const Descriptor& prototype(int class_id) const;
  int num_classes() const { return static_cast<int>(prototypes_.size()); }

  /// Noise-free appearance of an instance: its class prototype, shifted by
  /// the instance offset when instance_spread > 0.
  const Descriptor& appearance(std::uint32_t instance_id, int class_id) const;

 private:
  DescriptorModelConfig config_;
  std::uint64_t prototype_seed_;
  std::vector<Descriptor> prototypes_;
  std::map<std::uint32_t, Descriptor> instance_appearance_;
};

/// Per-pixel stream: independent for every (noise seed, frame, pixel).
SplitMix64 pixel_stream(std::uint64_t noise_seed, std::uint64_t frame_seq,
                        std::uint64_t pixel_index);

/// normalize(prototype(class_id) + sigma * eps), eps ~ N(0, I) from `stream`.
/// Throws ConfigError for an unknown class.
Descriptor pixel_descriptor(const DescriptorModel& model, int class_id,
                            SplitMix64& stream);

/// Same law around an explicit base appearance.
Descriptor pixel_descriptor(const DescriptorModel& model, const Descriptor& base,
                            SplitMix64& stream);

}  // namespace tar

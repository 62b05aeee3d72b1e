#include "tar/descriptor.hpp"

#include <algorithm>
#include <string>

namespace tar {

Descriptor normalized(const Descriptor& v) {
  const double n = v.norm();
  if (n == 0.0) return v;
  return v / n;
}

double cosine(const Descriptor& a, const Descriptor& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

namespace {

Descriptor random_unit(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Descriptor v(dim);
  for (int k = 0; k < dim; ++k) v[k] = normal(rng);
  return normalized(v);
}

double max_pairwise_cosine(const std::vector<Descriptor>& vs) {
  double worst = -1.0;
  for (std::size_t i = 0; i < vs.size(); ++i)
    for (std::size_t j = i + 1; j < vs.size(); ++j)
      worst = std::max(worst, cosine(vs[i], vs[j]));
  return worst;
}

}  // namespace

DescriptorModel::DescriptorModel(const DescriptorModelConfig& config, int max_class_id,
                                 const std::map<std::uint32_t, int>& instances)
    : config_(config), prototype_seed_(config.prototype_seed) {
  if (config.dim <= 0) throw ConfigError("descriptor dim must be positive");
  if (config.sigma < 0.0) throw ConfigError("descriptor sigma must be >= 0");
  if (config.instance_spread < 0.0) throw ConfigError("instance_spread must be >= 0");
  if (max_class_id < 0) throw ConfigError("max_class_id must be >= 0");

  const int n = max_class_id + 1;
  // Regenerate until prototypes are well separated. Give up after a bounded
  // number of attempts (only reachable for tiny dims or many classes).
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::mt19937_64 rng(prototype_seed_);
    prototypes_.clear();
    for (int c = 0; c < n; ++c) prototypes_.push_back(random_unit(config.dim, rng));
    if (n < 2 || max_pairwise_cosine(prototypes_) < kMaxPrototypeCosine) break;
    ++prototype_seed_;
  }

  if (config.instance_spread > 0.0) {
    // Offsets are orthonormalized against every prototype and each other
    // while the dimension allows, so instance similarity is set by the
    // spread alone: cos(instance, prototype) = 1 / sqrt(1 + spread^2).
    std::vector<Descriptor> basis;
    for (const auto& p : prototypes_) {
      Descriptor q = p;
      for (const auto& b : basis) q -= q.dot(b) * b;
      if (q.norm() > 1e-9) basis.push_back(q.normalized());
    }
    std::mt19937_64 rng(mix_seed(prototype_seed_, 0x1d5));
    for (const auto& [instance_id, class_id] : instances) {
      if (!has_class(class_id))
        throw ConfigError("instance " + std::to_string(instance_id) + " has unknown class");
      Descriptor offset = random_unit(config.dim, rng);
      for (const auto& b : basis) offset -= offset.dot(b) * b;
      if (offset.norm() > 1e-9) {
        offset.normalize();
        basis.push_back(offset);
      } else {
        offset = random_unit(config.dim, rng);
      }
      instance_appearance_[instance_id] =
          normalized(prototypes_[class_id] + config.instance_spread * offset);
    }
  }
}

bool DescriptorModel::has_class(int class_id) const {
  return class_id >= 0 && class_id < num_classes();
}

const Descriptor& DescriptorModel::prototype(int class_id) const {
  if (!has_class(class_id))
    throw ConfigError("unknown class_id " + std::to_string(class_id));
  return prototypes_[class_id];
}

const Descriptor& DescriptorModel::appearance(std::uint32_t instance_id, int class_id) const {
  if (auto it = instance_appearance_.find(instance_id); it != instance_appearance_.end())
    return it->second;
  return prototype(class_id);
}

SplitMix64 pixel_stream(std::uint64_t noise_seed, std::uint64_t frame_seq,
                        std::uint64_t pixel_index) {
  return SplitMix64(mix_seed(mix_seed(noise_seed, frame_seq), pixel_index));
}

Descriptor pixel_descriptor(const DescriptorModel& model, const Descriptor& base,
                            SplitMix64& stream) {
  if (model.sigma() == 0.0) return base;
  std::normal_distribution<double> normal(0.0, 1.0);
  Descriptor v(base.size());
  for (Eigen::Index k = 0; k < base.size(); ++k)
    v[k] = base[k] + model.sigma() * normal(stream);
  return normalized(v);
}

Descriptor pixel_descriptor(const DescriptorModel& model, int class_id, SplitMix64& stream) {
  return pixel_descriptor(model, model.prototype(class_id), stream);
}

}  // namespace tar

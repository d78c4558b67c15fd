#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tjaidl/rng.hpp"
#include "tjaidl/tensor.hpp"

namespace tjaidl {

enum class Domain { kSource, kTarget };

const char* domain_name(Domain d);
Domain parse_domain(const std::string& name);

struct Sample {
  std::vector<double> features;
  int identity = 0;
  std::vector<double> attributes;  // identity-level, 0 or 1
  int camera = 0;
  Domain domain = Domain::kSource;

  bool operator==(const Sample&) const = default;
};

/// Immutable collection of samples. A label-stripped copy (labelled() ==
/// false) has identities zeroed and attributes removed; it is the only form
/// the unsupervised adaptation path accepts.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Sample> samples, std::size_t num_attributes, std::size_t feature_dim,
          bool labelled = true);

  const std::vector<Sample>& samples() const noexcept { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  std::size_t num_attributes() const noexcept { return num_attributes_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  bool labelled() const noexcept { return labelled_; }

  /// Sorted distinct identity labels. Throws LabelLeakError when unlabelled.
  std::vector<int> identities() const;
  std::size_t num_identities() const { return identities().size(); }
  /// Zero-based class index of each sample's identity (sorted-id order).
  std::vector<std::size_t> class_indices() const;

  Dataset strip_labels() const;

  /// Rows of features as an n x D tensor (no grad).
  Tensor feature_matrix() const;
  Tensor feature_matrix(std::span<const std::size_t> rows) const;
  Tensor attribute_matrix(std::span<const std::size_t> rows) const;

  bool operator==(const Dataset&) const = default;

 private:
  std::vector<Sample> samples_;
  std::size_t num_attributes_ = 0;
  std::size_t feature_dim_ = 0;
  bool labelled_ = true;
};

struct GenConfig {
  std::size_t n_identities = 100;       // per domain
  std::size_t images_per_camera = 4;    // per identity
  std::size_t n_cameras = 2;
  std::size_t num_attributes = 12;
  std::size_t input_dim = 48;
  double prototype_scale = 1.0;         // spread of identity prototypes
  double attribute_strength = 1.0;      // magnitude of attribute offsets
  double camera_noise = 0.3;            // deviation of camera transforms from identity
  double sample_noise = 1.0;            // per-image Gaussian noise
  double domain_shift = 0.0;            // sigma_d, target-only global perturbation
  std::uint64_t seed = 0;

  void validate() const;
};

struct DatasetPair {
  Dataset source;
  Dataset target;
};

/// Source and target domains with disjoint identity pools. Source ids are
/// 1..N, target ids N+1..2N. The target additionally receives a global
/// affine perturbation whose magnitude scales with domain_shift.
DatasetPair generate_pair(const GenConfig& config);

/// Distance between the feature centroids of two datasets.
double domain_gap(const Dataset& a, const Dataset& b);

/// One JSON record per line; a ".gz" suffix selects gzip compression.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::string format_sample(const Sample& sample);

struct Batch {
  std::vector<std::size_t> indices;  // rows of the source dataset
  Tensor features;                   // batch x D
  bool labelled = false;
  std::vector<std::size_t> classes;  // zero-based identity classes, labelled only
  Tensor attributes;                 // batch x m, labelled only
};

/// Epoch-wise shuffled mini-batches; the final short batch of an epoch is kept.
class BatchSampler {
 public:
  BatchSampler(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed);

  Batch next();
  std::size_t batches_per_epoch() const noexcept;
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  void reshuffle();

  const Dataset* dataset_;
  std::size_t batch_size_;
  SeededRng rng_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> classes_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace tjaidl

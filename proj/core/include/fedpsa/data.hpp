#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpsa/model.hpp"

namespace fedpsa {

/// Labeled samples plus the number of classes.
struct Dataset {
  Batch samples;
  std::size_t n_classes = 0;

  std::size_t size() const noexcept { return samples.size(); }
  std::size_t in_dim() const noexcept { return samples.in_dim; }

  /// Throws ContractError unless N >= n_classes and every label is in range.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Reads an IDX image/label file pair (gzip or plain). Pixels are scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Gaussian class clusters: class c has mean 3.0 * u_c and unit per-feature std.
/// u_c is the c-th canonical axis when n_classes <= in_dim, otherwise a seeded
/// random unit vector.
Dataset make_synthetic(std::size_t n_classes, std::size_t in_dim, std::size_t per_class,
                       std::uint64_t seed);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Shuffles with `seed` and holds out the last ceil(test_fraction * N) samples.
TrainTestSplit split_train_test(const Dataset& dataset, double test_fraction, std::uint64_t seed);

struct PartitionPlan {
  std::vector<std::vector<std::size_t>> client_indices;
  double alpha = 0.0;
  std::uint64_t seed = 0;

  std::size_t n_clients() const noexcept { return client_indices.size(); }
  friend bool operator==(const PartitionPlan&, const PartitionPlan&) = default;
};

/// Per-class Dirichlet split. For every class, proportions p ~ Dir(alpha * 1) are
/// drawn and the class's (shuffled) samples are handed out by largest-remainder
/// rounding of p * count. Clients left empty receive one sample from the largest client.
PartitionPlan dirichlet_partition(const Dataset& dataset, std::size_t n_clients, double alpha,
                                  std::uint64_t seed);

/// Per-client label histograms (counts), rows = clients.
std::vector<std::vector<std::size_t>> label_histograms(const Dataset& dataset,
                                                       const PartitionPlan& plan);

/// Mean pairwise total-variation distance between normalized client label histograms.
double mean_pairwise_tv(const std::vector<std::vector<std::size_t>>& histograms);

enum class CalibrationSource { GaussianNoise, RealSample };

/// Shared batch on which every sensitivity evaluation in a run is performed.
/// RealSample batches keep their labels; GaussianNoise batches are unlabeled.
struct CalibrationBatch {
  CalibrationSource source = CalibrationSource::GaussianNoise;
  std::uint64_t seed = 0;
  Batch batch;

  friend bool operator==(const CalibrationBatch&, const CalibrationBatch&) = default;
};

inline constexpr std::size_t kDefaultCalibrationSize = 64;

/// RealSample draws rows without replacement when size <= N, with replacement otherwise.
CalibrationBatch make_calibration_batch(CalibrationSource source, std::size_t in_dim,
                                        std::size_t size, std::uint64_t seed,
                                        const Dataset* dataset = nullptr);

// JSON fixtures for test replay.
void to_json(nlohmann::json& j, const Dataset& d);
void from_json(const nlohmann::json& j, Dataset& d);
void to_json(nlohmann::json& j, const PartitionPlan& p);
void from_json(const nlohmann::json& j, PartitionPlan& p);

}  // namespace fedpsa

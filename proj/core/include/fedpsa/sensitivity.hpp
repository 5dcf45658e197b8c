#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedpsa/data.hpp"
#include "fedpsa/model.hpp"

namespace fedpsa {

/// Nonnegative per-parameter loss-change magnitudes.
struct SensitivityVector {
  std::vector<double> values;
  std::size_t dim() const noexcept { return values.size(); }
};

/// k-dimensional random projection of a sensitivity (or parameter) vector.
struct SensitivitySketch {
  std::vector<double> values;
  std::size_t dim() const noexcept { return values.size(); }
  bool empty() const noexcept { return values.empty(); }
  friend bool operator==(const SensitivitySketch&, const SensitivitySketch&) = default;
};

/// s_i = |g_i * theta_i - 0.5 * F_ii * theta_i^2| with the mean gradient g and the
/// empirical Fisher diagonal F both taken on `calibration`.
///
/// Unlabeled calibration batches are labeled with the model's own argmax predictions
/// before the loss is formed. Labeled batches use their labels.
SensitivityVector sensitivity_second_order(const ModelSpec& spec, const ParamVector& params,
                                           const Batch& calibration);

/// Exact |F(theta) - F(theta - theta_i e_i)| for the requested coordinates. One forward
/// pass per coordinate; meant as a reference for the second-order estimate. Unlabeled
/// batches are self-labeled once at `params`, and those labels are kept for the
/// perturbed evaluations.
std::vector<double> sensitivity_exact(const ModelSpec& spec, const ParamVector& params,
                                      const Batch& calibration, std::span<const std::size_t> indices);

/// Attaches argmax labels to an unlabeled batch; returns labeled batches unchanged.
Batch self_labeled(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

/// Dense k x d projection with i.i.d. Normal(0, 1/k) entries regenerated from a seed.
class ProjectionMatrix {
 public:
  static ProjectionMatrix gaussian(std::uint64_t seed, std::size_t k, std::size_t d);
  /// d x d identity. Test hook.
  static ProjectionMatrix identity(std::size_t d);

  std::size_t k() const noexcept { return k_; }
  std::size_t d() const noexcept { return d_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::span<const double> row(std::size_t r) const noexcept {
    return std::span<const double>(entries_).subspan(r * d_, d_);
  }
  std::span<const double> entries() const noexcept { return entries_; }

  /// R * x for any length-d vector.
  SensitivitySketch project(std::span<const double> x) const;

  friend bool operator==(const ProjectionMatrix&, const ProjectionMatrix&) = default;

 private:
  ProjectionMatrix(std::uint64_t seed, std::size_t k, std::size_t d, std::vector<double> entries)
      : seed_(seed), k_(k), d_(d), entries_(std::move(entries)) {}

  std::uint64_t seed_ = 0;
  std::size_t k_ = 0;
  std::size_t d_ = 0;
  std::vector<double> entries_;
};

SensitivitySketch sketch(const SensitivityVector& sens, const ProjectionMatrix& proj);

/// Cosine similarity clamped to [-1, 1]; 0.0 when either vector has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);
inline double cosine(const SensitivitySketch& a, const SensitivitySketch& b) {
  return cosine(a.values, b.values);
}
inline double cosine(const SensitivityVector& a, const SensitivityVector& b) {
  return cosine(a.values, b.values);
}

inline double compression_ratio(std::size_t k, std::size_t d) {
  return static_cast<double>(k) / static_cast<double>(d);
}

struct JlReport {
  double max_cosine_error = 0.0;
  double median_cosine_error = 0.0;
  /// max over pairs of | ||Rx-Ry||^2 / ||x-y||^2 - 1 |
  double max_distance_distortion = 0.0;
  std::size_t pairs = 0;
};

/// Compares sketch-space and full-space geometry over every pair of `samples`.
JlReport jl_quality_probe(const ProjectionMatrix& proj, const std::vector<std::vector<double>>& samples);

inline constexpr std::uint8_t kSketchFormatVersion = 1;

/// [u8 version][u32 LE k][k x f64 LE]
std::vector<std::uint8_t> encode_sketch(const SensitivitySketch& sketch);
SensitivitySketch decode_sketch(std::span<const std::uint8_t> bytes);

}  // namespace fedpsa

#include "fedpsa/sensitivity.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include "fedpsa/errors.hpp"

namespace fedpsa {

Batch self_labeled(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  if (batch.labeled()) return batch;
  Batch out = batch;
  out.labels = predict_labels(spec, params, batch);
  return out;
}

SensitivityVector sensitivity_second_order(const ModelSpec& spec, const ParamVector& params,
                                           const Batch& calibration) {
  const Batch labeled = self_labeled(spec, params, calibration);
  const GradientAndFisher gf = gradient_and_fisher(spec, params, labeled);
  SensitivityVector out;
  out.values.resize(params.dim());
  for (std::size_t i = 0; i < params.dim(); ++i) {
    const double theta = params[i];
    out.values[i] = std::abs(gf.gradient[i] * theta - 0.5 * gf.fisher[i] * theta * theta);
  }
  return out;
}

std::vector<double> sensitivity_exact(const ModelSpec& spec, const ParamVector& params,
                                      const Batch& calibration, std::span<const std::size_t> indices) {
  const Batch labeled = self_labeled(spec, params, calibration);
  const double base = forward_loss(spec, params, labeled);
  std::vector<double> out;
  out.reserve(indices.size());
  ParamVector probe = params;
  for (std::size_t i : indices) {
    if (i >= params.dim()) throw ContractError("sensitivity_exact: index " + std::to_string(i) + " out of range");
    probe[i] = 0.0;
    out.push_back(std::abs(base - forward_loss(spec, probe, labeled)));
    probe[i] = params[i];
  }
  return out;
}

ProjectionMatrix ProjectionMatrix::gaussian(std::uint64_t seed, std::size_t k, std::size_t d) {
  if (k == 0 || d == 0) throw ContractError("projection matrix: k and d must be >= 1");
  std::vector<double> entries(k * d);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(k)));
  for (double& e : entries) e = normal(rng);
  return ProjectionMatrix(seed, k, d, std::move(entries));
}

ProjectionMatrix ProjectionMatrix::identity(std::size_t d) {
  std::vector<double> entries(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) entries[i * d + i] = 1.0;
  return ProjectionMatrix(0, d, d, std::move(entries));
}

SensitivitySketch ProjectionMatrix::project(std::span<const double> x) const {
  require_same_dim(x.size(), d_, "projection input");
  SensitivitySketch out;
  out.values.resize(k_);
  for (std::size_t r = 0; r < k_; ++r) out.values[r] = dot(row(r), x);
  return out;
}

SensitivitySketch sketch(const SensitivityVector& sens, const ProjectionMatrix& proj) {
  return proj.project(sens.values);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "cosine");
  double ab = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

JlReport jl_quality_probe(const ProjectionMatrix& proj, const std::vector<std::vector<double>>& samples) {
  if (samples.size() < 2) throw ContractError("jl_quality_probe: need at least two vectors");
  std::vector<SensitivitySketch> sketches;
  sketches.reserve(samples.size());
  for (const auto& s : samples) sketches.push_back(proj.project(s));

  JlReport report;
  std::vector<double> errors;
  for (std::size_t a = 0; a < samples.size(); ++a) {
    for (std::size_t b = a + 1; b < samples.size(); ++b) {
      const double err = std::abs(cosine(sketches[a], sketches[b]) - cosine(samples[a], samples[b]));
      errors.push_back(err);
      report.max_cosine_error = std::max(report.max_cosine_error, err);

      double full = 0.0;
      for (std::size_t i = 0; i < samples[a].size(); ++i) {
        const double diff = samples[a][i] - samples[b][i];
        full += diff * diff;
      }
      double reduced = 0.0;
      for (std::size_t i = 0; i < proj.k(); ++i) {
        const double diff = sketches[a].values[i] - sketches[b].values[i];
        reduced += diff * diff;
      }
      if (full > 0.0) {
        report.max_distance_distortion = std::max(report.max_distance_distortion, std::abs(reduced / full - 1.0));
      }
    }
  }
  report.pairs = errors.size();
  auto mid = errors.begin() + static_cast<std::ptrdiff_t>(errors.size() / 2);
  std::nth_element(errors.begin(), mid, errors.end());
  report.median_cosine_error = *mid;
  return report;
}

namespace {

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t offset, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{in[offset + i]} << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_sketch(const SensitivitySketch& sketch) {
  std::vector<std::uint8_t> out;
  out.reserve(5 + 8 * sketch.dim());
  out.push_back(kSketchFormatVersion);
  put_le(out, sketch.dim(), 4);
  for (double v : sketch.values) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  return out;
}

SensitivitySketch decode_sketch(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 5) throw ParseError("sketch: truncated header at offset 0");
  if (bytes[0] != kSketchFormatVersion) {
    throw ParseError("sketch: unsupported format version " + std::to_string(bytes[0]) + " at offset 0");
  }
  const std::size_t k = get_le(bytes, 1, 4);
  if (bytes.size() != 5 + 8 * k) {
    throw ParseError("sketch: expected " + std::to_string(5 + 8 * k) + " bytes, got " + std::to_string(bytes.size()));
  }
  SensitivitySketch out;
  out.values.resize(k);
  for (std::size_t i = 0; i < k; ++i) out.values[i] = std::bit_cast<double>(get_le(bytes, 5 + 8 * i, 8));
  return out;
}

}  // namespace fedpsa

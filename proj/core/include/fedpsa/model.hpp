#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedpsa/param_vector.hpp"

namespace fedpsa {

enum class Architecture { Linear, Mlp };

/// Shape of a classifier over flat parameters.
///
/// Parameter layout (row-major, contiguous):
///   Linear: W[n_classes][in_dim], b[n_classes]
///   Mlp:    W1[hidden][in_dim], b1[hidden], W2[n_classes][hidden], b2[n_classes]
/// The MLP uses a ReLU hidden layer. Loss is always mean cross-entropy.
struct ModelSpec {
  Architecture architecture = Architecture::Linear;
  std::size_t in_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t n_classes = 0;

  static ModelSpec linear(std::size_t in_dim, std::size_t n_classes);
  static ModelSpec mlp(std::size_t in_dim, std::size_t hidden_dim, std::size_t n_classes);

  std::size_t param_count() const noexcept;
  std::string describe() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Row-major batch of samples. Labels are empty for unlabeled batches.
struct Batch {
  std::size_t in_dim = 0;
  std::vector<double> inputs;
  std::vector<int> labels;

  std::size_t size() const noexcept { return in_dim == 0 ? 0 : inputs.size() / in_dim; }
  bool labeled() const noexcept { return !labels.empty(); }
  std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(inputs).subspan(i * in_dim, in_dim);
  }

  /// Copies the selected rows (and labels, if any) into a new batch.
  Batch gather(std::span<const std::size_t> rows) const;

  friend bool operator==(const Batch&, const Batch&) = default;
};

/// Concatenates two batches with the same feature width.
Batch concat(const Batch& a, const Batch& b);

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

double forward_loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

ParamVector gradient(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

/// Empirical Fisher diagonal: mean over samples of squared per-sample loss gradients.
ParamVector fisher_diagonal(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

struct GradientAndFisher {
  double loss = 0.0;
  ParamVector gradient;
  ParamVector fisher;
};

/// Mean loss, mean gradient and Fisher diagonal from a single pass over per-sample gradients.
GradientAndFisher gradient_and_fisher(const ModelSpec& spec, const ParamVector& params,
                                      const Batch& batch);

/// Argmax class per row. Works on unlabeled batches.
std::vector<int> predict_labels(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

struct LossAndAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean cross-entropy and argmax accuracy in one pass.
LossAndAccuracy loss_and_accuracy(const ModelSpec& spec, const ParamVector& params,
                                  const Batch& batch);

struct SgdOptions {
  int epochs = 5;
  std::size_t batch_size = 64;
  double lr = 0.01;
};

/// Plain minibatch SGD over `data`, reshuffled every epoch from `seed`.
/// The trailing partial minibatch of an epoch is used as-is.
ParamVector local_update(const ModelSpec& spec, const ParamVector& start, const Batch& data,
                         const SgdOptions& options, std::uint64_t seed);

/// Same as above, training on the rows `indices` of a shared sample pool.
ParamVector local_update(const ModelSpec& spec, const ParamVector& start, const Batch& pool,
                         std::span<const std::size_t> indices, const SgdOptions& options,
                         std::uint64_t seed);

}  // namespace fedpsa

#pragma once

// Reference implementations used only by tests. They deliberately avoid the
// library's flat-buffer code paths: weights are unpacked into nested vectors and
// every quantity is evaluated one sample and one coordinate at a time.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedpsa/model.hpp"
#include "fedpsa/sim.hpp"

namespace fedpsa::oracle {

/// Gaussian features, uniform labels in [0, n_classes).
Batch random_batch(std::size_t in_dim, std::size_t n_classes, std::size_t size, std::uint64_t seed);

/// Normal(0, scale) parameters.
ParamVector random_params(const ModelSpec& spec, std::uint64_t seed, double scale = 0.5);

/// Per-sample loss via explicit nested loops.
double sample_loss(const ModelSpec& spec, const ParamVector& params, std::span<const double> x, int label);

/// Mean of sample_loss over the batch.
double batch_loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

/// Argmax of the scalar forward pass.
int sample_predict(const ModelSpec& spec, const ParamVector& params, std::span<const double> x);

/// Central finite difference of batch_loss along coordinate i.
double fd_partial(const ModelSpec& spec, const ParamVector& params, const Batch& batch, std::size_t i, double h);

/// Hand-derived backprop for a single sample, written against the nested-vector layout.
std::vector<double> sample_gradient(const ModelSpec& spec, const ParamVector& params, std::span<const double> x,
                                    int label);

/// (1/m) sum_k g_k(i)^2 via an explicit loop over samples.
std::vector<double> fisher_loop(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

/// |g_i theta_i - 0.5 F_ii theta_i^2|, coordinate by coordinate from sample_gradient.
std::vector<double> sensitivity_loop(const ModelSpec& spec, const ParamVector& params, const Batch& labeled);

/// True when perturbing coordinate i moves a hidden pre-activation that lies within
/// `margin` of the ReLU kink for some sample. Such coordinates are skipped by
/// finite-difference checks.
bool coordinate_near_kink(const ModelSpec& spec, const ParamVector& params, const Batch& batch, std::size_t i,
                          double margin);

/// True when every hidden pre-activation is at least `margin` away from zero for
/// every sample, so finite differences do not straddle a ReLU kink.
bool clear_of_kinks(const ModelSpec& spec, const ParamVector& params, const Batch& batch, double margin);

/// Accuracy and mean loss by explicit per-sample loop.
std::pair<double, double> evaluate_loop(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

}  // namespace fedpsa::oracle

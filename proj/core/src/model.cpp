#include "fedpsa/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedpsa/errors.hpp"

namespace fedpsa {

ModelSpec ModelSpec::linear(std::size_t in_dim, std::size_t n_classes) {
  return ModelSpec{Architecture::Linear, in_dim, 0, n_classes};
}

ModelSpec ModelSpec::mlp(std::size_t in_dim, std::size_t hidden_dim, std::size_t n_classes) {
  return ModelSpec{Architecture::Mlp, in_dim, hidden_dim, n_classes};
}

std::size_t ModelSpec::param_count() const noexcept {
  if (architecture == Architecture::Linear) return n_classes * in_dim + n_classes;
  return hidden_dim * in_dim + hidden_dim + n_classes * hidden_dim + n_classes;
}

std::string ModelSpec::describe() const {
  if (architecture == Architecture::Linear) {
    return "linear(" + std::to_string(in_dim) + "," + std::to_string(n_classes) + ")";
  }
  return "mlp(" + std::to_string(in_dim) + "," + std::to_string(hidden_dim) + "," +
         std::to_string(n_classes) + ")";
}

Batch Batch::gather(std::span<const std::size_t> rows) const {
  Batch out;
  out.in_dim = in_dim;
  out.inputs.reserve(rows.size() * in_dim);
  if (labeled()) out.labels.reserve(rows.size());
  for (std::size_t r : rows) {
    auto x = row(r);
    out.inputs.insert(out.inputs.end(), x.begin(), x.end());
    if (labeled()) out.labels.push_back(labels[r]);
  }
  return out;
}

Batch concat(const Batch& a, const Batch& b) {
  require_same_dim(a.in_dim, b.in_dim, "concat");
  if (a.labeled() != b.labeled()) throw ContractError("concat: labeled and unlabeled batches");
  Batch out = a;
  out.inputs.insert(out.inputs.end(), b.inputs.begin(), b.inputs.end());
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

namespace {

// Forward/backward for one sample at a time against a fixed parameter vector.
class Network {
 public:
  Network(const ModelSpec& spec, const ParamVector& params) : spec_(spec), p_(params.values()) {
    if (params.dim() != spec.param_count()) {
      throw ContractError("parameter vector has dim " + std::to_string(params.dim()) + " but " +
                          spec.describe() + " needs " + std::to_string(spec.param_count()));
    }
    logits_.resize(spec.n_classes);
    probs_.resize(spec.n_classes);
    if (spec.architecture == Architecture::Mlp) {
      hidden_.resize(spec.hidden_dim);
      dhidden_.resize(spec.hidden_dim);
    }
  }

  void check_batch(const Batch& batch, bool need_labels) const {
    require_same_dim(batch.in_dim, spec_.in_dim, "batch feature width");
    if (batch.size() == 0) throw ContractError("empty batch");
    if (need_labels) {
      if (!batch.labeled()) throw ContractError("batch has no labels");
      require_same_dim(batch.labels.size(), batch.size(), "batch labels");
    }
  }

  // Fills logits_; returns the index of the largest logit.
  int forward(std::span<const double> x) {
    const std::size_t in = spec_.in_dim;
    const std::size_t nc = spec_.n_classes;
    if (spec_.architecture == Architecture::Linear) {
      const double* w = p_.data();
      const double* b = w + nc * in;
      for (std::size_t c = 0; c < nc; ++c) logits_[c] = b[c] + row_dot(w + c * in, x.data(), in);
    } else {
      const std::size_t h = spec_.hidden_dim;
      const double* w1 = p_.data();
      const double* b1 = w1 + h * in;
      const double* w2 = b1 + h;
      const double* b2 = w2 + nc * h;
      for (std::size_t j = 0; j < h; ++j) {
        const double pre = b1[j] + row_dot(w1 + j * in, x.data(), in);
        if (!std::isfinite(pre)) throw NumericError("non-finite activation in hidden layer");
        hidden_[j] = pre > 0.0 ? pre : 0.0;
      }
      for (std::size_t c = 0; c < nc; ++c) logits_[c] = b2[c] + row_dot(w2 + c * h, hidden_.data(), h);
    }
    int best = 0;
    for (std::size_t c = 0; c < nc; ++c) {
      if (!std::isfinite(logits_[c])) throw NumericError("non-finite logit in output layer");
      if (logits_[c] > logits_[best]) best = static_cast<int>(c);
    }
    return best;
  }

  // Cross-entropy of the last forward pass; also fills probs_.
  double loss(int label) {
    const std::size_t nc = spec_.n_classes;
    if (label < 0 || static_cast<std::size_t>(label) >= nc) {
      throw ContractError("label " + std::to_string(label) + " outside [0, " + std::to_string(nc) + ")");
    }
    const double mx = *std::max_element(logits_.begin(), logits_.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < nc; ++c) {
      probs_[c] = std::exp(logits_[c] - mx);
      sum += probs_[c];
    }
    for (double& q : probs_) q /= sum;
    return std::log(sum) + mx - logits_[label];
  }

  // grad += scale * d(loss)/d(params) for the last forward/loss pass.
  void backward(std::span<const double> x, int label, double scale, std::span<double> grad) {
    const std::size_t in = spec_.in_dim;
    const std::size_t nc = spec_.n_classes;
    // probs_ becomes dL/dlogits
    probs_[label] -= 1.0;
    if (spec_.architecture == Architecture::Linear) {
      double* gw = grad.data();
      double* gb = gw + nc * in;
      for (std::size_t c = 0; c < nc; ++c) {
        const double d = scale * probs_[c];
        gb[c] += d;
        axpy_row(gw + c * in, d, x.data(), in);
      }
    } else {
      const std::size_t h = spec_.hidden_dim;
      const double* w2 = p_.data() + h * in + h;
      double* gw1 = grad.data();
      double* gb1 = gw1 + h * in;
      double* gw2 = gb1 + h;
      double* gb2 = gw2 + nc * h;
      std::fill(dhidden_.begin(), dhidden_.end(), 0.0);
      for (std::size_t c = 0; c < nc; ++c) {
        const double d = scale * probs_[c];
        gb2[c] += d;
        axpy_row(gw2 + c * h, d, hidden_.data(), h);
        axpy_row(dhidden_.data(), d, w2 + c * h, h);
      }
      for (std::size_t j = 0; j < h; ++j) {
        if (hidden_[j] <= 0.0) continue;
        gb1[j] += dhidden_[j];
        axpy_row(gw1 + j * in, dhidden_[j], x.data(), in);
      }
    }
  }

 private:
  static double row_dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
  }
  static void axpy_row(double* y, double a, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
  }

  const ModelSpec& spec_;
  std::span<const double> p_;
  std::vector<double> logits_;
  std::vector<double> probs_;
  std::vector<double> hidden_;
  std::vector<double> dhidden_;
};

}  // namespace

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector params(spec.param_count());
  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < count; ++i) params[offset + i] = dist(rng);
  };
  const std::size_t in = spec.in_dim;
  const std::size_t nc = spec.n_classes;
  if (spec.architecture == Architecture::Linear) {
    fill(0, nc * in, in);
    fill(nc * in, nc, in);
  } else {
    const std::size_t h = spec.hidden_dim;
    fill(0, h * in, in);
    fill(h * in, h, in);
    fill(h * in + h, nc * h, h);
    fill(h * in + h + nc * h, nc, h);
  }
  return params;
}

double forward_loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  Network net(spec, params);
  net.check_batch(batch, true);
  double total = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    net.forward(batch.row(k));
    total += net.loss(batch.labels[k]);
  }
  const double mean = total / static_cast<double>(batch.size());
  if (!std::isfinite(mean)) throw NumericError("non-finite loss in output layer");
  return mean;
}

ParamVector gradient(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  Network net(spec, params);
  net.check_batch(batch, true);
  ParamVector grad(spec.param_count());
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    net.forward(batch.row(k));
    net.loss(batch.labels[k]);
    net.backward(batch.row(k), batch.labels[k], scale, grad.values());
  }
  grad.require_finite("gradient");
  return grad;
}

GradientAndFisher gradient_and_fisher(const ModelSpec& spec, const ParamVector& params,
                                      const Batch& batch) {
  Network net(spec, params);
  net.check_batch(batch, true);
  const std::size_t d = spec.param_count();
  const double m = static_cast<double>(batch.size());
  GradientAndFisher out{0.0, ParamVector(d), ParamVector(d)};
  std::vector<double> sample(d);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    std::fill(sample.begin(), sample.end(), 0.0);
    net.forward(batch.row(k));
    out.loss += net.loss(batch.labels[k]);
    net.backward(batch.row(k), batch.labels[k], 1.0, sample);
    for (std::size_t i = 0; i < d; ++i) {
      out.gradient[i] += sample[i];
      out.fisher[i] += sample[i] * sample[i];
    }
  }
  out.loss /= m;
  out.gradient *= 1.0 / m;
  out.fisher *= 1.0 / m;
  out.gradient.require_finite("gradient");
  out.fisher.require_finite("fisher_diagonal");
  return out;
}

ParamVector fisher_diagonal(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  return gradient_and_fisher(spec, params, batch).fisher;
}

std::vector<int> predict_labels(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  Network net(spec, params);
  net.check_batch(batch, false);
  std::vector<int> out(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) out[k] = net.forward(batch.row(k));
  return out;
}

LossAndAccuracy loss_and_accuracy(const ModelSpec& spec, const ParamVector& params,
                                  const Batch& batch) {
  Network net(spec, params);
  net.check_batch(batch, true);
  double total = 0.0;
  std::size_t correct = 0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    if (net.forward(batch.row(k)) == batch.labels[k]) ++correct;
    total += net.loss(batch.labels[k]);
  }
  const double n = static_cast<double>(batch.size());
  if (!std::isfinite(total)) throw NumericError("non-finite loss in output layer");
  return {total / n, static_cast<double>(correct) / n};
}

ParamVector local_update(const ModelSpec& spec, const ParamVector& start, const Batch& data,
                         const SgdOptions& options, std::uint64_t seed) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return local_update(spec, start, data, all, options, seed);
}

ParamVector local_update(const ModelSpec& spec, const ParamVector& start, const Batch& pool,
                         std::span<const std::size_t> indices, const SgdOptions& options,
                         std::uint64_t seed) {
  if (options.epochs < 0 || options.batch_size == 0 || options.lr < 0.0) {
    throw ContractError("local_update: need epochs >= 0, batch_size >= 1, lr >= 0");
  }
  ParamVector params = start;
  if (options.lr == 0.0 || indices.empty()) return params;

  Network probe(spec, params);
  probe.check_batch(pool, true);

  std::vector<std::size_t> order(indices.begin(), indices.end());
  std::mt19937_64 rng(seed);
  ParamVector grad(spec.param_count());
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += options.batch_size) {
      const std::size_t end = std::min(order.size(), begin + options.batch_size);
      const double scale = 1.0 / static_cast<double>(end - begin);
      std::fill(grad.values().begin(), grad.values().end(), 0.0);
      Network net(spec, params);
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t r = order[k];
        net.forward(pool.row(r));
        net.loss(pool.labels[r]);
        net.backward(pool.row(r), pool.labels[r], scale, grad.values());
      }
      params.axpy(-options.lr, grad);
    }
  }
  params.require_finite("local_update");
  return params;
}

}  // namespace fedpsa

#include "oracles.hpp"

#include <cmath>
#include <random>

namespace fedpsa::oracle {

namespace {

using Matrix = std::vector<std::vector<double>>;

struct Unpacked {
  Matrix w1;
  std::vector<double> b1;
  Matrix w2;  // empty for linear models
  std::vector<double> b2;
};

Unpacked unpack(const ModelSpec& spec, const ParamVector& p) {
  Unpacked u;
  std::size_t at = 0;
  const std::size_t first_out = spec.architecture == Architecture::Linear ? spec.n_classes : spec.hidden_dim;
  u.w1.assign(first_out, std::vector<double>(spec.in_dim));
  for (auto& row : u.w1)
    for (auto& v : row) v = p[at++];
  u.b1.resize(first_out);
  for (auto& v : u.b1) v = p[at++];
  if (spec.architecture == Architecture::Mlp) {
    u.w2.assign(spec.n_classes, std::vector<double>(spec.hidden_dim));
    for (auto& row : u.w2)
      for (auto& v : row) v = p[at++];
    u.b2.resize(spec.n_classes);
    for (auto& v : u.b2) v = p[at++];
  }
  return u;
}

std::vector<double> affine(const Matrix& w, const std::vector<double>& b, const std::vector<double>& x) {
  std::vector<double> out(b);
  for (std::size_t r = 0; r < w.size(); ++r)
    for (std::size_t c = 0; c < x.size(); ++c) out[r] += w[r][c] * x[c];
  return out;
}

struct Forward {
  std::vector<double> pre;     // hidden pre-activations (MLP)
  std::vector<double> hidden;  // ReLU output (MLP)
  std::vector<double> logits;
};

Forward forward(const ModelSpec& spec, const Unpacked& u, std::span<const double> xs) {
  const std::vector<double> x(xs.begin(), xs.end());
  Forward f;
  if (spec.architecture == Architecture::Linear) {
    f.logits = affine(u.w1, u.b1, x);
  } else {
    f.pre = affine(u.w1, u.b1, x);
    f.hidden = f.pre;
    for (auto& h : f.hidden) h = std::max(0.0, h);
    f.logits = affine(u.w2, u.b2, f.hidden);
  }
  return f;
}

std::vector<double> softmax(const std::vector<double>& z) {
  double sum = 0.0;
  for (double v : z) sum += std::exp(v);
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::exp(z[i]) / sum;
  return p;
}

}  // namespace

Batch random_batch(std::size_t in_dim, std::size_t n_classes, std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, static_cast<int>(n_classes) - 1);
  Batch b;
  b.in_dim = in_dim;
  for (std::size_t k = 0; k < size; ++k) {
    for (std::size_t f = 0; f < in_dim; ++f) b.inputs.push_back(normal(rng));
    b.labels.push_back(label(rng));
  }
  return b;
}

ParamVector random_params(const ModelSpec& spec, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  ParamVector p(spec.param_count());
  for (std::size_t i = 0; i < p.dim(); ++i) p[i] = normal(rng);
  return p;
}

double sample_loss(const ModelSpec& spec, const ParamVector& params, std::span<const double> x, int label) {
  const auto f = forward(spec, unpack(spec, params), x);
  double sum = 0.0;
  for (double z : f.logits) sum += std::exp(z);
  return std::log(sum) - f.logits[static_cast<std::size_t>(label)];
}

double batch_loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  double total = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) total += sample_loss(spec, params, batch.row(k), batch.labels[k]);
  return total / static_cast<double>(batch.size());
}

int sample_predict(const ModelSpec& spec, const ParamVector& params, std::span<const double> x) {
  const auto f = forward(spec, unpack(spec, params), x);
  int best = 0;
  for (std::size_t c = 1; c < f.logits.size(); ++c)
    if (f.logits[c] > f.logits[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  return best;
}

double fd_partial(const ModelSpec& spec, const ParamVector& params, const Batch& batch, std::size_t i, double h) {
  ParamVector plus = params;
  ParamVector minus = params;
  plus[i] += h;
  minus[i] -= h;
  return (batch_loss(spec, plus, batch) - batch_loss(spec, minus, batch)) / (2.0 * h);
}

std::vector<double> sample_gradient(const ModelSpec& spec, const ParamVector& params, std::span<const double> x,
                                    int label) {
  const Unpacked u = unpack(spec, params);
  const Forward f = forward(spec, u, x);
  std::vector<double> dz = softmax(f.logits);
  dz[static_cast<std::size_t>(label)] -= 1.0;

  std::vector<double> g;
  g.reserve(spec.param_count());
  if (spec.architecture == Architecture::Linear) {
    for (std::size_t c = 0; c < spec.n_classes; ++c)
      for (std::size_t j = 0; j < spec.in_dim; ++j) g.push_back(dz[c] * x[j]);
    for (std::size_t c = 0; c < spec.n_classes; ++c) g.push_back(dz[c]);
    return g;
  }
  std::vector<double> dpre(spec.hidden_dim, 0.0);
  for (std::size_t h = 0; h < spec.hidden_dim; ++h) {
    double back = 0.0;
    for (std::size_t c = 0; c < spec.n_classes; ++c) back += u.w2[c][h] * dz[c];
    dpre[h] = f.pre[h] > 0.0 ? back : 0.0;
  }
  for (std::size_t h = 0; h < spec.hidden_dim; ++h)
    for (std::size_t j = 0; j < spec.in_dim; ++j) g.push_back(dpre[h] * x[j]);
  for (std::size_t h = 0; h < spec.hidden_dim; ++h) g.push_back(dpre[h]);
  for (std::size_t c = 0; c < spec.n_classes; ++c)
    for (std::size_t h = 0; h < spec.hidden_dim; ++h) g.push_back(dz[c] * f.hidden[h]);
  for (std::size_t c = 0; c < spec.n_classes; ++c) g.push_back(dz[c]);
  return g;
}

std::vector<double> fisher_loop(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  std::vector<double> out(spec.param_count(), 0.0);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto g = sample_gradient(spec, params, batch.row(k), batch.labels[k]);
    for (std::size_t i = 0; i < g.size(); ++i) out[i] += g[i] * g[i];
  }
  for (double& v : out) v /= static_cast<double>(batch.size());
  return out;
}

std::vector<double> sensitivity_loop(const ModelSpec& spec, const ParamVector& params, const Batch& labeled) {
  const std::size_t d = spec.param_count();
  const double m = static_cast<double>(labeled.size());
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    double grad = 0.0;
    double fisher = 0.0;
    for (std::size_t k = 0; k < labeled.size(); ++k) {
      const double gi = sample_gradient(spec, params, labeled.row(k), labeled.labels[k])[i];
      grad += gi / m;
      fisher += gi * gi / m;
    }
    const double theta = params[i];
    out[i] = std::fabs(grad * theta - 0.5 * fisher * theta * theta);
  }
  return out;
}

bool clear_of_kinks(const ModelSpec& spec, const ParamVector& params, const Batch& batch, double margin) {
  if (spec.architecture != Architecture::Mlp) return true;
  const Unpacked u = unpack(spec, params);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    for (double pre : forward(spec, u, batch.row(k)).pre)
      if (std::fabs(pre) < margin) return false;
  }
  return true;
}

bool coordinate_near_kink(const ModelSpec& spec, const ParamVector& params, const Batch& batch, std::size_t i,
                          double margin) {
  if (spec.architecture != Architecture::Mlp) return false;
  const std::size_t w1_end = spec.hidden_dim * spec.in_dim;
  std::size_t unit = 0;
  if (i < w1_end) {
    unit = i / spec.in_dim;
  } else if (i < w1_end + spec.hidden_dim) {
    unit = i - w1_end;
  } else {
    return false;  // output layer: pre-activations do not depend on it
  }
  const Unpacked u = unpack(spec, params);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    if (std::fabs(forward(spec, u, batch.row(k)).pre[unit]) < margin) return true;
  }
  return false;
}

std::pair<double, double> evaluate_loop(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    if (sample_predict(spec, params, batch.row(k)) == batch.labels[k]) ++correct;
    loss += sample_loss(spec, params, batch.row(k), batch.labels[k]);
  }
  const double n = static_cast<double>(batch.size());
  return {static_cast<double>(correct) / n, loss / n};
}

}  // namespace fedpsa::oracle

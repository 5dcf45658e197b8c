#include "fedpsa/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "fedpsa/errors.hpp"

namespace fedpsa {

void Dataset::validate() const {
  if (n_classes == 0) throw ContractError("dataset: n_classes must be >= 1");
  if (size() < n_classes) {
    throw ContractError("dataset: " + std::to_string(size()) + " samples but " +
                        std::to_string(n_classes) + " classes");
  }
  require_same_dim(samples.labels.size(), size(), "dataset labels");
  for (int y : samples.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
      throw ContractError("dataset: label " + std::to_string(y) + " out of range");
    }
  }
}

namespace {

std::vector<unsigned char> read_maybe_gzip(const std::filesystem::path& path) {
  // gzread passes uncompressed files through unchanged.
  gzFile file = gzopen(path.string().c_str(), "rb");
  if (file == nullptr) throw ParseError(path.string() + ": cannot open");
  std::vector<unsigned char> bytes;
  std::vector<unsigned char> chunk(1 << 16);
  for (;;) {
    const int n = gzread(file, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      gzclose(file);
      throw ParseError(path.string() + ": gzip stream error at offset " + std::to_string(bytes.size()));
    }
    if (n == 0) break;
    bytes.insert(bytes.end(), chunk.begin(), chunk.begin() + n);
  }
  gzclose(file);
  return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw ParseError(path.string() + ": truncated header at offset " + std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto images = read_maybe_gzip(images_path);
  const auto labels = read_maybe_gzip(labels_path);

  if (read_be32(images, 0, images_path) != kImagesMagic) {
    throw ParseError(images_path.string() + ": bad magic at offset 0 (expected 0x00000803)");
  }
  if (read_be32(labels, 0, labels_path) != kLabelsMagic) {
    throw ParseError(labels_path.string() + ": bad magic at offset 0 (expected 0x00000801)");
  }
  const std::size_t n_images = read_be32(images, 4, images_path);
  const std::size_t rows = read_be32(images, 8, images_path);
  const std::size_t cols = read_be32(images, 12, images_path);
  const std::size_t n_labels = read_be32(labels, 4, labels_path);
  if (n_images != n_labels) {
    throw ParseError(labels_path.string() + ": count mismatch at offset 4 (" + std::to_string(n_labels) +
                     " labels for " + std::to_string(n_images) + " images)");
  }
  const std::size_t in_dim = rows * cols;
  constexpr std::size_t kImageHeader = 16;
  constexpr std::size_t kLabelHeader = 8;
  if (images.size() < kImageHeader + n_images * in_dim) {
    throw ParseError(images_path.string() + ": truncated pixel data at offset " +
                     std::to_string(images.size()));
  }
  if (labels.size() < kLabelHeader + n_labels) {
    throw ParseError(labels_path.string() + ": truncated label data at offset " +
                     std::to_string(labels.size()));
  }

  Dataset out;
  out.samples.in_dim = in_dim;
  out.samples.inputs.resize(n_images * in_dim);
  for (std::size_t i = 0; i < n_images * in_dim; ++i) {
    out.samples.inputs[i] = static_cast<double>(images[kImageHeader + i]) / 255.0;
  }
  out.samples.labels.resize(n_labels);
  int max_label = 0;
  for (std::size_t i = 0; i < n_labels; ++i) {
    out.samples.labels[i] = labels[kLabelHeader + i];
    max_label = std::max(max_label, out.samples.labels[i]);
  }
  out.n_classes = static_cast<std::size_t>(max_label) + 1;
  return out;
}

Dataset make_synthetic(std::size_t n_classes, std::size_t in_dim, std::size_t per_class,
                       std::uint64_t seed) {
  if (n_classes == 0 || in_dim == 0 || per_class == 0) {
    throw ContractError("make_synthetic: all counts must be >= 1");
  }
  constexpr double kSeparation = 3.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> means(n_classes * in_dim, 0.0);
  if (n_classes <= in_dim) {
    for (std::size_t c = 0; c < n_classes; ++c) means[c * in_dim + c] = kSeparation;
  } else {
    for (std::size_t c = 0; c < n_classes; ++c) {
      double norm = 0.0;
      for (std::size_t f = 0; f < in_dim; ++f) {
        means[c * in_dim + f] = normal(rng);
        norm += means[c * in_dim + f] * means[c * in_dim + f];
      }
      norm = std::sqrt(norm);
      for (std::size_t f = 0; f < in_dim; ++f) means[c * in_dim + f] *= kSeparation / norm;
    }
  }

  Dataset out;
  out.n_classes = n_classes;
  out.samples.in_dim = in_dim;
  out.samples.inputs.reserve(n_classes * per_class * in_dim);
  out.samples.labels.reserve(n_classes * per_class);
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t s = 0; s < per_class; ++s) {
      for (std::size_t f = 0; f < in_dim; ++f) out.samples.inputs.push_back(means[c * in_dim + f] + normal(rng));
      out.samples.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

TrainTestSplit split_train_test(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ContractError("split_train_test: test_fraction must be in (0, 1)");
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(order.size())));
  if (n_test == 0 || n_test >= order.size()) throw ContractError("split_train_test: degenerate split");
  const std::size_t n_train = order.size() - n_test;
  TrainTestSplit out;
  out.train.n_classes = dataset.n_classes;
  out.test.n_classes = dataset.n_classes;
  out.train.samples = dataset.samples.gather(std::span(order).first(n_train));
  out.test.samples = dataset.samples.gather(std::span(order).subspan(n_train));
  return out;
}

PartitionPlan dirichlet_partition(const Dataset& dataset, std::size_t n_clients, double alpha,
                                  std::uint64_t seed) {
  if (n_clients == 0) throw ConfigError("dirichlet_partition: n_clients must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("dirichlet_partition: alpha must be > 0");
  if (dataset.size() < n_clients) {
    throw ConfigError("dirichlet_partition: " + std::to_string(dataset.size()) +
                      " samples cannot cover " + std::to_string(n_clients) + " clients");
  }

  std::vector<std::vector<std::size_t>> by_class(dataset.n_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.samples.labels[i])].push_back(i);
  }

  PartitionPlan plan;
  plan.alpha = alpha;
  plan.seed = seed;
  plan.client_indices.resize(n_clients);

  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> props(n_clients);
  std::vector<std::size_t> counts(n_clients);
  std::vector<std::pair<double, std::size_t>> remainders(n_clients);

  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    double total = 0.0;
    for (double& p : props) {
      p = gamma(rng);
      total += p;
    }
    if (!(total > 0.0)) {
      // Every gamma draw underflowed; give the class to a single client.
      std::fill(props.begin(), props.end(), 0.0);
      props[std::uniform_int_distribution<std::size_t>(0, n_clients - 1)(rng)] = 1.0;
      total = 1.0;
    }
    const double n = static_cast<double>(members.size());
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < n_clients; ++c) {
      const double exact = props[c] / total * n;
      counts[c] = static_cast<std::size_t>(std::floor(exact));
      remainders[c] = {exact - static_cast<double>(counts[c]), c};
      assigned += counts[c];
    }
    // Largest remainder; ties go to the lower client id.
    std::sort(remainders.begin(), remainders.end(),
              [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    for (std::size_t r = 0; assigned < members.size(); ++r, ++assigned) ++counts[remainders[r].second];

    std::size_t cursor = 0;
    for (std::size_t c = 0; c < n_clients; ++c) {
      auto& dest = plan.client_indices[c];
      dest.insert(dest.end(), members.begin() + static_cast<std::ptrdiff_t>(cursor),
                  members.begin() + static_cast<std::ptrdiff_t>(cursor + counts[c]));
      cursor += counts[c];
    }
  }

  for (auto& client : plan.client_indices) {
    if (!client.empty()) continue;
    auto largest = std::max_element(plan.client_indices.begin(), plan.client_indices.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    client.push_back(largest->back());
    largest->pop_back();
  }
  for (auto& client : plan.client_indices) std::sort(client.begin(), client.end());
  return plan;
}

std::vector<std::vector<std::size_t>> label_histograms(const Dataset& dataset, const PartitionPlan& plan) {
  std::vector<std::vector<std::size_t>> out(plan.n_clients(), std::vector<std::size_t>(dataset.n_classes, 0));
  for (std::size_t c = 0; c < plan.n_clients(); ++c) {
    for (std::size_t i : plan.client_indices[c]) ++out[c][static_cast<std::size_t>(dataset.samples.labels[i])];
  }
  return out;
}

double mean_pairwise_tv(const std::vector<std::vector<std::size_t>>& histograms) {
  const std::size_t n = histograms.size();
  if (n < 2) return 0.0;
  std::vector<std::vector<double>> normalized;
  normalized.reserve(n);
  for (const auto& h : histograms) {
    const double total = static_cast<double>(std::accumulate(h.begin(), h.end(), std::size_t{0}));
    std::vector<double> p(h.size());
    for (std::size_t k = 0; k < h.size(); ++k) p[k] = total > 0 ? static_cast<double>(h[k]) / total : 0.0;
    normalized.push_back(std::move(p));
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      double tv = 0.0;
      for (std::size_t k = 0; k < normalized[a].size(); ++k) tv += std::abs(normalized[a][k] - normalized[b][k]);
      sum += 0.5 * tv;
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

CalibrationBatch make_calibration_batch(CalibrationSource source, std::size_t in_dim, std::size_t size,
                                        std::uint64_t seed, const Dataset* dataset) {
  if (size == 0 || in_dim == 0) throw ConfigError("calibration batch: size and in_dim must be >= 1");
  CalibrationBatch out;
  out.source = source;
  out.seed = seed;
  std::mt19937_64 rng(seed);
  if (source == CalibrationSource::GaussianNoise) {
    std::normal_distribution<double> normal(0.0, 1.0);
    out.batch.in_dim = in_dim;
    out.batch.inputs.resize(size * in_dim);
    for (double& v : out.batch.inputs) v = normal(rng);
    return out;
  }
  if (dataset == nullptr) throw ConfigError("calibration batch: RealSample requires a dataset");
  require_same_dim(dataset->in_dim(), in_dim, "calibration batch feature width");
  std::vector<std::size_t> rows;
  if (size <= dataset->size()) {
    std::vector<std::size_t> order(dataset->size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, dataset->size() - 1);
    for (std::size_t i = 0; i < size; ++i) rows.push_back(pick(rng));
  }
  out.batch = dataset->samples.gather(rows);
  return out;
}

void to_json(nlohmann::json& j, const Dataset& d) {
  j = nlohmann::json{{"n_classes", d.n_classes},
                     {"in_dim", d.samples.in_dim},
                     {"inputs", d.samples.inputs},
                     {"labels", d.samples.labels}};
}

void from_json(const nlohmann::json& j, Dataset& d) {
  d.n_classes = j.at("n_classes").get<std::size_t>();
  d.samples.in_dim = j.at("in_dim").get<std::size_t>();
  d.samples.inputs = j.at("inputs").get<std::vector<double>>();
  d.samples.labels = j.at("labels").get<std::vector<int>>();
  d.validate();
}

void to_json(nlohmann::json& j, const PartitionPlan& p) {
  j = nlohmann::json{{"alpha", p.alpha}, {"seed", p.seed}, {"client_indices", p.client_indices}};
}

void from_json(const nlohmann::json& j, PartitionPlan& p) {
  p.alpha = j.at("alpha").get<double>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.client_indices = j.at("client_indices").get<std::vector<std::vector<std::size_t>>>();
}

}  // namespace fedpsa

#include "fedpsa/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <memory>

#include "fedpsa/config.hpp"
#include "fedpsa/errors.hpp"
#include "fedpsa/metrics.hpp"
#include "fedpsa/seeds.hpp"
#include "fedpsa/sensitivity.hpp"

namespace fedpsa {

void VirtualClock::advance_to(std::int64_t t) {
  if (t < now_) {
    throw ContractError("virtual clock cannot move from " + std::to_string(now_) + " back to " + std::to_string(t));
  }
  now_ = t;
}

std::string_view to_string(LatencyKind kind) noexcept {
  return kind == LatencyKind::Uniform ? "uniform" : "longtail";
}

LatencyKind parse_latency_kind(std::string_view name) {
  if (name == "uniform") return LatencyKind::Uniform;
  if (name == "longtail") return LatencyKind::LongTail;
  throw ConfigError("unknown latency kind '" + std::string(name) + "' (expected uniform or longtail)");
}

void LatencyModel::validate() const {
  if (lo < 1 || hi < lo) throw ConfigError("latency: need 1 <= lo <= hi");
  if (kind == LatencyKind::LongTail && !(tail_alpha > 0.0 && tail_scale > 0.0 && tail_scale <= 1.0)) {
    throw ConfigError("latency: long tail needs tail_alpha > 0 and tail_scale in (0, 1]");
  }
}

std::int64_t LatencyModel::sample(std::mt19937_64& rng) const {
  if (kind == LatencyKind::Uniform) return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  // 1 - U lies in (0, 1].
  const double u = 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double x = std::min(1.0, tail_scale * std::pow(u, -1.0 / tail_alpha));
  const auto value = lo + static_cast<std::int64_t>(std::floor(static_cast<double>(hi - lo) * x));
  return std::clamp(value, lo, hi);
}

void EventQueue::push(std::int64_t time, EventKind kind, std::uint64_t client_id) {
  heap_.push(SimEvent{time, next_sequence_++, kind, client_id});
}

SimEvent EventQueue::pop() {
  SimEvent e = heap_.top();
  heap_.pop();
  return e;
}

std::size_t concurrency_cap(double rate, std::size_t n_clients) {
  const double exact = rate * static_cast<double>(n_clients);
  auto cap = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::clamp<std::size_t>(cap, 1, n_clients);
}

ClientPool::ClientPool(std::vector<std::vector<std::size_t>> partition, double concurrency_rate,
                       std::uint64_t latency_master_seed)
    : cap_(concurrency_cap(concurrency_rate, partition.size())) {
  clients_.reserve(partition.size());
  for (std::size_t i = 0; i < partition.size(); ++i) {
    ClientSlot slot;
    slot.id = i;
    slot.data_indices = std::move(partition[i]);
    slot.latency_rng.seed(derive_seed(latency_master_seed, SeedStream::Latency, i));
    clients_.push_back(std::move(slot));
  }
}

std::vector<std::uint64_t> ClientPool::idle_ids() const {
  std::vector<std::uint64_t> out;
  for (const auto& c : clients_) {
    if (c.status == ClientStatus::Idle) out.push_back(c.id);
  }
  return out;
}

void ClientPool::mark_training(std::uint64_t id, std::int64_t finish_time, std::uint64_t origin_version) {
  auto& c = clients_.at(id);
  if (c.status == ClientStatus::Training) throw ContractError("client " + std::to_string(id) + " already training");
  if (in_flight_ >= cap_) throw ContractError("concurrency cap exceeded");
  c.status = ClientStatus::Training;
  c.finish_time = finish_time;
  c.origin_version = origin_version;
  ++in_flight_;
}

void ClientPool::mark_idle(std::uint64_t id) {
  auto& c = clients_.at(id);
  if (c.status != ClientStatus::Training) throw ContractError("client " + std::to_string(id) + " is not training");
  c.status = ClientStatus::Idle;
  --in_flight_;
}

std::vector<StartedTraining> admit_clients(ClientPool& pool, const LatencyModel& latency, std::int64_t now,
                                           std::uint64_t current_version, std::mt19937_64& rng) {
  std::vector<StartedTraining> started;
  auto idle = pool.idle_ids();
  while (pool.in_flight() < pool.cap() && !idle.empty()) {
    const auto pick = std::uniform_int_distribution<std::size_t>(0, idle.size() - 1)(rng);
    const std::uint64_t id = idle[pick];
    idle.erase(idle.begin() + static_cast<std::ptrdiff_t>(pick));
    const std::int64_t finish = now + latency.sample(pool.client(id).latency_rng);
    pool.mark_training(id, finish, current_version);
    started.push_back({id, finish});
  }
  return started;
}

std::int64_t round_duration(std::span<const std::int64_t> latencies) {
  if (latencies.empty()) throw ContractError("round_duration: no clients");
  return *std::max_element(latencies.begin(), latencies.end());
}

std::int64_t RunConfig::horizon_units() const {
  return static_cast<std::int64_t>(std::llround(horizon_days * static_cast<double>(kUnitsPerDay)));
}

ModelSpec RunConfig::model_spec(std::size_t in_dim, std::size_t n_classes) const {
  if (model.architecture == Architecture::Linear) return ModelSpec::linear(in_dim, n_classes);
  return ModelSpec::mlp(in_dim, model.hidden_dim, n_classes);
}

namespace {

std::filesystem::path find_idx_file(const std::filesystem::path& root, const std::string& stem) {
  for (const char* suffix : {"", ".gz"}) {
    auto candidate = root / (stem + suffix);
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return {};
}

}  // namespace

Dataset load_dataset(const DatasetConfig& config) {
  if (config.kind == "synthetic") {
    return make_synthetic(config.n_classes, config.in_dim, config.per_class, config.seed);
  }
  if (config.kind != "idx") throw ConfigError("unknown dataset kind '" + config.kind + "'");

  std::filesystem::path root = config.root;
  if (root.empty()) {
    const char* env = std::getenv("FEDPSA_DATA_ROOT");
    if (env == nullptr) {
      throw ConfigError("dataset '" + config.name +
                        "': set dataset.root or FEDPSA_DATA_ROOT to the directory holding the IDX files");
    }
    root = env;
  }
  root /= config.name;
  const auto train_images = find_idx_file(root, "train-images-idx3-ubyte");
  const auto train_labels = find_idx_file(root, "train-labels-idx1-ubyte");
  if (train_images.empty() || train_labels.empty()) {
    throw ConfigError("dataset '" + config.name + "': expected " + (root / "train-images-idx3-ubyte[.gz]").string() +
                      " and " + (root / "train-labels-idx1-ubyte[.gz]").string());
  }
  Dataset full = load_idx(train_images, train_labels);
  // The official test files, when present, join the pool before our own split.
  const auto test_images = find_idx_file(root, "t10k-images-idx3-ubyte");
  const auto test_labels = find_idx_file(root, "t10k-labels-idx1-ubyte");
  if (!test_images.empty() && !test_labels.empty()) {
    Dataset extra = load_idx(test_images, test_labels);
    full.samples = concat(full.samples, extra.samples);
    full.n_classes = std::max(full.n_classes, extra.n_classes);
  }
  full.validate();
  return full;
}

PreparedData prepare_data(const RunConfig& config, const Dataset& full) {
  PreparedData out;
  auto split = split_train_test(full, config.dataset.test_fraction, derive_seed(config.seed, SeedStream::TestSplit));
  out.train = std::move(split.train);
  out.test = std::move(split.test);
  out.spec = config.model_spec(full.in_dim(), full.n_classes);
  out.partition = dirichlet_partition(out.train, config.n_clients, config.alpha,
                                      derive_seed(config.seed, SeedStream::Partition));
  return out;
}

namespace {

// Shared per-run machinery for both drivers.
class RunContext {
 public:
  RunContext(const RunConfig& config, const PreparedData& data)
      : config_(config), data_(data), spec_(data.spec) {
    const std::size_t d = spec_.param_count();
    if (is_fedpsa_family(config.strategy.kind)) {
      if (config.sketch_dim > d) throw ConfigError("sketch dimension k exceeds parameter count d");
      projection_ = std::make_shared<const ProjectionMatrix>(
          ProjectionMatrix::gaussian(derive_seed(config.seed, SeedStream::Projection), config.sketch_dim, d));
      calibration_ = std::make_shared<const CalibrationBatch>(
          make_calibration_batch(config.calibration_source, data.train.in_dim(), config.calibration_size,
                                 derive_seed(config.seed, SeedStream::Calibration), &data.train));
    }
    if (config.probe) {
      std::vector<std::size_t> rows(data.test.size());
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
      std::mt19937_64 rng(derive_seed(config.seed, SeedStream::Probe));
      std::shuffle(rows.begin(), rows.end(), rng);
      rows.resize(std::min(rows.size(), config.probe_batch));
      probe_batch_ = data.test.samples.gather(rows);
    }
  }

  const ModelSpec& spec() const { return spec_; }

  // Sketch used for behavioral similarity: sensitivity sketch, or raw-parameter
  // sketch for the w/o-S ablation. Empty for strategies that do not use one.
  SensitivitySketch client_sketch(const ParamVector& params) const {
    if (!projection_) return {};
    if (config_.strategy.kind == StrategyKind::FedPsaNoS) return projection_->project(params.values());
    return sketch(sensitivity_second_order(spec_, params, calibration_->batch), *projection_);
  }

  GlobalSketcher global_sketcher() const {
    if (!projection_) return {};
    return [this](const ParamVector& params) { return client_sketch(params); };
  }

  double lr_at(std::uint64_t rounds) const {
    return config_.lr * std::pow(config_.lr_decay, static_cast<double>(rounds));
  }

  struct TrainingResult {
    ParamVector trained;
    UpdateEnvelope envelope;
  };

  TrainingResult train_client(ClientSlot& client, const ParamVector& start, std::uint64_t origin_version,
                              std::int64_t finish_time) const {
    const SgdOptions options{config_.epochs, config_.batch_size, lr_at(origin_version)};
    const std::uint64_t shuffle_seed =
        derive_seed(config_.seed, SeedStream::Shuffle, (client.id << 32) + client.uploads);
    ++client.uploads;
    try {
      ParamVector trained =
          local_update(spec_, start, data_.train.samples, client.data_indices, options, shuffle_seed);
      ParamVector delta = trained - start;
      auto env = make_envelope(client.id, std::move(delta), client_sketch(trained), origin_version, finish_time,
                               client.data_indices.size());
      return {std::move(trained), std::move(env)};
    } catch (const NumericError& e) {
      throw NumericError("local training of client " + std::to_string(client.id) + ": " + e.what());
    }
  }

  CurvePoint evaluate_at(const ParamVector& params, std::int64_t time, std::uint64_t version) const {
    const auto e = evaluate(spec_, params, data_.test);
    return CurvePoint{time, version, e.accuracy, e.loss};
  }

  std::optional<AlignmentSample> probe(const ParamVector& server, const ParamVector& client, double kappa,
                                       std::int64_t time) const {
    if (!config_.probe) return std::nullopt;
    return alignment_probe(spec_, server, client, kappa, probe_batch_, time);
  }

 private:
  const RunConfig& config_;
  const PreparedData& data_;
  ModelSpec spec_;
  std::shared_ptr<const ProjectionMatrix> projection_;
  std::shared_ptr<const CalibrationBatch> calibration_;
  Batch probe_batch_;
};

void record_tau(SimStats& stats, std::uint64_t tau) {
  if (stats.staleness_histogram.size() <= tau) stats.staleness_histogram.resize(tau + 1, 0);
  ++stats.staleness_histogram[tau];
}

}  // namespace

RunRecord run_simulation(const RunConfig& config) { return run_simulation(config, load_dataset(config.dataset)); }

RunRecord run_simulation(const RunConfig& config, const Dataset& full, const TraceSink& trace) {
  validate_or_throw(config);
  const PreparedData data = prepare_data(config, full);
  if (config.strategy.kind == StrategyKind::FedAvg) return synchronous_round_driver(config, data, trace);

  RunContext ctx(config, data);
  const std::int64_t horizon = config.horizon_units();
  RunRecord record;
  record.config_hash = config_hash(config);

  Server server(config.strategy, init_params(ctx.spec(), derive_seed(config.seed, SeedStream::Init)),
                ctx.global_sketcher());
  ClientPool pool(data.partition.client_indices, config.concurrency_rate, config.seed);
  record.stats.concurrency_cap = pool.cap();
  std::mt19937_64 admission_rng(derive_seed(config.seed, SeedStream::Admission));

  struct InFlight {
    ParamVector trained;
    UpdateEnvelope envelope;
  };
  std::vector<std::optional<InFlight>> in_flight(pool.size());

  EventQueue queue;
  for (std::int64_t t = 0; t <= horizon; t += config.eval_interval) queue.push(t, EventKind::EvalCheckpoint);
  queue.push(0, EventKind::AdmitClients);

  VirtualClock clock;
  while (!queue.empty() && queue.top().time <= horizon) {
    const SimEvent event = queue.pop();
    clock.advance_to(event.time);
    TraceEntry entry{event.time, event.kind, event.client_id, server.version(), 0};

    try {
      switch (event.kind) {
        case EventKind::EvalCheckpoint:
          record.curve.push_back(ctx.evaluate_at(server.global_params(), event.time, server.version()));
          break;

        case EventKind::AdmitClients: {
          for (const auto& s : admit_clients(pool, config.latency, event.time, server.version(), admission_rng)) {
            auto result = ctx.train_client(pool.client(s.client_id), server.global_params(), server.version(),
                                           s.finish_time);
            in_flight[s.client_id] = InFlight{std::move(result.trained), std::move(result.envelope)};
            queue.push(s.finish_time, EventKind::ClientFinish, s.client_id);
          }
          break;
        }

        case EventKind::ClientFinish: {
          auto& slot = pool.client(event.client_id);
          if (slot.finish_time != event.time) throw ContractError("client finish processed at the wrong time");
          InFlight done = std::move(*in_flight[event.client_id]);
          in_flight[event.client_id].reset();
          pool.mark_idle(event.client_id);

          const std::uint64_t origin = done.envelope.origin_version;
          if (server.version() < origin) throw ContractError("causality: server version behind client origin");
          entry.origin_version = origin;
          record_tau(record.stats, server.version() - origin);
          ++record.stats.uploads;

          const ParamVector before = config.probe ? server.global_params() : ParamVector{};
          auto events = server.receive_update(done.envelope, event.time);
          if (config.probe) {
            if (auto sample = ctx.probe(before, done.trained, server.last_kappa(), event.time)) {
              record.probe.push_back(*sample);
            }
          }
          for (auto& e : events) record.events.push_back(std::move(e));
          queue.push(event.time, EventKind::AdmitClients);
          break;
        }
      }
    } catch (const NumericError& e) {
      std::string where = "at virtual time " + std::to_string(event.time);
      if (event.kind == EventKind::ClientFinish) where += ", upload from client " + std::to_string(event.client_id);
      throw NumericError(where + ": " + e.what());
    }
    record.stats.max_in_flight = std::max(record.stats.max_in_flight, pool.in_flight());
    if (pool.in_flight() > pool.cap()) throw ContractError("concurrency cap exceeded");
    if (trace) trace(entry);
  }

  record.final_params = server.global_params();
  return record;
}

RunRecord synchronous_round_driver(const RunConfig& config, const PreparedData& data, const TraceSink& trace) {
  if (config.strategy.kind != StrategyKind::FedAvg) throw ContractError("synchronous driver runs FedAvg only");
  RunContext ctx(config, data);
  const std::int64_t horizon = config.horizon_units();
  RunRecord record;
  record.config_hash = config_hash(config);

  Server server(config.strategy, init_params(ctx.spec(), derive_seed(config.seed, SeedStream::Init)));
  ClientPool pool(data.partition.client_indices, config.concurrency_rate, config.seed);
  record.stats.concurrency_cap = pool.cap();
  std::mt19937_64 admission_rng(derive_seed(config.seed, SeedStream::Admission));

  std::int64_t next_eval = 0;
  auto flush_evals = [&](std::int64_t up_to) {
    for (; next_eval <= std::min(up_to, horizon); next_eval += config.eval_interval) {
      record.curve.push_back(ctx.evaluate_at(server.global_params(), next_eval, server.version()));
      if (trace) trace(TraceEntry{next_eval, EventKind::EvalCheckpoint, 0, server.version(), 0});
    }
  };

  VirtualClock clock;
  for (;;) {
    const std::int64_t start = clock.now();
    const auto started = admit_clients(pool, config.latency, start, server.version(), admission_rng);
    record.stats.max_in_flight = std::max(record.stats.max_in_flight, pool.in_flight());
    std::vector<std::int64_t> latencies;
    for (const auto& s : started) latencies.push_back(s.finish_time - start);
    const std::int64_t end = start + round_duration(latencies);
    if (end > horizon) {
      flush_evals(horizon);
      break;
    }
    // Checkpoints up to and including the round end see the pre-round model.
    flush_evals(end);
    clock.advance_to(end);

    std::vector<UpdateEnvelope> cohort;
    for (const auto& s : started) {
      auto result = ctx.train_client(pool.client(s.client_id), server.global_params(), server.version(), end);
      cohort.push_back(std::move(result.envelope));
      pool.mark_idle(s.client_id);
      record_tau(record.stats, 0);
      ++record.stats.uploads;
      if (trace) trace(TraceEntry{end, EventKind::ClientFinish, s.client_id, server.version(), server.version()});
    }
    record.events.push_back(server.run_fedavg_round(cohort, end));
  }
  record.final_params = server.global_params();
  return record;
}

}  // namespace fedpsa

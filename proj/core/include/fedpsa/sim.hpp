#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedpsa/data.hpp"
#include "fedpsa/model.hpp"
#include "fedpsa/strategy.hpp"

namespace fedpsa {

inline constexpr std::int64_t kUnitsPerDay = 86'400;

/// Virtual time in atomic units; only moves forward.
class VirtualClock {
 public:
  std::int64_t now() const noexcept { return now_; }
  /// Throws ContractError when asked to move backwards.
  void advance_to(std::int64_t t);

 private:
  std::int64_t now_ = 0;
};

enum class LatencyKind { Uniform, LongTail };

/// Client response-time law. LongTail draws lo + floor((hi - lo) * X) with
/// X = min(1, tail_scale * U^(-1/tail_alpha)), U ~ Uniform(0, 1], i.e. a Pareto
/// tail whose mass sits near lo.
struct LatencyModel {
  LatencyKind kind = LatencyKind::Uniform;
  std::int64_t lo = 10;
  std::int64_t hi = 500;
  double tail_alpha = 1.5;
  double tail_scale = 0.02;

  void validate() const;
  std::int64_t sample(std::mt19937_64& rng) const;

  friend bool operator==(const LatencyModel&, const LatencyModel&) = default;
};

std::string_view to_string(LatencyKind kind) noexcept;
LatencyKind parse_latency_kind(std::string_view name);

enum class EventKind { ClientFinish, AdmitClients, EvalCheckpoint };

struct SimEvent {
  std::int64_t time = 0;
  std::uint64_t sequence = 0;
  EventKind kind = EventKind::EvalCheckpoint;
  std::uint64_t client_id = 0;
};

/// Min-heap on (time, sequence); sequence numbers are assigned on insertion.
class EventQueue {
 public:
  void push(std::int64_t time, EventKind kind, std::uint64_t client_id = 0);
  SimEvent pop();
  const SimEvent& top() const { return heap_.top(); }
  bool empty() const noexcept { return heap_.empty(); }
  std::size_t size() const noexcept { return heap_.size(); }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const noexcept {
      return a.time != b.time ? a.time > b.time : a.sequence > b.sequence;
    }
  };
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
  std::uint64_t next_sequence_ = 0;
};

enum class ClientStatus { Idle, Training };

struct ClientSlot {
  std::uint64_t id = 0;
  std::vector<std::size_t> data_indices;
  std::mt19937_64 latency_rng;
  ClientStatus status = ClientStatus::Idle;
  std::int64_t finish_time = 0;
  std::uint64_t origin_version = 0;
  std::uint64_t uploads = 0;
};

/// Clients plus the concurrency cap ceil(rate * n).
class ClientPool {
 public:
  ClientPool(std::vector<std::vector<std::size_t>> partition, double concurrency_rate,
             std::uint64_t latency_master_seed);

  std::size_t size() const noexcept { return clients_.size(); }
  std::size_t cap() const noexcept { return cap_; }
  std::size_t in_flight() const noexcept { return in_flight_; }
  ClientSlot& client(std::uint64_t id) { return clients_.at(id); }
  const ClientSlot& client(std::uint64_t id) const { return clients_.at(id); }
  std::vector<std::uint64_t> idle_ids() const;

  void mark_training(std::uint64_t id, std::int64_t finish_time, std::uint64_t origin_version);
  void mark_idle(std::uint64_t id);

 private:
  std::vector<ClientSlot> clients_;
  std::size_t cap_;
  std::size_t in_flight_ = 0;
};

/// ceil(rate * n) computed without floating-point overshoot.
std::size_t concurrency_cap(double rate, std::size_t n_clients);

struct StartedTraining {
  std::uint64_t client_id = 0;
  std::int64_t finish_time = 0;
};

/// Starts idle clients, chosen uniformly at random, until the cap is reached.
std::vector<StartedTraining> admit_clients(ClientPool& pool, const LatencyModel& latency, std::int64_t now,
                                           std::uint64_t current_version, std::mt19937_64& rng);

/// Synchronous round cost: the slowest selected client.
std::int64_t round_duration(std::span<const std::int64_t> latencies);

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | idx
  std::string name = "synthetic";  // idx: mnist | fmnist
  std::size_t n_classes = 10;
  std::size_t in_dim = 10;
  std::size_t per_class = 300;
  std::uint64_t seed = 1;
  double test_fraction = 0.1;
  std::string root;  // idx: directory holding <name>/; empty means $FEDPSA_DATA_ROOT

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct ModelConfig {
  Architecture architecture = Architecture::Linear;
  std::size_t hidden_dim = 32;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Everything a single run depends on. Defaults reproduce the reference hyperparameters.
struct RunConfig {
  StrategyParams strategy;
  ModelConfig model;
  DatasetConfig dataset;
  double alpha = 0.5;
  std::size_t n_clients = 50;
  double concurrency_rate = 0.2;
  LatencyModel latency;
  double horizon_days = 10.0;
  std::int64_t eval_interval = 8'640;
  std::size_t sketch_dim = 16;
  double lr = 0.01;
  double lr_decay = 0.999;
  int epochs = 5;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  CalibrationSource calibration_source = CalibrationSource::GaussianNoise;
  std::size_t calibration_size = kDefaultCalibrationSize;
  bool probe = false;
  std::size_t probe_batch = 256;

  std::int64_t horizon_units() const;
  ModelSpec model_spec(std::size_t in_dim, std::size_t n_classes) const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct CurvePoint {
  std::int64_t virtual_time = 0;
  std::uint64_t version = 0;
  double accuracy = 0.0;
  double loss = 0.0;
};

struct AlignmentSample {
  double kappa = 0.0;
  double align = 0.0;
  std::int64_t virtual_time = 0;
};

struct TraceEntry {
  std::int64_t time = 0;
  EventKind kind = EventKind::EvalCheckpoint;
  std::uint64_t client_id = 0;
  std::uint64_t version = 0;
  std::uint64_t origin_version = 0;
};

/// Instrumentation gathered while the event loop runs.
struct SimStats {
  std::uint64_t uploads = 0;
  std::size_t concurrency_cap = 0;
  std::size_t max_in_flight = 0;
  std::vector<std::uint64_t> staleness_histogram;  // index = tau
};

struct RunRecord {
  std::vector<CurvePoint> curve;
  std::vector<AggregationEvent> events;
  std::vector<AlignmentSample> probe;
  ParamVector final_params;
  std::string config_hash;
  SimStats stats;
};

/// Optional observer for every processed event.
using TraceSink = std::function<void(const TraceEntry&)>;

/// Dataset after the train/test split and the client partition.
struct PreparedData {
  ModelSpec spec;
  Dataset train;
  Dataset test;
  PartitionPlan partition;
};

/// Loads (or synthesizes) the configured dataset, without splitting.
Dataset load_dataset(const DatasetConfig& config);

PreparedData prepare_data(const RunConfig& config, const Dataset& full);

/// Runs the configured strategy until the virtual-time horizon. FedAvg is routed to
/// the synchronous round driver; every other strategy runs on the event loop.
RunRecord run_simulation(const RunConfig& config);
RunRecord run_simulation(const RunConfig& config, const Dataset& full, const TraceSink& trace = {});

/// Synchronous FedAvg: per round sample ceil(rate * n) clients, advance the clock by
/// the largest of their latencies, then average.
RunRecord synchronous_round_driver(const RunConfig& config, const PreparedData& data,
                                   const TraceSink& trace = {});

}  // namespace fedpsa

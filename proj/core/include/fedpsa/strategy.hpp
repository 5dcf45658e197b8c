#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpsa/param_vector.hpp"
#include "fedpsa/sensitivity.hpp"

namespace fedpsa {

enum class StrategyKind { FedAvg, FedAsync, FedBuff, FedPsa, FedPsaNoT, FedPsaNoS };

std::string_view to_string(StrategyKind kind) noexcept;
/// Accepts "fedavg", "fedasync", "fedbuff", "fedpsa", "fedpsa_not", "fedpsa_nos".
StrategyKind parse_strategy(std::string_view name);

bool is_fedpsa_family(StrategyKind kind) noexcept;
bool is_async(StrategyKind kind) noexcept;

struct StrategyParams {
  StrategyKind kind = StrategyKind::FedPsa;
  std::size_t buffer_size = 5;   // aggregation fires when this many updates are buffered
  std::size_t queue_size = 50;   // thermometer window
  double gamma = 5.0;
  double delta = 0.5;
  double fedasync_a0 = 0.6;
  /// When false the thermometer never fills and FedPSA stays in uniform weighting.
  bool thermometer_enabled = true;
  /// FedAvg only: weight clients by local data size instead of equally.
  bool weight_by_data_size = false;

  friend bool operator==(const StrategyParams&, const StrategyParams&) = default;
};

/// One client upload.
struct UpdateEnvelope {
  std::uint64_t client_id = 0;
  ParamVector delta;
  SensitivitySketch sketch;
  std::uint64_t origin_version = 0;
  std::int64_t upload_time = 0;
  double magnitude = 0.0;  // ||delta||^2
  std::size_t data_size = 0;

  friend bool operator==(const UpdateEnvelope&, const UpdateEnvelope&) = default;
};

/// Builds an envelope with magnitude = ||delta||^2.
UpdateEnvelope make_envelope(std::uint64_t client_id, ParamVector delta, SensitivitySketch sketch,
                             std::uint64_t origin_version, std::int64_t upload_time,
                             std::size_t data_size = 0);

inline constexpr std::uint8_t kEnvelopeFormatVersion = 1;

/// Binary wire form: [u8 version][u64 client][u64 origin][i64 time][f64 magnitude]
/// [u64 data_size][u32 d][d x f64][sketch bytes]. All little-endian.
std::vector<std::uint8_t> encode_envelope(const UpdateEnvelope& env);
UpdateEnvelope decode_envelope(std::span<const std::uint8_t> bytes);

/// Fixed-size FIFO of recent update magnitudes.
///
/// M0 is latched the first time the queue reaches capacity and is never changed
/// afterwards; the temperature is available from that moment on.
class ThermometerQueue {
 public:
  ThermometerQueue(std::size_t capacity, double gamma, double delta);

  void push(double magnitude);

  bool ready() const noexcept { return m0_.has_value(); }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::optional<double> m0() const noexcept { return m0_; }
  bool m0_clamped() const noexcept { return m0_clamped_; }
  double current_mean() const noexcept;

  /// (M_cur / M0) * gamma + delta, or nullopt before the first fill.
  std::optional<double> temperature() const noexcept;

 private:
  std::size_t capacity_;
  double gamma_;
  double delta_;
  std::deque<double> entries_;
  std::optional<double> m0_;
  bool m0_clamped_ = false;
};

/// exp(k_i / temp) / sum_j exp(k_j / temp), evaluated with max subtraction.
std::vector<double> softmax_weights(std::span<const double> kappas, double temperature);

/// a0 / sqrt(tau + 1)
double fedasync_weight(double a0, std::uint64_t tau) noexcept;

struct AggregationEvent {
  std::uint64_t version = 0;
  std::int64_t virtual_time = 0;
  std::string strategy;
  std::optional<double> temperature;
  std::vector<double> kappas;
  std::vector<double> weights;
  std::vector<std::uint64_t> client_ids;
  std::vector<std::uint64_t> staleness_taus;
  std::size_t buffer_after = 0;
  bool m0_clamped = false;
  /// Thermometer state behind `temperature`; unset before the first fill.
  std::optional<double> m_cur;
  std::optional<double> m0;

  friend bool operator==(const AggregationEvent&, const AggregationEvent&) = default;
};

/// JSON-lines form with keys in schema order.
nlohmann::ordered_json event_json(const AggregationEvent& e);
void to_json(nlohmann::json& j, const AggregationEvent& e);
void from_json(const nlohmann::json& j, AggregationEvent& e);

struct BufferSlot {
  UpdateEnvelope envelope;
  double kappa = 0.0;
  std::uint64_t tau = 0;
};

class AggregationBuffer {
 public:
  explicit AggregationBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(BufferSlot slot);
  bool full() const noexcept { return slots_.size() >= capacity_; }
  void clear() noexcept { slots_.clear(); }
  std::size_t size() const noexcept { return slots_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const std::vector<BufferSlot>& slots() const noexcept { return slots_; }

 private:
  std::size_t capacity_;
  std::vector<BufferSlot> slots_;
};

/// w += sum_i weights[i] * deltas[i], accumulated in slot order.
void apply_weighted_deltas(ParamVector& global, std::span<const double> weights,
                           std::span<const BufferSlot> slots);

/// Produces the server's sketch of a global model (sensitivity or raw-parameter sketch).
using GlobalSketcher = std::function<SensitivitySketch(const ParamVector&)>;

/// Server state machine for one run. Single owner, not thread-safe.
class Server {
 public:
  /// `sketcher` is required for the FedPSA family and ignored otherwise.
  Server(StrategyParams params, ParamVector initial, GlobalSketcher sketcher = {});

  /// Asynchronous receipt. Returns the aggregation events triggered (zero or one).
  std::vector<AggregationEvent> receive_update(const UpdateEnvelope& env, std::int64_t now);

  /// Synchronous FedAvg step over a complete cohort.
  AggregationEvent run_fedavg_round(std::span<const UpdateEnvelope> cohort, std::int64_t now);

  const StrategyParams& params() const noexcept { return params_; }
  const ParamVector& global_params() const noexcept { return global_; }
  std::uint64_t version() const noexcept { return version_; }
  const SensitivitySketch& global_sketch() const noexcept { return global_sketch_; }
  const ThermometerQueue& thermometer() const noexcept { return thermometer_; }
  const AggregationBuffer& buffer() const noexcept { return buffer_; }
  /// kappa assigned to the most recent FedPSA-family receipt.
  double last_kappa() const noexcept { return last_kappa_; }

 private:
  AggregationEvent aggregate_buffer(std::int64_t now);
  AggregationEvent apply_fedasync(const UpdateEnvelope& env, std::int64_t now);
  void check_envelope(const UpdateEnvelope& env) const;
  void refresh_global_sketch();

  StrategyParams params_;
  ParamVector global_;
  GlobalSketcher sketcher_;
  std::uint64_t version_ = 0;
  AggregationBuffer buffer_;
  ThermometerQueue thermometer_;
  SensitivitySketch global_sketch_;
  double last_kappa_ = 0.0;
};

}  // namespace fedpsa

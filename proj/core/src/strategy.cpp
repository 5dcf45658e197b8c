#include "fedpsa/strategy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "fedpsa/errors.hpp"

namespace fedpsa {

std::string_view to_string(StrategyKind kind) noexcept {
  switch (kind) {
    case StrategyKind::FedAvg: return "fedavg";
    case StrategyKind::FedAsync: return "fedasync";
    case StrategyKind::FedBuff: return "fedbuff";
    case StrategyKind::FedPsa: return "fedpsa";
    case StrategyKind::FedPsaNoT: return "fedpsa_not";
    case StrategyKind::FedPsaNoS: return "fedpsa_nos";
  }
  return "unknown";
}

StrategyKind parse_strategy(std::string_view name) {
  for (auto kind : {StrategyKind::FedAvg, StrategyKind::FedAsync, StrategyKind::FedBuff, StrategyKind::FedPsa,
                    StrategyKind::FedPsaNoT, StrategyKind::FedPsaNoS}) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown strategy '" + std::string(name) +
                    "' (expected fedavg, fedasync, fedbuff, fedpsa, fedpsa_not, fedpsa_nos)");
}

bool is_fedpsa_family(StrategyKind kind) noexcept {
  return kind == StrategyKind::FedPsa || kind == StrategyKind::FedPsaNoT || kind == StrategyKind::FedPsaNoS;
}

bool is_async(StrategyKind kind) noexcept { return kind != StrategyKind::FedAvg; }

UpdateEnvelope make_envelope(std::uint64_t client_id, ParamVector delta, SensitivitySketch sketch,
                             std::uint64_t origin_version, std::int64_t upload_time, std::size_t data_size) {
  UpdateEnvelope env;
  env.client_id = client_id;
  env.magnitude = delta.squared_norm();
  env.delta = std::move(delta);
  env.sketch = std::move(sketch);
  env.origin_version = origin_version;
  env.upload_time = upload_time;
  env.data_size = data_size;
  return env;
}

namespace {

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint64_t le(int n) {
    if (pos_ + static_cast<std::size_t>(n) > bytes_.size()) {
      throw ParseError("envelope: truncated at offset " + std::to_string(pos_));
    }
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::span<const std::uint8_t> rest() const { return bytes_.subspan(pos_); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_envelope(const UpdateEnvelope& env) {
  std::vector<std::uint8_t> out;
  out.push_back(kEnvelopeFormatVersion);
  put_le(out, env.client_id, 8);
  put_le(out, env.origin_version, 8);
  put_le(out, static_cast<std::uint64_t>(env.upload_time), 8);
  put_le(out, std::bit_cast<std::uint64_t>(env.magnitude), 8);
  put_le(out, env.data_size, 8);
  put_le(out, env.delta.dim(), 4);
  for (double v : env.delta.values()) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  const auto sk = encode_sketch(env.sketch);
  out.insert(out.end(), sk.begin(), sk.end());
  return out;
}

UpdateEnvelope decode_envelope(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const auto version = in.le(1);
  if (version != kEnvelopeFormatVersion) {
    throw ParseError("envelope: unsupported format version " + std::to_string(version) + " at offset 0");
  }
  UpdateEnvelope env;
  env.client_id = in.le(8);
  env.origin_version = in.le(8);
  env.upload_time = static_cast<std::int64_t>(in.le(8));
  env.magnitude = in.f64();
  env.data_size = in.le(8);
  const std::size_t d = in.le(4);
  std::vector<double> delta(d);
  for (double& v : delta) v = in.f64();
  env.delta = ParamVector(std::move(delta));
  env.sketch = decode_sketch(in.rest());
  return env;
}

ThermometerQueue::ThermometerQueue(std::size_t capacity, double gamma, double delta)
    : capacity_(capacity), gamma_(gamma), delta_(delta) {
  if (capacity == 0) throw ConfigError("thermometer: queue length must be >= 1");
  if (!(delta > 0.0)) throw ConfigError("thermometer: delta must be > 0");
  if (!(gamma >= 0.0)) throw ConfigError("thermometer: gamma must be >= 0");
}

void ThermometerQueue::push(double magnitude) {
  if (!(magnitude >= 0.0) || !std::isfinite(magnitude)) {
    throw ContractError("thermometer: magnitudes must be finite and >= 0");
  }
  entries_.push_back(magnitude);
  if (entries_.size() > capacity_) entries_.pop_front();
  if (!m0_ && entries_.size() == capacity_) {
    double m0 = current_mean();
    if (m0 < std::numeric_limits<double>::epsilon()) {
      m0 = std::numeric_limits<double>::epsilon();
      m0_clamped_ = true;
    }
    m0_ = m0;
  }
}

double ThermometerQueue::current_mean() const noexcept {
  if (entries_.empty()) return 0.0;
  double total = 0.0;
  for (double m : entries_) total += m;
  return total / static_cast<double>(entries_.size());
}

std::optional<double> ThermometerQueue::temperature() const noexcept {
  if (!m0_) return std::nullopt;
  return (current_mean() / *m0_) * gamma_ + delta_;
}

std::vector<double> softmax_weights(std::span<const double> kappas, double temperature) {
  if (kappas.empty()) throw ContractError("softmax_weights: empty input");
  if (!(temperature > 0.0)) throw ContractError("softmax_weights: temperature must be > 0");
  const double mx = *std::max_element(kappas.begin(), kappas.end());
  std::vector<double> out(kappas.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < kappas.size(); ++i) {
    out[i] = std::exp((kappas[i] - mx) / temperature);
    sum += out[i];
  }
  for (double& w : out) w /= sum;
  return out;
}

double fedasync_weight(double a0, std::uint64_t tau) noexcept {
  return a0 / std::sqrt(static_cast<double>(tau) + 1.0);
}

nlohmann::ordered_json event_json(const AggregationEvent& e) {
  nlohmann::ordered_json o;
  o["version"] = e.version;
  o["virtual_time"] = e.virtual_time;
  o["strategy"] = e.strategy;
  o["temperature"] = e.temperature ? nlohmann::ordered_json(*e.temperature) : nlohmann::ordered_json(nullptr);
  o["kappas"] = e.kappas;
  o["weights"] = e.weights;
  o["client_ids"] = e.client_ids;
  o["staleness_taus"] = e.staleness_taus;
  o["buffer_after"] = e.buffer_after;
  o["m0_clamped"] = e.m0_clamped;
  o["m_cur"] = e.m_cur ? nlohmann::ordered_json(*e.m_cur) : nlohmann::ordered_json(nullptr);
  o["m0"] = e.m0 ? nlohmann::ordered_json(*e.m0) : nlohmann::ordered_json(nullptr);
  return o;
}

void to_json(nlohmann::json& j, const AggregationEvent& e) { j = nlohmann::json::parse(event_json(e).dump()); }

void from_json(const nlohmann::json& j, AggregationEvent& e) {
  e.version = j.at("version").get<std::uint64_t>();
  e.virtual_time = j.at("virtual_time").get<std::int64_t>();
  e.strategy = j.at("strategy").get<std::string>();
  e.temperature = j.at("temperature").is_null() ? std::nullopt : std::optional<double>(j.at("temperature").get<double>());
  e.kappas = j.at("kappas").get<std::vector<double>>();
  e.weights = j.at("weights").get<std::vector<double>>();
  e.client_ids = j.at("client_ids").get<std::vector<std::uint64_t>>();
  e.staleness_taus = j.at("staleness_taus").get<std::vector<std::uint64_t>>();
  e.buffer_after = j.value("buffer_after", std::size_t{0});
  e.m0_clamped = j.value("m0_clamped", false);
  auto optional_number = [&j](const char* key) {
    return j.contains(key) && !j.at(key).is_null() ? std::optional<double>(j.at(key).get<double>()) : std::nullopt;
  };
  e.m_cur = optional_number("m_cur");
  e.m0 = optional_number("m0");
}

void AggregationBuffer::push(BufferSlot slot) {
  if (full()) throw ContractError("aggregation buffer overflow");
  slots_.push_back(std::move(slot));
}

void apply_weighted_deltas(ParamVector& global, std::span<const double> weights, std::span<const BufferSlot> slots) {
  require_same_dim(weights.size(), slots.size(), "apply_weighted_deltas");
  for (std::size_t i = 0; i < slots.size(); ++i) global.axpy(weights[i], slots[i].envelope.delta);
  global.require_finite("global model after aggregation");
}

Server::Server(StrategyParams params, ParamVector initial, GlobalSketcher sketcher)
    : params_(params),
      global_(std::move(initial)),
      sketcher_(std::move(sketcher)),
      buffer_(params.buffer_size),
      thermometer_(params.queue_size, params.gamma, params.delta) {
  if (params_.buffer_size == 0) throw ConfigError("buffer size must be >= 1");
  if (is_fedpsa_family(params_.kind)) {
    if (!sketcher_) throw ConfigError(std::string(to_string(params_.kind)) + " needs a global sketcher");
    refresh_global_sketch();
  }
}

void Server::refresh_global_sketch() {
  if (sketcher_) global_sketch_ = sketcher_(global_);
}

void Server::check_envelope(const UpdateEnvelope& env) const {
  require_same_dim(env.delta.dim(), global_.dim(), "update delta");
  if (env.origin_version > version_) {
    throw ContractError("update from client " + std::to_string(env.client_id) + " claims origin version " +
                        std::to_string(env.origin_version) + " ahead of server version " + std::to_string(version_));
  }
  if (is_fedpsa_family(params_.kind)) require_same_dim(env.sketch.dim(), global_sketch_.dim(), "update sketch");
}

std::vector<AggregationEvent> Server::receive_update(const UpdateEnvelope& env, std::int64_t now) {
  if (params_.kind == StrategyKind::FedAvg) throw ContractError("FedAvg is synchronous; use run_fedavg_round");
  check_envelope(env);
  const std::uint64_t tau = version_ - env.origin_version;
  if (params_.kind == StrategyKind::FedAsync) return {apply_fedasync(env, now)};

  double kappa = 0.0;
  if (is_fedpsa_family(params_.kind)) {
    kappa = cosine(env.sketch, global_sketch_);
    last_kappa_ = kappa;
    if (params_.thermometer_enabled) thermometer_.push(env.magnitude);
  }
  buffer_.push(BufferSlot{env, kappa, tau});
  if (!buffer_.full()) return {};
  return {aggregate_buffer(now)};
}

AggregationEvent Server::aggregate_buffer(std::int64_t now) {
  const auto& slots = buffer_.slots();
  const std::size_t n = slots.size();
  AggregationEvent event;
  event.virtual_time = now;
  event.strategy = std::string(to_string(params_.kind));
  for (const auto& s : slots) {
    event.client_ids.push_back(s.envelope.client_id);
    event.staleness_taus.push_back(s.tau);
  }

  std::optional<double> temperature;
  if (is_fedpsa_family(params_.kind)) {
    for (const auto& s : slots) event.kappas.push_back(s.kappa);
    temperature = thermometer_.temperature();
    if (temperature && params_.kind == StrategyKind::FedPsaNoT) temperature = params_.gamma + params_.delta;
    event.m0_clamped = thermometer_.m0_clamped();
    if (thermometer_.ready()) {
      event.m_cur = thermometer_.current_mean();
      event.m0 = thermometer_.m0();
    }
  }
  if (temperature) {
    event.weights = softmax_weights(event.kappas, *temperature);
  } else {
    event.weights.assign(n, 1.0 / static_cast<double>(n));
  }
  event.temperature = temperature;

  apply_weighted_deltas(global_, event.weights, slots);
  ++version_;
  buffer_.clear();
  refresh_global_sketch();
  event.version = version_;
  event.buffer_after = buffer_.size();
  return event;
}

AggregationEvent Server::apply_fedasync(const UpdateEnvelope& env, std::int64_t now) {
  const std::uint64_t tau = version_ - env.origin_version;
  const double w = fedasync_weight(params_.fedasync_a0, tau);
  global_.axpy(w, env.delta);
  global_.require_finite("global model after FedAsync update");
  ++version_;
  AggregationEvent event;
  event.version = version_;
  event.virtual_time = now;
  event.strategy = std::string(to_string(params_.kind));
  event.weights = {w};
  event.client_ids = {env.client_id};
  event.staleness_taus = {tau};
  return event;
}

AggregationEvent Server::run_fedavg_round(std::span<const UpdateEnvelope> cohort, std::int64_t now) {
  if (cohort.empty()) throw ContractError("run_fedavg_round: empty cohort");
  AggregationEvent event;
  event.virtual_time = now;
  event.strategy = std::string(to_string(StrategyKind::FedAvg));
  std::vector<BufferSlot> slots;
  slots.reserve(cohort.size());
  double total_size = 0.0;
  for (const auto& env : cohort) {
    check_envelope(env);
    event.client_ids.push_back(env.client_id);
    event.staleness_taus.push_back(version_ - env.origin_version);
    total_size += static_cast<double>(env.data_size);
    slots.push_back(BufferSlot{env, 0.0, version_ - env.origin_version});
  }
  if (params_.weight_by_data_size) {
    if (!(total_size > 0.0)) throw ContractError("run_fedavg_round: data-size weighting with zero total size");
    for (const auto& env : cohort) event.weights.push_back(static_cast<double>(env.data_size) / total_size);
  } else {
    event.weights.assign(cohort.size(), 1.0 / static_cast<double>(cohort.size()));
  }
  apply_weighted_deltas(global_, event.weights, slots);
  ++version_;
  event.version = version_;
  return event;
}

}  // namespace fedpsa

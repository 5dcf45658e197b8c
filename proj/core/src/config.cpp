#include "fedpsa/config.hpp"

#include <cstdio>
#include <set>

#include "fedpsa/errors.hpp"

namespace fedpsa {

namespace {

using nlohmann::json;

// Reads typed fields out of one JSON object, collecting errors instead of throwing.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string prefix, std::vector<std::string>& errors)
      : obj_(obj), prefix_(std::move(prefix)), errors_(errors) {
    if (!obj_.is_object()) {
      errors_.push_back(where("") + ": expected an object");
      valid_ = false;
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!valid_ || !obj_.contains(key)) return;
    const json& v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw json::type_error::create(302, "expected a boolean", &v);
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw json::type_error::create(302, "expected an integer", &v);
        if (std::is_unsigned_v<T> && v.get<long long>() < 0) {
          errors_.push_back(where(key) + ": must be >= 0");
          return;
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw json::type_error::create(302, "expected a number", &v);
      } else {
        if (!v.is_string()) throw json::type_error::create(302, "expected a string", &v);
      }
      out = v.get<T>();
    } catch (const json::exception&) {
      errors_.push_back(where(key) + ": wrong type (" + v.type_name() + ")");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    if (!valid_ || !obj_.contains(key)) return nullptr;
    return &obj_.at(key);
  }

  void reject_unknown() {
    if (!valid_) return;
    for (const auto& [key, _] : obj_.items()) {
      if (!seen_.count(key)) errors_.push_back(where(key) + ": unknown key");
    }
  }

 private:
  std::string where(std::string_view key) const {
    if (prefix_.empty()) return std::string(key);
    return key.empty() ? prefix_ : prefix_ + "." + std::string(key);
  }

  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& errors_;
  std::set<std::string, std::less<>> seen_;
  bool valid_ = true;
};

template <typename F>
void parse_enum(std::vector<std::string>& errors, const std::string& key, F&& parse) {
  try {
    parse();
  } catch (const ConfigError& e) {
    errors.push_back(key + ": " + e.what());
  }
}

}  // namespace

ConfigResult validate_config(const json& raw) {
  ConfigResult result;
  auto& errors = result.errors;
  RunConfig c;
  const json empty = json::object();
  ObjectReader top(raw.is_null() ? empty : raw, "", errors);

  std::string strategy(to_string(c.strategy.kind));
  top.read("strategy", strategy);
  parse_enum(errors, "strategy", [&] { c.strategy.kind = parse_strategy(strategy); });
  top.read("L_s", c.strategy.buffer_size);
  top.read("L_q", c.strategy.queue_size);
  top.read("gamma", c.strategy.gamma);
  top.read("delta", c.strategy.delta);
  top.read("fedasync_a0", c.strategy.fedasync_a0);
  top.read("thermometer", c.strategy.thermometer_enabled);
  std::string weighting = c.strategy.weight_by_data_size ? "data_size" : "equal";
  top.read("fedavg_weighting", weighting);
  if (weighting == "equal" || weighting == "data_size") {
    c.strategy.weight_by_data_size = weighting == "data_size";
  } else {
    errors.push_back("fedavg_weighting: expected equal or data_size");
  }

  if (const json* model = top.child("model")) {
    ObjectReader r(*model, "model", errors);
    std::string arch = c.model.architecture == Architecture::Linear ? "linear" : "mlp";
    r.read("architecture", arch);
    if (arch == "linear") {
      c.model.architecture = Architecture::Linear;
    } else if (arch == "mlp") {
      c.model.architecture = Architecture::Mlp;
    } else {
      errors.push_back("model.architecture: expected linear or mlp");
    }
    r.read("hidden_dim", c.model.hidden_dim);
    r.reject_unknown();
  }

  if (const json* ds = top.child("dataset")) {
    ObjectReader r(*ds, "dataset", errors);
    r.read("kind", c.dataset.kind);
    r.read("name", c.dataset.name);
    r.read("n_classes", c.dataset.n_classes);
    r.read("in_dim", c.dataset.in_dim);
    r.read("per_class", c.dataset.per_class);
    r.read("seed", c.dataset.seed);
    r.read("test_fraction", c.dataset.test_fraction);
    r.read("root", c.dataset.root);
    r.reject_unknown();
  }

  top.read("alpha", c.alpha);
  top.read("n_clients", c.n_clients);
  top.read("concurrency_rate", c.concurrency_rate);

  if (const json* lat = top.child("latency")) {
    ObjectReader r(*lat, "latency", errors);
    std::string kind(to_string(c.latency.kind));
    r.read("kind", kind);
    parse_enum(errors, "latency.kind", [&] { c.latency.kind = parse_latency_kind(kind); });
    r.read("lo", c.latency.lo);
    r.read("hi", c.latency.hi);
    r.read("tail_alpha", c.latency.tail_alpha);
    r.read("tail_scale", c.latency.tail_scale);
    r.reject_unknown();
  }

  top.read("horizon_days", c.horizon_days);
  top.read("eval_interval", c.eval_interval);
  top.read("k", c.sketch_dim);
  top.read("lr", c.lr);
  top.read("lr_decay", c.lr_decay);
  top.read("epochs", c.epochs);
  top.read("batch_size", c.batch_size);
  top.read("seed", c.seed);

  if (const json* cal = top.child("calibration")) {
    ObjectReader r(*cal, "calibration", errors);
    std::string source = c.calibration_source == CalibrationSource::GaussianNoise ? "gaussian" : "real";
    r.read("source", source);
    if (source == "gaussian") {
      c.calibration_source = CalibrationSource::GaussianNoise;
    } else if (source == "real") {
      c.calibration_source = CalibrationSource::RealSample;
    } else {
      errors.push_back("calibration.source: expected gaussian or real");
    }
    r.read("size", c.calibration_size);
    r.reject_unknown();
  }

  if (const json* probe = top.child("probe")) {
    ObjectReader r(*probe, "probe", errors);
    r.read("enabled", c.probe);
    r.read("batch", c.probe_batch);
    r.reject_unknown();
  }
  top.reject_unknown();

  for (auto& e : check_ranges(c)) errors.push_back(std::move(e));
  if (errors.empty()) result.config = c;
  return result;
}

std::optional<std::size_t> implied_param_count(const RunConfig& c) {
  std::size_t in_dim = 0;
  std::size_t n_classes = 0;
  if (c.dataset.kind == "synthetic") {
    in_dim = c.dataset.in_dim;
    n_classes = c.dataset.n_classes;
  } else if (c.dataset.kind == "idx" && (c.dataset.name == "mnist" || c.dataset.name == "fmnist")) {
    in_dim = 784;
    n_classes = 10;
  } else {
    return std::nullopt;
  }
  return c.model_spec(in_dim, n_classes).param_count();
}

std::vector<std::string> check_ranges(const RunConfig& c) {
  std::vector<std::string> errors;
  auto require = [&](bool ok, const char* message) {
    if (!ok) errors.emplace_back(message);
  };
  require(c.strategy.delta > 0.0, "delta: must be > 0");
  require(c.strategy.gamma >= 0.0, "gamma: must be >= 0");
  require(c.strategy.buffer_size >= 1, "L_s: must be >= 1");
  require(c.strategy.queue_size >= 1, "L_q: must be >= 1");
  require(c.strategy.fedasync_a0 > 0.0, "fedasync_a0: must be > 0");
  require(c.sketch_dim >= 1, "k: must be >= 1");
  if (auto d = implied_param_count(c); d && c.sketch_dim > *d) {
    errors.push_back("k: " + std::to_string(c.sketch_dim) + " exceeds parameter count d = " + std::to_string(*d));
  }
  require(c.concurrency_rate > 0.0 && c.concurrency_rate <= 1.0, "concurrency_rate: must be in (0, 1]");
  require(c.alpha > 0.0, "alpha: must be > 0");
  require(c.n_clients >= 1, "n_clients: must be >= 1");
  require(c.horizon_days >= 0.0, "horizon_days: must be >= 0");
  require(c.eval_interval >= 1, "eval_interval: must be >= 1");
  require(c.lr > 0.0, "lr: must be > 0");
  require(c.lr_decay > 0.0 && c.lr_decay <= 1.0, "lr_decay: must be in (0, 1]");
  require(c.epochs >= 1, "epochs: must be >= 1");
  require(c.batch_size >= 1, "batch_size: must be >= 1");
  require(c.calibration_size >= 1, "calibration.size: must be >= 1");
  require(c.probe_batch >= 1, "probe.batch: must be >= 1");
  require(c.model.architecture == Architecture::Linear || c.model.hidden_dim >= 1, "model.hidden_dim: must be >= 1");
  require(c.dataset.kind == "synthetic" || c.dataset.kind == "idx", "dataset.kind: expected synthetic or idx");
  require(c.dataset.test_fraction > 0.0 && c.dataset.test_fraction < 1.0, "dataset.test_fraction: must be in (0, 1)");
  if (c.dataset.kind == "synthetic") {
    require(c.dataset.n_classes >= 1 && c.dataset.in_dim >= 1 && c.dataset.per_class >= 1,
            "dataset: synthetic counts must be >= 1");
  }
  try {
    c.latency.validate();
  } catch (const ConfigError& e) {
    errors.emplace_back(e.what());
  }
  return errors;
}

void validate_or_throw(const RunConfig& config) {
  const auto errors = check_ranges(config);
  if (errors.empty()) return;
  std::string message = "invalid configuration:";
  for (const auto& e : errors) message += "\n  " + e;
  throw ConfigError(message);
}

json emit_config(const RunConfig& c) {
  return json{
      {"strategy", std::string(to_string(c.strategy.kind))},
      {"L_s", c.strategy.buffer_size},
      {"L_q", c.strategy.queue_size},
      {"gamma", c.strategy.gamma},
      {"delta", c.strategy.delta},
      {"fedasync_a0", c.strategy.fedasync_a0},
      {"thermometer", c.strategy.thermometer_enabled},
      {"fedavg_weighting", c.strategy.weight_by_data_size ? "data_size" : "equal"},
      {"model",
       {{"architecture", c.model.architecture == Architecture::Linear ? "linear" : "mlp"},
        {"hidden_dim", c.model.hidden_dim}}},
      {"dataset",
       {{"kind", c.dataset.kind},
        {"name", c.dataset.name},
        {"n_classes", c.dataset.n_classes},
        {"in_dim", c.dataset.in_dim},
        {"per_class", c.dataset.per_class},
        {"seed", c.dataset.seed},
        {"test_fraction", c.dataset.test_fraction},
        {"root", c.dataset.root}}},
      {"alpha", c.alpha},
      {"n_clients", c.n_clients},
      {"concurrency_rate", c.concurrency_rate},
      {"latency",
       {{"kind", std::string(to_string(c.latency.kind))},
        {"lo", c.latency.lo},
        {"hi", c.latency.hi},
        {"tail_alpha", c.latency.tail_alpha},
        {"tail_scale", c.latency.tail_scale}}},
      {"horizon_days", c.horizon_days},
      {"eval_interval", c.eval_interval},
      {"k", c.sketch_dim},
      {"lr", c.lr},
      {"lr_decay", c.lr_decay},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"calibration",
       {{"source", c.calibration_source == CalibrationSource::GaussianNoise ? "gaussian" : "real"},
        {"size", c.calibration_size}}},
      {"probe", {{"enabled", c.probe}, {"batch", c.probe_batch}}},
  };
}

std::string content_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunConfig& config) { return content_hash(emit_config(config).dump()); }

void apply_override(json& raw, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like KEY=VALUE");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  if (raw.is_null()) raw = json::object();
  json* node = &raw;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + path + "': empty path segment");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    json& next = (*node)[key];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("override '" + path + "': '" + key + "' is not an object");
    node = &next;
    start = dot + 1;
  }
}

std::size_t ExperimentMatrix::size() const noexcept {
  std::size_t n = 1;
  for (const auto& [_, values] : axes) n *= values.size();
  return n;
}

ExperimentMatrix parse_matrix(const json& raw) {
  if (!raw.is_object()) throw ConfigError("sweep file must be a JSON object");
  ExperimentMatrix m;
  for (const auto& [key, value] : raw.items()) {
    if (key != "name" && key != "base" && key != "axes") throw ConfigError("sweep: unknown key '" + key + "'");
  }
  m.name = raw.value("name", std::string("sweep"));
  if (raw.contains("base")) m.base = raw.at("base");
  if (raw.contains("axes")) {
    const json& axes = raw.at("axes");
    if (!axes.is_object()) throw ConfigError("sweep: axes must be an object of arrays");
    for (const auto& [key, values] : axes.items()) {
      if (!values.is_array() || values.empty()) throw ConfigError("sweep: axis '" + key + "' must be a non-empty array");
      m.axes.emplace_back(key, std::vector<json>(values.begin(), values.end()));
    }
  }
  return m;
}

std::vector<json> expand_matrix(const ExperimentMatrix& matrix, bool force) {
  const std::size_t total = matrix.size();
  if (total > kMaxSweepRuns && !force) {
    throw ConfigError("sweep expands to " + std::to_string(total) + " runs (limit " + std::to_string(kMaxSweepRuns) +
                      "); pass --force to run it anyway");
  }
  std::vector<json> cells;
  cells.reserve(total);
  std::vector<std::size_t> index(matrix.axes.size(), 0);
  for (std::size_t n = 0; n < total; ++n) {
    json cell = matrix.base.is_null() ? json::object() : matrix.base;
    for (std::size_t a = 0; a < matrix.axes.size(); ++a) {
      apply_override(cell, matrix.axes[a].first + "=" + matrix.axes[a].second[index[a]].dump());
    }
    cells.push_back(std::move(cell));
    for (std::size_t a = matrix.axes.size(); a-- > 0;) {
      if (++index[a] < matrix.axes[a].second.size()) break;
      index[a] = 0;
    }
  }
  return cells;
}

}  // namespace fedpsa

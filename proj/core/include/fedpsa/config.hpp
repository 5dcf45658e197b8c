#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpsa/sim.hpp"

namespace fedpsa {

/// Outcome of validating a raw JSON run configuration: either a config or every
/// problem found (unknown keys, wrong types, out-of-range values).
struct ConfigResult {
  std::optional<RunConfig> config;
  std::vector<std::string> errors;

  bool ok() const noexcept { return config.has_value(); }
};

/// Missing keys take their documented defaults; unknown keys are errors.
ConfigResult validate_config(const nlohmann::json& raw);

/// Range checks on an already-typed config. Empty when valid.
std::vector<std::string> check_ranges(const RunConfig& config);

/// Throws ConfigError listing every range violation.
void validate_or_throw(const RunConfig& config);

/// Full config with every key present. validate_config(emit_config(c)) == c.
nlohmann::json emit_config(const RunConfig& config);

/// 16 hex digits of FNV-1a over the canonical (sorted-key) JSON form.
std::string config_hash(const RunConfig& config);
std::string content_hash(std::string_view text);

/// Sets `dotted.path` in `raw`. The value is parsed as JSON when possible,
/// otherwise stored as a string.
void apply_override(nlohmann::json& raw, std::string_view assignment);

/// Parameter count implied by the config, if the dataset shape is known without loading it.
std::optional<std::size_t> implied_param_count(const RunConfig& config);

/// A base config plus sweep axes: {"name": ..., "base": {...}, "axes": {"dotted.key": [values...]}}.
struct ExperimentMatrix {
  std::string name = "sweep";
  nlohmann::json base = nlohmann::json::object();
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;

  /// Product of axis lengths.
  std::size_t size() const noexcept;
};

inline constexpr std::size_t kMaxSweepRuns = 10'000;

ExperimentMatrix parse_matrix(const nlohmann::json& raw);

/// Cartesian expansion in axis order (last axis fastest). Refuses more than
/// kMaxSweepRuns cells unless `force` is set.
std::vector<nlohmann::json> expand_matrix(const ExperimentMatrix& matrix, bool force = false);

}  // namespace fedpsa

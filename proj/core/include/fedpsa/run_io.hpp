#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpsa/metrics.hpp"
#include "fedpsa/sim.hpp"

namespace fedpsa {

/// Writes via a sibling temp file and rename, so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// virtual_time,version,test_accuracy,test_loss
std::string curve_csv(const std::vector<CurvePoint>& curve);
/// One ordered JSON object per line.
std::string events_jsonl(const std::vector<AggregationEvent>& events);
/// virtual_time,kappa,align
std::string probe_csv(const std::vector<AlignmentSample>& samples);
/// kappa_mid,mean_align,count
std::string kappa_bins_csv(const CorrelationReport& report);

RunKey run_key(const RunConfig& config);
nlohmann::ordered_json summary_json(const RunConfig& config, const RunRecord& record);

/// Layout: <dir>/{config.json, summary.json, curve.csv, events.jsonl[, probe.csv]}.
/// summary.json is written last and marks the directory complete.
void write_run_directory(const std::filesystem::path& dir, const RunConfig& config, const RunRecord& record);

bool run_directory_complete(const std::filesystem::path& dir);

struct CollectedRun {
  std::filesystem::path dir;
  RunSummary summary;
  std::vector<CurvePoint> curve;
};

/// Finds every complete run directory under `root`. Fields missing from older
/// summaries fall back to "unknown"/0 instead of failing.
std::vector<CollectedRun> collect_runs(const std::filesystem::path& root);

std::vector<CurvePoint> parse_curve_csv(std::string_view text);

/// strategy,alpha,latency_kind,seed,virtual_day,accuracy
std::string learning_curves_csv(const std::vector<CollectedRun>& runs);

}  // namespace fedpsa

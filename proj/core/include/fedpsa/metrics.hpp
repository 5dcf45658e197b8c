#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedpsa/data.hpp"
#include "fedpsa/model.hpp"
#include "fedpsa/sim.hpp"

namespace fedpsa {

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

/// Argmax accuracy and mean cross-entropy over a labeled test set.
Evaluation evaluate(const ModelSpec& spec, const ParamVector& params, const Dataset& test);

/// Trapezoidal area under accuracy-vs-time, with time measured in virtual days.
double aulc(std::span<const CurvePoint> curve);

/// Cosine between loss gradients at the client and server parameters on the same batch,
/// paired with the kappa the strategy assigned to that upload.
AlignmentSample alignment_probe(const ModelSpec& spec, const ParamVector& server_params,
                                const ParamVector& client_params, double kappa, const Batch& test_batch,
                                std::int64_t virtual_time);

/// nullopt when either side has zero variance or fewer than two points.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
/// Pearson on average ranks (ties share their mean rank).
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

struct KappaBin {
  double kappa_mid = 0.0;
  double mean_align = 0.0;
  std::size_t count = 0;
};

struct CorrelationReport {
  std::optional<double> pearson_raw;
  std::optional<double> spearman_raw;
  std::optional<double> pearson_binned;
  std::optional<double> spearman_binned;
  std::vector<KappaBin> bins;  // non-empty bins only, ascending kappa
};

/// Bins samples by kappa into [-1 + j*w, -1 + (j+1)*w) (kappa = 1 falls into the last
/// bin), then correlates bin midpoints with mean alignment. Needs >= 10 samples.
CorrelationReport binned_correlation(std::span<const AlignmentSample> samples, double bin_width);

/// Identity of a run inside a comparison table.
struct RunKey {
  std::string strategy;
  std::string dataset;
  double alpha = 0.0;
  std::string latency_kind;
  std::uint64_t seed = 0;
};

struct RunSummary {
  RunKey key;
  double final_accuracy = 0.0;
  double aulc = 0.0;
};

/// Final accuracy is the last curve point.
RunSummary summarize(const RunKey& key, std::span<const CurvePoint> curve);

struct ComparisonRow {
  std::string strategy;
  std::string dataset;
  double alpha = 0.0;
  std::string latency_kind;
  std::size_t runs = 0;
  double final_accuracy_mean = 0.0;
  double final_accuracy_std = 0.0;
  double aulc_mean = 0.0;
  double aulc_std = 0.0;
};

/// Groups by (strategy, dataset, alpha, latency_kind), in first-seen order. Std is the
/// sample standard deviation (0 for a single run).
std::vector<ComparisonRow> compare_runs(std::span<const RunSummary> runs);

inline constexpr const char* kSummaryCsvHeader = "strategy,dataset,alpha,latency_kind,seed,final_accuracy,aulc";
inline constexpr const char* kComparisonCsvHeader =
    "strategy,dataset,alpha,latency_kind,runs,final_accuracy_mean,final_accuracy_std,aulc_mean,aulc_std";

std::string summary_csv(std::span<const RunSummary> runs);
std::string comparison_csv(std::span<const ComparisonRow> rows);

}  // namespace fedpsa

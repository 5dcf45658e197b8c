#include "fedpsa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "fedpsa/errors.hpp"
#include "fedpsa/format.hpp"
#include "fedpsa/sensitivity.hpp"

namespace fedpsa {

Evaluation evaluate(const ModelSpec& spec, const ParamVector& params, const Dataset& test) {
  if (test.size() == 0) throw ContractError("evaluate: empty test set");
  const auto r = loss_and_accuracy(spec, params, test.samples);
  return {r.accuracy, r.loss};
}

double aulc(std::span<const CurvePoint> curve) {
  if (curve.size() < 2) throw ContractError("aulc: need at least two curve points");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double dt = static_cast<double>(curve[i].virtual_time - curve[i - 1].virtual_time) /
                      static_cast<double>(kUnitsPerDay);
    if (dt <= 0.0) throw ContractError("aulc: curve times must be strictly increasing");
    area += 0.5 * (curve[i].accuracy + curve[i - 1].accuracy) * dt;
  }
  return area;
}

AlignmentSample alignment_probe(const ModelSpec& spec, const ParamVector& server_params,
                                const ParamVector& client_params, double kappa, const Batch& test_batch,
                                std::int64_t virtual_time) {
  const ParamVector g_client = gradient(spec, client_params, test_batch);
  const ParamVector g_server = gradient(spec, server_params, test_batch);
  return AlignmentSample{std::clamp(kappa, -1.0, 1.0), cosine(g_client.values(), g_server.values()), virtual_time};
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  require_same_dim(x.size(), y.size(), "pearson");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  const auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
  };
  if (constant(x) || constant(y)) return std::nullopt;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  require_same_dim(x.size(), y.size(), "spearman");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

CorrelationReport binned_correlation(std::span<const AlignmentSample> samples, double bin_width) {
  if (samples.size() < 10) throw ContractError("binned_correlation: need at least 10 samples");
  if (!(bin_width > 0.0)) throw ContractError("binned_correlation: bin width must be > 0");

  CorrelationReport report;
  std::vector<double> kappas;
  std::vector<double> aligns;
  for (const auto& s : samples) {
    kappas.push_back(s.kappa);
    aligns.push_back(s.align);
  }
  report.pearson_raw = pearson(kappas, aligns);
  report.spearman_raw = spearman(kappas, aligns);

  const auto n_bins = static_cast<long>(std::ceil(2.0 / bin_width - 1e-9));
  std::map<long, std::pair<double, std::size_t>> bins;
  for (const auto& s : samples) {
    auto j = static_cast<long>(std::floor((std::clamp(s.kappa, -1.0, 1.0) + 1.0) / bin_width));
    j = std::clamp(j, 0L, n_bins - 1);
    auto& [sum, count] = bins[j];
    sum += s.align;
    ++count;
  }
  std::vector<double> mids;
  std::vector<double> means;
  for (const auto& [j, acc] : bins) {
    const double mid = -1.0 + (static_cast<double>(j) + 0.5) * bin_width;
    const double mean = acc.first / static_cast<double>(acc.second);
    report.bins.push_back({mid, mean, acc.second});
    mids.push_back(mid);
    means.push_back(mean);
  }
  report.pearson_binned = pearson(mids, means);
  report.spearman_binned = spearman(mids, means);
  return report;
}

RunSummary summarize(const RunKey& key, std::span<const CurvePoint> curve) {
  if (curve.empty()) throw ContractError("summarize: empty curve");
  return RunSummary{key, curve.back().accuracy, curve.size() >= 2 ? aulc(curve) : 0.0};
}

std::vector<ComparisonRow> compare_runs(std::span<const RunSummary> runs) {
  std::vector<ComparisonRow> rows;
  std::vector<std::vector<const RunSummary*>> members;
  for (const auto& r : runs) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const ComparisonRow& row) {
      return row.strategy == r.key.strategy && row.dataset == r.key.dataset && row.alpha == r.key.alpha &&
             row.latency_kind == r.key.latency_kind;
    });
    if (it == rows.end()) {
      rows.push_back(ComparisonRow{r.key.strategy, r.key.dataset, r.key.alpha, r.key.latency_kind});
      members.emplace_back();
      it = rows.end() - 1;
    }
    members[static_cast<std::size_t>(it - rows.begin())].push_back(&r);
  }
  auto mean_std = [](const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    if (v.size() < 2) return std::pair{mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(ss / (n - 1.0))};
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<double> acc;
    std::vector<double> area;
    for (const auto* r : members[i]) {
      acc.push_back(r->final_accuracy);
      area.push_back(r->aulc);
    }
    rows[i].runs = members[i].size();
    std::tie(rows[i].final_accuracy_mean, rows[i].final_accuracy_std) = mean_std(acc);
    std::tie(rows[i].aulc_mean, rows[i].aulc_std) = mean_std(area);
  }
  return rows;
}

std::string summary_csv(std::span<const RunSummary> runs) {
  std::ostringstream out;
  out << kSummaryCsvHeader << '\n';
  for (const auto& r : runs) {
    out << r.key.strategy << ',' << r.key.dataset << ',' << format_double(r.key.alpha) << ',' << r.key.latency_kind
        << ',' << r.key.seed << ',' << format_double(r.final_accuracy) << ',' << format_double(r.aulc) << '\n';
  }
  return out.str();
}

std::string comparison_csv(std::span<const ComparisonRow> rows) {
  std::ostringstream out;
  out << kComparisonCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.strategy << ',' << r.dataset << ',' << format_double(r.alpha) << ',' << r.latency_kind << ',' << r.runs
        << ',' << format_double(r.final_accuracy_mean) << ',' << format_double(r.final_accuracy_std) << ','
        << format_double(r.aulc_mean) << ',' << format_double(r.aulc_std) << '\n';
  }
  return out.str();
}

}  // namespace fedpsa

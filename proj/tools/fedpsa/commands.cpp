#include "commands.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "fedpsa/config.hpp"
#include "fedpsa/errors.hpp"
#include "fedpsa/format.hpp"
#include "fedpsa/metrics.hpp"
#include "fedpsa/run_io.hpp"
#include "fedpsa/sim.hpp"

namespace fedpsa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw ConfigFailure(path.string(), {"not valid JSON"});
  return j;
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
  json raw = path.empty() ? json::object() : read_json(path);
  for (const auto& o : overrides) apply_override(raw, o);
  auto result = validate_config(raw);
  if (!result.ok()) throw ConfigFailure(path.empty() ? "<defaults>" : path.string(), result.errors);
  return *result.config;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void print_summary(const fs::path& dir, const RunConfig& config, const RunRecord& record, double seconds) {
  const auto s = summarize(run_key(config), record.curve);
  std::cout << dir.string() << ": " << s.key.strategy << " final_accuracy=" << format_double(s.final_accuracy)
            << " aulc=" << format_double(s.aulc) << " aggregations=" << record.events.size()
            << " uploads=" << record.stats.uploads << " (" << format_double(std::round(seconds * 10) / 10) << " s)\n";
}

}  // namespace

int cmd_run(const RunOptions& opts) {
  const RunConfig config = load_run_config(opts.config, opts.overrides);
  const auto start = std::chrono::steady_clock::now();
  const RunRecord record = run_simulation(config);
  write_run_directory(opts.out, config, record);
  print_summary(opts.out, config, record, seconds_since(start));
  return 0;
}

int cmd_sweep(const SweepOptions& opts) {
  ExperimentMatrix matrix = parse_matrix(read_json(opts.config));
  for (const auto& o : opts.overrides) apply_override(matrix.base, o);
  std::cout << "sweep '" << matrix.name << "': " << matrix.size() << " cells\n";
  const auto cells = expand_matrix(matrix, opts.force);

  struct Job {
    RunConfig config;
    fs::path dir;
  };
  std::vector<Job> jobs;
  std::vector<std::string> errors;
  const fs::path root = opts.out / matrix.name;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto result = validate_config(cells[i]);
    if (!result.ok()) {
      for (const auto& e : result.errors) errors.push_back("cell " + std::to_string(i) + ": " + e);
      continue;
    }
    fs::path dir = root / config_hash(*result.config);
    if (run_directory_complete(dir)) {
      ++skipped;
      continue;
    }
    jobs.push_back({*result.config, std::move(dir)});
  }
  if (!errors.empty()) throw ConfigFailure(opts.config.string(), errors);
  std::cout << skipped << " complete, " << jobs.size() << " to run on " << opts.workers << " worker(s)\n";

  std::atomic<std::size_t> next{0};
  std::mutex io;
  std::vector<std::string> failures;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto start = std::chrono::steady_clock::now();
      try {
        const RunRecord record = run_simulation(jobs[i].config);
        write_run_directory(jobs[i].dir, jobs[i].config, record);
        std::lock_guard lock(io);
        print_summary(jobs[i].dir, jobs[i].config, record, seconds_since(start));
      } catch (const std::exception& e) {
        std::lock_guard lock(io);
        failures.push_back(jobs[i].dir.string() + ": " + e.what());
        std::cerr << "run failed: " << failures.back() << '\n';
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < std::min<std::size_t>(opts.workers, jobs.size()); ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<RunSummary> summaries;
  for (const auto& run : collect_runs(root)) summaries.push_back(run.summary);
  write_file_atomic(root / "summary.csv", summary_csv(summaries));
  std::cout << "wrote " << (root / "summary.csv").string() << '\n';
  if (!failures.empty()) {
    nlohmann::ordered_json j;
    j["error"] = "runs_failed";
    j["messages"] = failures;
    std::cerr << j.dump() << '\n';
    return 1;
  }
  return 0;
}

int cmd_probe(const ProbeOptions& opts) {
  RunConfig config = load_run_config(opts.config, opts.overrides);
  config.probe = true;
  if (!is_fedpsa_family(config.strategy.kind)) {
    throw ConfigFailure(opts.config.string(), {"strategy: the alignment probe needs a FedPSA-family strategy"});
  }
  const auto start = std::chrono::steady_clock::now();
  const RunRecord record = run_simulation(config);
  write_run_directory(opts.out, config, record);
  print_summary(opts.out, config, record, seconds_since(start));

  if (record.probe.size() < 10) {
    std::cerr << "only " << record.probe.size() << " probe samples; need 10 to correlate\n";
    return 1;
  }
  const auto report = binned_correlation(record.probe, opts.bin_width);
  write_file_atomic(opts.out / "kappa_bins.csv", kappa_bins_csv(report));
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  nlohmann::ordered_json j;
  j["samples"] = record.probe.size();
  j["bin_width"] = opts.bin_width;
  j["pearson_raw"] = opt(report.pearson_raw);
  j["spearman_raw"] = opt(report.spearman_raw);
  j["pearson_binned"] = opt(report.pearson_binned);
  j["spearman_binned"] = opt(report.spearman_binned);
  write_file_atomic(opts.out / "correlation.json", j.dump(2) + "\n");
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_report(const ReportOptions& opts) {
  const fs::path out = opts.out.empty() ? opts.results : opts.out;
  const auto runs = collect_runs(opts.results);
  if (runs.empty()) {
    std::cerr << "no complete run directories under " << opts.results.string() << '\n';
    return 1;
  }
  std::vector<RunSummary> summaries;
  for (const auto& r : runs) summaries.push_back(r.summary);
  write_file_atomic(out / "summary.csv", summary_csv(summaries));
  write_file_atomic(out / "comparison.csv", comparison_csv(compare_runs(summaries)));
  write_file_atomic(out / "learning_curves.csv", learning_curves_csv(runs));
  std::cout << runs.size() << " runs -> " << (out / "comparison.csv").string() << '\n';
  return 0;
}

}  // namespace fedpsa::cli

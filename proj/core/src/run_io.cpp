#include "fedpsa/run_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "fedpsa/config.hpp"
#include "fedpsa/errors.hpp"
#include "fedpsa/format.hpp"

namespace fedpsa {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream out;
  out << "virtual_time,version,test_accuracy,test_loss\n";
  for (const auto& p : curve) {
    out << p.virtual_time << ',' << p.version << ',' << format_double(p.accuracy) << ',' << format_double(p.loss)
        << '\n';
  }
  return out.str();
}

std::string events_jsonl(const std::vector<AggregationEvent>& events) {
  std::string out;
  for (const auto& e : events) {
    out += event_json(e).dump();
    out += '\n';
  }
  return out;
}

std::string probe_csv(const std::vector<AlignmentSample>& samples) {
  std::ostringstream out;
  out << "virtual_time,kappa,align\n";
  for (const auto& s : samples) out << s.virtual_time << ',' << format_double(s.kappa) << ',' << format_double(s.align) << '\n';
  return out.str();
}

std::string kappa_bins_csv(const CorrelationReport& report) {
  std::ostringstream out;
  out << "kappa_mid,mean_align,count\n";
  for (const auto& b : report.bins) out << format_double(b.kappa_mid) << ',' << format_double(b.mean_align) << ',' << b.count << '\n';
  return out.str();
}

RunKey run_key(const RunConfig& config) {
  const std::string dataset = config.dataset.kind == "idx" ? config.dataset.name : config.dataset.kind;
  return RunKey{std::string(to_string(config.strategy.kind)), dataset, config.alpha,
                std::string(to_string(config.latency.kind)) + "(" + std::to_string(config.latency.lo) + "-" +
                    std::to_string(config.latency.hi) + ")",
                config.seed};
}

nlohmann::ordered_json summary_json(const RunConfig& config, const RunRecord& record) {
  const RunSummary s = summarize(run_key(config), record.curve);
  nlohmann::ordered_json j;
  j["config_hash"] = record.config_hash;
  j["strategy"] = s.key.strategy;
  j["dataset"] = s.key.dataset;
  j["alpha"] = s.key.alpha;
  j["latency_kind"] = s.key.latency_kind;
  j["seed"] = s.key.seed;
  j["final_accuracy"] = s.final_accuracy;
  j["aulc"] = s.aulc;
  j["final_version"] = record.curve.empty() ? 0 : record.curve.back().version;
  j["aggregations"] = record.events.size();
  j["uploads"] = record.stats.uploads;
  j["concurrency_cap"] = record.stats.concurrency_cap;
  j["max_in_flight"] = record.stats.max_in_flight;
  j["staleness_histogram"] = record.stats.staleness_histogram;
  j["probe_samples"] = record.probe.size();
  return j;
}

void write_run_directory(const fs::path& dir, const RunConfig& config, const RunRecord& record) {
  fs::create_directories(dir);
  write_file_atomic(dir / "config.json", emit_config(config).dump(2) + "\n");
  write_file_atomic(dir / "curve.csv", curve_csv(record.curve));
  write_file_atomic(dir / "events.jsonl", events_jsonl(record.events));
  if (config.probe) write_file_atomic(dir / "probe.csv", probe_csv(record.probe));
  write_file_atomic(dir / "summary.json", summary_json(config, record).dump(2) + "\n");
}

bool run_directory_complete(const fs::path& dir) { return fs::exists(dir / "summary.json"); }

std::vector<CurvePoint> parse_curve_csv(std::string_view text) {
  std::vector<CurvePoint> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    CurvePoint p;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream row(line);
    if (!(row >> p.virtual_time >> c1 >> p.version >> c2 >> p.accuracy >> c3 >> p.loss)) {
      throw ParseError("curve.csv: malformed row '" + line + "'");
    }
    out.push_back(p);
  }
  return out;
}

std::vector<CollectedRun> collect_runs(const fs::path& root) {
  std::vector<CollectedRun> runs;
  if (!fs::exists(root)) return runs;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == "summary.json") dirs.push_back(entry.path().parent_path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    const auto j = nlohmann::json::parse(read_file(dir / "summary.json"), nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;
    CollectedRun run;
    run.dir = dir;
    run.summary.key.strategy = j.value("strategy", std::string("unknown"));
    run.summary.key.dataset = j.value("dataset", std::string("unknown"));
    run.summary.key.alpha = j.value("alpha", 0.0);
    run.summary.key.latency_kind = j.value("latency_kind", std::string("unknown"));
    run.summary.key.seed = j.value("seed", std::uint64_t{0});
    run.summary.final_accuracy = j.value("final_accuracy", 0.0);
    run.summary.aulc = j.value("aulc", 0.0);
    if (fs::exists(dir / "curve.csv")) run.curve = parse_curve_csv(read_file(dir / "curve.csv"));
    runs.push_back(std::move(run));
  }
  return runs;
}

std::string learning_curves_csv(const std::vector<CollectedRun>& runs) {
  std::ostringstream out;
  out << "strategy,alpha,latency_kind,seed,virtual_day,accuracy\n";
  for (const auto& r : runs) {
    for (const auto& p : r.curve) {
      out << r.summary.key.strategy << ',' << format_double(r.summary.key.alpha) << ',' << r.summary.key.latency_kind
          << ',' << r.summary.key.seed << ','
          << format_double(static_cast<double>(p.virtual_time) / static_cast<double>(kUnitsPerDay)) << ','
          << format_double(p.accuracy) << '\n';
    }
  }
  return out.str();
}

}  // namespace fedpsa

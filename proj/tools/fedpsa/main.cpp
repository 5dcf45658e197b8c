#include <CLI11.hpp>

#include <iostream>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "fedpsa/errors.hpp"

namespace {

int report_error(const char* kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
  return kind == std::string("config") ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace fedpsa::cli;
  CLI::App app{"Asynchronous federated learning simulator"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run one configuration");
  run_cmd->add_option("--config", run.config, "JSON config file (omit for defaults)")->check(CLI::ExistingFile);
  run_cmd->add_option("--out", run.out, "Run directory to write")->required();
  run_cmd->add_option("--override", run.overrides, "KEY=VALUE with dotted keys, repeatable");

  SweepOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run every cell of an experiment matrix");
  sweep_cmd->add_option("--config", sweep.config, "Sweep file {name, base, axes}")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--out", sweep.out, "Results root");
  sweep_cmd->add_option("--override", sweep.overrides, "KEY=VALUE applied to the base config, repeatable");
  sweep_cmd->add_option("--workers", sweep.workers, "Parallel runs")->check(CLI::PositiveNumber);
  sweep_cmd->add_flag("--force", sweep.force, "Allow more than 10000 cells");

  ProbeOptions probe;
  auto* probe_cmd = app.add_subcommand("probe", "Run with the kappa/gradient-alignment probe and correlate");
  probe_cmd->add_option("--config", probe.config, "JSON config file (omit for defaults)")->check(CLI::ExistingFile);
  probe_cmd->add_option("--out", probe.out, "Run directory to write")->required();
  probe_cmd->add_option("--override", probe.overrides, "KEY=VALUE with dotted keys, repeatable");
  probe_cmd->add_option("--bin-width", probe.bin_width, "Kappa bin width")->check(CLI::PositiveNumber);

  ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "Aggregate a results directory into CSV tables");
  report_cmd->add_option("--results", report.results, "Directory searched for run directories")
      ->required()
      ->check(CLI::ExistingDirectory);
  report_cmd->add_option("--out", report.out, "Where to write the tables (default: --results)");

  auto* selftest_cmd = app.add_subcommand("selftest", "Check numerical oracles and invariants");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(run);
    if (*sweep_cmd) return cmd_sweep(sweep);
    if (*probe_cmd) return cmd_probe(probe);
    if (*report_cmd) return cmd_report(report);
    if (*selftest_cmd) return cmd_selftest();
  } catch (const ConfigFailure& e) {
    nlohmann::ordered_json j;
    j["error"] = "config";
    j["source"] = e.source();
    j["messages"] = e.messages();
    std::cerr << j.dump() << '\n';
    return 2;
  } catch (const fedpsa::ConfigError& e) {
    return report_error("config", e.what());
  } catch (const fedpsa::ParseError& e) {
    return report_error("parse", e.what());
  } catch (const fedpsa::NumericError& e) {
    return report_error("numeric", e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
  return 0;
}

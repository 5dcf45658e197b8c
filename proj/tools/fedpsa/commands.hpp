#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedpsa::cli {

/// Every problem found in one config source.
class ConfigFailure : public std::runtime_error {
 public:
  ConfigFailure(std::string source, std::vector<std::string> messages)
      : std::runtime_error("invalid configuration in " + source),
        source_(std::move(source)),
        messages_(std::move(messages)) {}

  const std::string& source() const noexcept { return source_; }
  const std::vector<std::string>& messages() const noexcept { return messages_; }

 private:
  std::string source_;
  std::vector<std::string> messages_;
};

struct RunOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  std::vector<std::string> overrides;
};

struct SweepOptions {
  std::filesystem::path config;
  std::filesystem::path out = "results";
  std::vector<std::string> overrides;
  unsigned workers = 1;
  bool force = false;
};

struct ProbeOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  std::vector<std::string> overrides;
  double bin_width = 0.1;
};

struct ReportOptions {
  std::filesystem::path results;
  std::filesystem::path out;
};

int cmd_run(const RunOptions& opts);
int cmd_sweep(const SweepOptions& opts);
int cmd_probe(const ProbeOptions& opts);
int cmd_report(const ReportOptions& opts);
int cmd_selftest();

}  // namespace fedpsa::cli

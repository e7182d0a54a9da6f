#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pronref/config.hpp"

namespace pronref {

inline constexpr std::string_view kVersion = "0.1.0";

/// Output directory of one stage invocation. Tracks inputs and outputs,
/// writes the manifest on commit and deletes its outputs on rollback.
class RunContext {
 public:
  RunContext(std::string command, const PipelineConfig& config, std::filesystem::path dir);
  ~RunContext();
  RunContext(const RunContext&) = delete;
  RunContext& operator=(const RunContext&) = delete;

  /// "<output_dir>/<UTC timestamp>-<first 12 hex digits of the config hash>".
  static std::filesystem::path default_dir(const PipelineConfig& config);

  const std::filesystem::path& dir() const { return dir_; }

  /// Records an input file (hashed into the manifest).
  void add_input(const std::string& path);
  /// Registers an output file and returns its path inside the run directory.
  std::filesystem::path output(const std::string& name);

  /// Writes manifest.json; after this the outputs are kept.
  void commit();
  /// Removes every registered output (and the directory if it is empty).
  void rollback();

 private:
  std::string command_;
  std::string config_hash_;
  std::vector<std::pair<std::string, std::uint64_t>> seeds_;
  std::filesystem::path dir_;
  bool created_dir_ = false;
  bool done_ = false;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
};

/// Subcommand names in pipeline order.
const std::vector<std::string>& stage_names();

/// Runs one stage; outputs go to `ctx`, a short summary to `summary`.
void run_stage(const std::string& stage, const PipelineConfig& config, RunContext& ctx, std::ostream& summary);

}  // namespace pronref

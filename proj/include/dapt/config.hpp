#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dapt/solver.hpp"

namespace dapt {

struct RunConfig {
  double tau = 0.8;
  std::size_t k = 3;
  int max_regen = 2;
  PipelineMode mode = PipelineMode::kFull;
  std::vector<PipelineMode> modes;  // bench sweep; empty means {mode}
  std::vector<std::string> languages{"en"};
  std::size_t jobs = 4;
  std::filesystem::path corpus_dir = ".";
  std::string dataset = "corpus";
  std::filesystem::path out = "out";
  std::optional<std::filesystem::path> prompts;
  std::optional<std::filesystem::path> replay;
  std::optional<std::filesystem::path> record;
  std::optional<std::filesystem::path> script;  // scripted backends (JSON)

  /// Throws ConfigError.
  void validate() const;
  PipelineConfig pipeline() const;
  std::vector<PipelineMode> sweep() const { return modes.empty() ? std::vector{mode} : modes; }
};

/// Keys mirror the long flag names: tau, top-k, max-regen, mode, modes, lang,
/// jobs, corpus-dir, dataset, out, prompts, replay, record, script. Throws
/// ConfigError on an unknown key or unparseable value.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Flat `key = value` lines; `#` starts a comment. Throws IoError or
/// ConfigError (with the line number).
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// Splits "a, b,c" into {"a", "b", "c"}.
std::vector<std::string> split_list(const std::string& value);

}  // namespace dapt

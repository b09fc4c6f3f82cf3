#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>

#include "dapt/backends.hpp"
#include "dapt/config.hpp"

namespace dapt {

/// Process environment of a CLI invocation. Backends left null are created
/// from `--script` or, failing that, from the DAPT_CHAT_* / DAPT_EMBED_*
/// variables; `--replay` / `--record` wrap whatever was chosen.
struct CliEnv {
  std::ostream& out;
  std::ostream& err;
  std::shared_ptr<ChatBackend> chat;
  std::shared_ptr<EmbedBackend> embed;
};

// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // pipeline or item failure
inline constexpr int kExitUsage = 2;    // bad config, missing input or index

int cmd_index(const std::filesystem::path& corpus, const RunConfig& config, CliEnv& env);
int cmd_ask(const std::string& question, const RunConfig& config, CliEnv& env);
int cmd_bench(const std::filesystem::path& benchmark, const RunConfig& config, CliEnv& env);

/// Parses `dapt <index|ask|bench> ...` and dispatches. Flags override the
/// `--config` file, which overrides the defaults.
int run_cli(int argc, const char* const* argv, CliEnv& env);

}  // namespace dapt

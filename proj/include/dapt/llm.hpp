#pragma once

#include <map>
#include <string>
#include <vector>

#include "dapt/backends.hpp"
#include "dapt/prompts.hpp"

namespace dapt {

/// One prompt/completion pair, kept verbatim in traces.
struct LlmExchange {
  std::string tag;
  std::string prompt;  // template name
  int prompt_version = 0;
  std::string system;
  std::string user;
  std::string completion;
  TokenUsage usage;
};

nlohmann::json to_json(const LlmExchange& exchange);

using ExchangeLog = std::vector<LlmExchange>;

/// Renders `prompt`, sends it at temperature 0 and appends the exchange to
/// `log` when given. Returns the raw completion text.
std::string ask_llm(ChatBackend& chat, const PromptSet& prompts, const std::string& prompt,
                    const std::map<std::string, std::string>& vars, const std::string& tag,
                    ExchangeLog* log, int max_tokens = 512);

}  // namespace dapt

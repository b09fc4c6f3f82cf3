#include "dapt/llm.hpp"

namespace dapt {

nlohmann::json to_json(const LlmExchange& exchange) {
  return {{"tag", exchange.tag},
          {"prompt", exchange.prompt},
          {"prompt_version", exchange.prompt_version},
          {"system", exchange.system},
          {"user", exchange.user},
          {"completion", exchange.completion},
          {"usage",
           {{"prompt_tokens", exchange.usage.prompt_tokens},
            {"completion_tokens", exchange.usage.completion_tokens}}}};
}

std::string ask_llm(ChatBackend& chat, const PromptSet& prompts, const std::string& prompt,
                    const std::map<std::string, std::string>& vars, const std::string& tag,
                    ExchangeLog* log, int max_tokens) {
  auto rendered = prompts.render(prompt, vars);
  ChatRequest request;
  if (!rendered.system.empty()) request.messages.push_back({Role::kSystem, rendered.system});
  request.messages.push_back({Role::kUser, rendered.user});
  request.temperature = 0.0;
  request.max_tokens = max_tokens;
  request.tag = tag;
  auto completion = chat.complete(request);
  if (log) {
    log->push_back({tag, rendered.name, rendered.version, rendered.system, rendered.user,
                    completion.text, completion.usage});
  }
  return completion.text;
}

}  // namespace dapt

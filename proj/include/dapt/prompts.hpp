#pragma once

#include <map>
#include <string>

namespace dapt {

/// A chat prompt with `{{name}}` placeholders. Template files look like
///
///   @version 3
///   @system
///   ...system text...
///   @user
///   ...user text with {{question}}...
struct PromptTemplate {
  std::string name;
  int version = 0;
  std::string system;
  std::string user;

  static PromptTemplate parse(const std::string& name, const std::string& source);
};

struct RenderedPrompt {
  std::string name;
  int version = 0;
  std::string system;
  std::string user;
};

/// Substitutes every `{{key}}`. Throws std::invalid_argument when a
/// placeholder has no value.
std::string fill_placeholders(const std::string& text,
                              const std::map<std::string, std::string>& vars);

class PromptSet {
 public:
  /// Templates compiled from prompts/*.txt.
  static PromptSet builtin();
  /// Builtins overridden by any `<name>.txt` found in `dir`.
  static PromptSet from_directory(const std::string& dir);

  const PromptTemplate& get(const std::string& name) const;
  RenderedPrompt render(const std::string& name,
                        const std::map<std::string, std::string>& vars) const;

 private:
  std::map<std::string, PromptTemplate> templates_;
};

const std::map<std::string, std::string>& builtin_prompt_sources();

}  // namespace dapt

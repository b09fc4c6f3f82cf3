#include "dapt/prompts.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dapt/errors.hpp"

namespace dapt {

namespace {

std::string trim_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  std::size_t start = 0;
  while (start < s.size() && (s[start] == '\n' || s[start] == '\r')) ++start;
  return s.substr(start);
}

}  // namespace

PromptTemplate PromptTemplate::parse(const std::string& name, const std::string& source) {
  PromptTemplate t;
  t.name = name;
  enum class Section { kNone, kSystem, kUser } section = Section::kNone;
  std::string system, user;
  std::istringstream in(source);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("@version", 0) == 0) {
      t.version = std::stoi(line.substr(8));
    } else if (line == "@system") {
      section = Section::kSystem;
    } else if (line == "@user") {
      section = Section::kUser;
    } else if (section == Section::kSystem) {
      system += line + "\n";
    } else if (section == Section::kUser) {
      user += line + "\n";
    }
  }
  t.system = trim_newlines(system);
  t.user = trim_newlines(user);
  if (t.user.empty()) throw ConfigError("prompt '" + name + "' has no @user section");
  return t;
}

std::string fill_placeholders(const std::string& text,
                              const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto open = text.find("{{", pos);
    if (open == std::string::npos) {
      out.append(text, pos);
      break;
    }
    auto close = text.find("}}", open + 2);
    if (close == std::string::npos) {
      out.append(text, pos);
      break;
    }
    out.append(text, pos, open - pos);
    std::string key = text.substr(open + 2, close - open - 2);
    auto it = vars.find(key);
    if (it == vars.end()) throw std::invalid_argument("no value for prompt placeholder {{" + key + "}}");
    out += it->second;
    pos = close + 2;
  }
  return out;
}

PromptSet PromptSet::builtin() {
  PromptSet set;
  for (const auto& [name, source] : builtin_prompt_sources()) {
    set.templates_[name] = PromptTemplate::parse(name, source);
  }
  return set;
}

PromptSet PromptSet::from_directory(const std::string& dir) {
  PromptSet set = builtin();
  if (!std::filesystem::is_directory(dir)) throw IoError("prompt directory not found: " + dir);
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path());
    std::stringstream buf;
    buf << in.rdbuf();
    auto name = entry.path().stem().string();
    set.templates_[name] = PromptTemplate::parse(name, buf.str());
  }
  return set;
}

const PromptTemplate& PromptSet::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw ConfigError("unknown prompt template: " + name);
  return it->second;
}

RenderedPrompt PromptSet::render(const std::string& name,
                                 const std::map<std::string, std::string>& vars) const {
  const auto& t = get(name);
  return {t.name, t.version, fill_placeholders(t.system, vars), fill_placeholders(t.user, vars)};
}

}  // namespace dapt

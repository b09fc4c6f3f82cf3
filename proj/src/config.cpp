#include "dapt/config.hpp"

#include <charconv>
#include <fstream>

#include "dapt/errors.hpp"
#include "dapt/text.hpp"

namespace dapt {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value '" + value + "' for " + key);
  }
  return out;
}

}  // namespace

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    auto comma = value.find(',', start);
    if (comma == std::string::npos) comma = value.size();
    auto item = text::trim(std::string_view(value).substr(start, comma - start));
    if (!item.empty()) out.push_back(std::move(item));
    start = comma + 1;
  }
  return out;
}

void RunConfig::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0, 1]");
  if (k < 1) throw ConfigError("top-k must be at least 1");
  if (max_regen < 0) throw ConfigError("max-regen must be >= 0");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (languages.empty()) throw ConfigError("no language given");
  if (replay && record) throw ConfigError("--replay and --record are mutually exclusive");
  if (prompts && !std::filesystem::is_directory(*prompts)) {
    throw ConfigError("prompts directory not found: " + prompts->string());
  }
  if (script && !std::filesystem::is_regular_file(*script)) {
    throw ConfigError("script file not found: " + script->string());
  }
  if (replay && !std::filesystem::is_regular_file(*replay)) {
    throw ConfigError("replay cache not found: " + replay->string());
  }
}

PipelineConfig RunConfig::pipeline() const {
  PipelineConfig p;
  p.solver.k = k;
  p.solver.max_regen = max_regen;
  p.solver.mode = mode;
  p.fusion.tau = tau;
  return p;
}

void apply_setting(RunConfig& c, const std::string& key, const std::string& raw) {
  const std::string value = text::trim(raw);
  if (key == "tau") {
    c.tau = parse_number<double>(key, value);
  } else if (key == "top-k") {
    c.k = parse_number<std::size_t>(key, value);
  } else if (key == "max-regen") {
    c.max_regen = parse_number<int>(key, value);
  } else if (key == "jobs") {
    c.jobs = parse_number<std::size_t>(key, value);
  } else if (key == "mode") {
    c.mode = parse_mode(value);
  } else if (key == "modes") {
    c.modes.clear();
    for (const auto& m : split_list(value)) c.modes.push_back(parse_mode(m));
  } else if (key == "lang") {
    c.languages.clear();
    for (const auto& l : split_list(value)) c.languages.push_back(LanguageTag(l).code());
  } else if (key == "corpus-dir") {
    c.corpus_dir = value;
  } else if (key == "dataset") {
    c.dataset = value;
  } else if (key == "out") {
    c.out = value;
  } else if (key == "prompts") {
    c.prompts = value;
  } else if (key == "replay") {
    c.replay = value;
  } else if (key == "record") {
    c.record = value;
  } else if (key == "script") {
    c.script = value;
  } else {
    throw ConfigError("unknown setting '" + key + "'");
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (text::is_blank(line)) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_setting(config, text::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace dapt

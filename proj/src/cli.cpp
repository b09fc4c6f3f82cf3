#include "dapt/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "dapt/errors.hpp"
#include "dapt/eval.hpp"
#include "dapt/prompts.hpp"
#include "dapt/retrieval.hpp"

namespace dapt {

namespace {

struct ResolvedBackends {
  std::shared_ptr<ChatBackend> chat;
  std::shared_ptr<EmbedBackend> embed;
};

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ResolvedBackends resolve_backends(const RunConfig& config, CliEnv& env, bool need_chat) {
  ResolvedBackends b{env.chat, env.embed};
  if (config.script && (!b.chat || !b.embed)) {
    auto j = read_json_file(*config.script);
    try {
      if (!b.chat) b.chat = ScriptedChat::from_json(j.value("chat", nlohmann::json::object()));
      if (!b.embed) b.embed = ScriptedEmbedder::from_json(j.value("embed", nlohmann::json::object()));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(config.script->string() + ": " + e.what());
    }
  }
  if (!config.replay) {
    if (!b.embed) {
      auto options = http_options_from_env(BackendKind::kEmbed);
      if (!options) throw ConfigError("no embedding backend: set DAPT_EMBED_URL or pass --script");
      b.embed = std::make_shared<HttpEmbedBackend>(*options);
    }
    if (!b.chat && need_chat) {
      auto options = http_options_from_env(BackendKind::kChat);
      if (!options) throw ConfigError("no chat backend: set DAPT_CHAT_URL or pass --script");
      b.chat = std::make_shared<HttpChatBackend>(*options);
    }
  }
  if (config.replay || config.record) {
    const auto& path = config.replay ? *config.replay : *config.record;
    auto store = std::make_shared<ReplayStore>(
        path.string(), config.replay ? CacheMode::kReplay : CacheMode::kRecord);
    b.chat = std::make_shared<CachedChat>(b.chat, store);
    b.embed = std::make_shared<CachedEmbed>(b.embed, store);
  }
  return b;
}

PromptSet load_prompts(const RunConfig& config) {
  return config.prompts ? PromptSet::from_directory(config.prompts->string())
                        : PromptSet::builtin();
}

std::set<LanguageTag> required_languages(PipelineMode mode, const LanguageTag& lang) {
  switch (mode) {
    case PipelineMode::kFull:
      return {lang, english()};
    case PipelineMode::kNoDecompose:
    case PipelineMode::kNoFusion:
      return {lang};
    case PipelineMode::kTranslateQa:
      return {english()};
  }
  return {lang};
}

// Loads every corpus that exists among `langs`; absent ones are reported
// later by require_indexes.
IndexSet load_indexes(const RunConfig& config, const std::set<LanguageTag>& langs,
                      EmbedBackend& embedder, std::ostream& err) {
  IndexSet indexes;
  for (const auto& lang : langs) {
    auto path = corpus_path(config.corpus_dir, config.dataset, lang);
    if (!std::filesystem::exists(path)) continue;
    IndexBuildStats stats;
    auto index = build_index(path, lang, embedder, {}, &stats);
    err << "loaded " << lang.code() << " index: " << index.size() << " docs"
        << (stats.sidecar_hit ? " (cached)" : "") << '\n';
    indexes.emplace(lang, std::make_shared<const CorpusIndex>(std::move(index)));
  }
  return indexes;
}

void require_indexes(const RunConfig& config, const IndexSet& indexes, PipelineMode mode,
                     const LanguageTag& lang) {
  for (const auto& need : required_languages(mode, lang)) {
    if (!indexes.contains(need)) {
      throw MissingIndex("mode " + std::string(to_string(mode)) + " needs the '" + need.code() +
                         "' corpus " +
                         corpus_path(config.corpus_dir, config.dataset, need).string());
    }
  }
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const MissingIndex& e) {
    err << "MissingIndex: " << e.what() << '\n';
    return kExitUsage;
  } catch (const MalformedRecord& e) {
    err << "MalformedRecord: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << e.kind() << ": " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace

int cmd_index(const std::filesystem::path& corpus, const RunConfig& config, CliEnv& env) {
  return guarded(env.err, [&] {
    config.validate();
    if (!std::filesystem::exists(corpus)) throw IoError("corpus not found: " + corpus.string());
    auto backends = resolve_backends(config, env, false);
    IndexBuildStats stats;
    LanguageTag lang(config.languages.front());
    auto index = build_index(corpus, lang, *backends.embed, {}, &stats);
    env.out << "indexed " << index.size() << " docs (dim " << index.dimension() << ", "
            << (stats.sidecar_hit ? "cache hit" : "embedded " + std::to_string(stats.embedded))
            << ")\n";
    return kExitOk;
  });
}

int cmd_ask(const std::string& question, const RunConfig& config, CliEnv& env) {
  return guarded(env.err, [&] {
    config.validate();
    LanguageTag lang(config.languages.front());
    Query q(question, lang);
    auto backends = resolve_backends(config, env, true);
    auto prompts = load_prompts(config);
    auto indexes = load_indexes(config, {lang, english()}, *backends.embed, env.err);
    require_indexes(config, indexes, config.mode, lang);

    Solver solver({*backends.chat, *backends.embed}, prompts, indexes, config.pipeline());
    auto trace = solver.answer_question(q, "ask");
    auto path = write_trace(trace, config.out, config.dataset);
    env.err << "trace: " << path.string() << '\n';
    if (!trace.ok()) {
      env.err << *trace.error_kind << ": " << *trace.error << '\n';
      return kExitFailure;
    }
    env.out << trace.final_answer << '\n';
    return kExitOk;
  });
}

int cmd_bench(const std::filesystem::path& benchmark, const RunConfig& config, CliEnv& env) {
  return guarded(env.err, [&] {
    config.validate();
    auto items = load_benchmark(benchmark);
    if (items.empty()) throw IoError("benchmark " + benchmark.string() + " has no items");
    auto backends = resolve_backends(config, env, true);
    auto prompts = load_prompts(config);

    std::set<LanguageTag> wanted{english()};
    for (const auto& code : config.languages) wanted.insert(LanguageTag(code));
    auto indexes = load_indexes(config, wanted, *backends.embed, env.err);
    for (auto mode : config.sweep()) {
      for (const auto& code : config.languages) require_indexes(config, indexes, mode, LanguageTag(code));
    }

    int status = kExitOk;
    for (auto mode : config.sweep()) {
      RunConfig mode_config = config;
      mode_config.mode = mode;
      Solver solver({*backends.chat, *backends.embed}, prompts, indexes, mode_config.pipeline());
      for (const auto& code : config.languages) {
        LanguageTag lang(code);
        BenchmarkOptions options{config.dataset, config.jobs, true};
        auto report = run_benchmark(items, lang, solver, config.out / to_string(mode) / lang.code(),
                                    options);
        env.out << format_report_row(report) << '\n';
        if (report.errors > 0) {
          env.err << report.errors << " of " << report.n << " items failed ("
                  << to_string(mode) << ", " << lang.code() << ")\n";
          status = kExitFailure;
        }
      }
    }
    return status;
  });
}

int run_cli(int argc, const char* const* argv, CliEnv& env) {
  static const std::pair<const char*, const char*> kSharedKeys[] = {
      {"tau", "fusion threshold (default 0.8)"},
      {"top-k", "passages retrieved per query (default 3)"},
      {"max-regen", "regeneration attempts per node (default 2)"},
      {"mode", "full | no_decompose | no_fusion | translate_qa"},
      {"modes", "comma list of modes to sweep (bench)"},
      {"lang", "question language; a comma list for bench"},
      {"jobs", "parallel benchmark items (default 4)"},
      {"corpus-dir", "directory holding <dataset>.<lang>.jsonl"},
      {"dataset", "corpus and trace name prefix"},
      {"out", "output directory"},
      {"prompts", "directory overriding the built-in prompts"},
      {"replay", "answer model calls from this cache only"},
      {"record", "append model calls to this cache"},
      {"script", "scripted backends JSON, for offline runs"}};
  CLI::App app{"Bilingual multi-hop question answering over sub-question graphs", "dapt"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::string> values;
  std::string corpus;
  std::string question;
  std::string benchmark;

  auto add_shared = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value config file");
    for (const auto& [key, help] : kSharedKeys) {
      sub->add_option(std::string("--") + key, values[key], help);
    }
  };
  auto* index = app.add_subcommand("index", "embed a corpus and write its index sidecar");
  index->add_option("corpus", corpus, "corpus JSONL")->required();
  add_shared(index);
  auto* ask = app.add_subcommand("ask", "answer one question");
  ask->add_option("question", question, "question text")->required();
  add_shared(ask);
  auto* bench = app.add_subcommand("bench", "score a benchmark file");
  bench->add_option("benchmark", benchmark, "benchmark JSONL")->required();
  add_shared(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, env.out, env.err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* sub = index->parsed() ? index : ask->parsed() ? ask : bench;
  RunConfig config;
  int status = guarded(env.err, [&] {
    if (!config_path.empty()) apply_config_file(config, config_path);
    for (const auto& [key, help] : kSharedKeys) {
      if (sub->count(std::string("--") + key) > 0) apply_setting(config, key, values[key]);
    }
    return kExitOk;
  });
  if (status != kExitOk) return status;

  if (sub == index) return cmd_index(corpus, config, env);
  if (sub == ask) return cmd_ask(question, config, env);
  return cmd_bench(benchmark, config, env);
}

}  // namespace dapt

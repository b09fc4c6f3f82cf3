#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dapt/backends.hpp"
#include "dapt/qgraph.hpp"
#include "dapt/solver.hpp"

namespace dapt {

/// Lowercase, drop punctuation, drop a/an/the (English only), collapse
/// whitespace.
std::string normalize_answer(const std::string& text, const LanguageTag& lang);

/// Whitespace tokens, or one token per character for zh and th.
std::vector<std::string> answer_tokens(const std::string& normalized, const LanguageTag& lang);

int em_score(const std::string& prediction, const std::vector<std::string>& golds,
             const LanguageTag& lang);
double f1_score(const std::string& prediction, const std::vector<std::string>& golds,
                const LanguageTag& lang);

struct BenchmarkItem {
  std::string qid;
  std::map<LanguageTag, std::string> questions;
  std::vector<std::string> gold_answers;
  std::optional<LanguageTag> gold_lang;
};

/// JSONL of {"qid", "questions": {lang: text}, "answers": [..], "gold_lang"?}.
/// Throws IoError or MalformedRecord.
std::vector<BenchmarkItem> load_benchmark(const std::filesystem::path& path);

struct EvalRecord {
  std::string qid;
  LanguageTag lang{"en"};
  std::string question;
  std::string prediction;
  std::vector<std::string> gold_answers;
  std::string normalized_prediction;
  std::vector<std::string> normalized_golds;
  int em = 0;
  double f1 = 0.0;
  double latency_ms = 0.0;
  std::map<std::string, TokenUsage> token_usage;  // keyed by exchange tag
  std::optional<std::string> error_kind;
  std::optional<std::string> error;
};

nlohmann::json to_json(const EvalRecord& record);

/// Token usage of every LLM exchange in a trace, grouped by tag.
std::map<std::string, TokenUsage> usage_by_stage(const ReasoningTrace& trace);

struct BenchmarkReport {
  std::string dataset;
  LanguageTag lang{"en"};
  PipelineMode mode = PipelineMode::kFull;
  std::size_t n = 0;
  double em = 0.0;  // mean, in [0, 1]
  double f1 = 0.0;
  std::size_t errors = 0;
  std::vector<EvalRecord> records;  // in input order
};

nlohmann::json to_json(const BenchmarkReport& report);

/// One table row, e.g. "hotpot  de  full          n=10  EM 100.0 F1 100.0  errors=0".
std::string format_report_row(const BenchmarkReport& report);

struct BenchmarkOptions {
  std::string dataset = "bench";
  std::size_t jobs = 4;
  bool write_traces = true;
};

/// Answers every item in `lang`, scores it and writes `records.<lang>.jsonl`,
/// `report.json` and (optionally) `traces/` under `out_dir`. Per-item
/// failures score 0 and are counted in `errors`. Throws IoError.
BenchmarkReport run_benchmark(const std::vector<BenchmarkItem>& items, const LanguageTag& lang,
                              const Solver& solver, const std::filesystem::path& out_dir,
                              const BenchmarkOptions& options = {});

}  // namespace dapt

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dapt/backends.hpp"
#include "dapt/fusion.hpp"
#include "dapt/llm.hpp"
#include "dapt/planning.hpp"
#include "dapt/prompts.hpp"
#include "dapt/qgraph.hpp"
#include "dapt/retrieval.hpp"

namespace dapt {

enum class PipelineMode { kFull, kNoDecompose, kNoFusion, kTranslateQa };

const char* to_string(PipelineMode mode) noexcept;
/// Accepts full, no_decompose, no_fusion, translate_qa. Throws ConfigError.
PipelineMode parse_mode(std::string_view name);

struct SolverConfig {
  std::size_t k = 3;
  int max_regen = 2;
  PipelineMode mode = PipelineMode::kFull;

  void validate() const;
};

struct PipelineConfig {
  SolverConfig solver;
  FusionConfig fusion;
  PlanningConfig planning;
};

struct CandidateAnswer {
  std::string text;  // empty when the model abstained
  LanguageTag lang;
  std::vector<std::string> supporting_docs;
  NodeId node_id;
};

struct ScoredDocId {
  std::string id;
  double score = 0.0;
};

/// One retrieve-then-answer path of a step.
struct PathRecord {
  LanguageTag lang;
  std::string query;
  std::vector<ScoredDocId> retrieved;
  CandidateAnswer candidate;
};

struct RegenAttempt {
  std::string text;
  bool accepted = false;
};

struct StepRecord {
  NodeId node_id;
  std::vector<NodeId> aliases;  // ids absorbed during fusion
  std::map<LanguageTag, std::string> texts;
  std::vector<NodeId> dependencies;
  std::vector<PathRecord> paths;
  std::optional<bool> judge;       // bilingual consistency verdict
  std::optional<bool> sufficient;  // monolingual sufficiency verdict
  std::vector<RegenAttempt> regens;
  std::string answer;
  std::string answer_source;  // language code of the accepted candidate or "regen"
  bool low_confidence = false;
  ExchangeLog exchanges;

  /// The query used for `lang`, else the first path's query.
  const std::string& question_for(const LanguageTag& lang) const;
};

struct SynthesisRecord {
  LanguageTag lang;
  std::string query;
  std::vector<ScoredDocId> retrieved;
  std::string answer;
  ExchangeLog exchanges;
};

struct ReasoningTrace {
  explicit ReasoningTrace(Query q) : question(std::move(q)) {}

  std::string qid;
  Query question;
  PipelineMode mode = PipelineMode::kFull;
  SolverConfig solver_config;
  double tau = 0.8;
  std::optional<Query> translated;
  std::optional<SubQuestionGraph> source_graph;
  std::optional<SubQuestionGraph> english_graph;
  std::optional<SubQuestionGraph> fused_graph;
  std::vector<FusionMerge> merges;
  std::vector<NodeId> sequence;
  std::vector<StepRecord> steps;
  std::optional<SynthesisRecord> synthesis;
  ExchangeLog planning_exchanges;
  ExchangeLog output_exchanges;  // back-translation in translate_qa mode
  std::string final_answer;
  std::optional<std::string> error_kind;
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
};

nlohmann::json to_json(const ReasoningTrace& trace);

/// `<dir>/<dataset>.<lang>.<qid>.trace.json`; returns the written path.
std::filesystem::path write_trace(const ReasoningTrace& trace, const std::filesystem::path& dir,
                                  const std::string& dataset);

struct DependencyAnswer {
  NodeId id;
  std::string question;
  std::string answer;
};

/// Builds the retrieval query for `node` in `lang`. Placeholders resolve
/// through `answers` (keyed by node id, including fusion aliases); a bare
/// `<k>` means `<lang:k>`. Unresolvable placeholders take
/// `previous_answer`, or are dropped when there is none. Text without
/// placeholders gets a "Given: q → a" suffix for each dependency.
std::string combine(const std::map<NodeId, std::string>& answers, const QNode& node,
                    const LanguageTag& lang, std::span<const DependencyAnswer> dependencies = {},
                    const std::optional<std::string>& previous_answer = std::nullopt);

/// Source-language candidate unless it is empty. Throws BothEmpty.
CandidateAnswer select(const CandidateAnswer& source, const CandidateAnswer& english);

/// True iff the first word of `reply` is "yes" (case-insensitive).
bool parse_verdict(std::string_view reply);

/// Borrowed chat and embedding backends; must outlive the solver.
struct Backends {
  ChatBackend& chat;
  EmbedBackend& embed;
};

class Solver {
 public:
  Solver(Backends backends, const PromptSet& prompts, IndexSet indexes, PipelineConfig config);

  /// Runs the configured pipeline. Failures are recorded in the trace rather
  /// than thrown.
  ReasoningTrace answer_question(const Query& q, const std::string& qid = "q") const;

  /// Solves one node whose predecessors are already in `trace.steps`, and
  /// appends its step. Throws MissingIndex or BackendError.
  const StepRecord& solve_node(const QNode& node, const SubQuestionGraph& graph,
                               const LanguageTag& source_lang, ReasoningTrace& trace) const;

  /// Identical texts short-circuit to true without a backend call.
  bool judge(const CandidateAnswer& source, const CandidateAnswer& english,
             const StepRecord& step, ExchangeLog* log) const;

  /// Single-candidate check used for monolingual nodes and regen results.
  bool sufficient(const std::string& question, const std::string& answer,
                  const std::string& context, ExchangeLog* log) const;

  /// Regenerates with the reasoning path and both paths' passages, re-judging
  /// each attempt; after max_regen rejections returns the source-language
  /// candidate (English if that is empty) and flags the step low-confidence.
  CandidateAnswer regen(StepRecord& step, const ReasoningTrace& trace,
                        const LanguageTag& source_lang) const;

  /// Final answer from the solved chain plus top-k passages for the original
  /// question. `index` may be null or empty.
  std::string synthesize_final(const Query& q, ReasoningTrace& trace,
                               const CorpusIndex* index) const;

  const PipelineConfig& config() const noexcept { return config_; }

 private:
  const CorpusIndex& index_for(const LanguageTag& lang) const;
  const CorpusIndex* find_index(const LanguageTag& lang) const;
  void run_full(ReasoningTrace& trace) const;
  void run_no_decompose(ReasoningTrace& trace) const;
  void run_no_fusion(ReasoningTrace& trace) const;
  void run_translate_qa(ReasoningTrace& trace) const;
  void solve_sequence(const SubQuestionGraph& graph, const LanguageTag& source_lang,
                      ReasoningTrace& trace) const;

  Backends backends_;
  const PromptSet& prompts_;
  IndexSet indexes_;
  PipelineConfig config_;
  Planner planner_;
};

}  // namespace dapt

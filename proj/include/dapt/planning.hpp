#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dapt/backends.hpp"
#include "dapt/llm.hpp"
#include "dapt/prompts.hpp"
#include "dapt/qgraph.hpp"

namespace dapt {

struct Query {
  Query(std::string text, LanguageTag lang);

  std::string text;
  LanguageTag lang;

  bool operator==(const Query&) const = default;
};

/// The JSON object the decomposition prompt asks for. Indices are 1-based.
struct DecompositionOutput {
  std::vector<std::string> sub_questions;
  std::vector<std::pair<int, int>> dependencies;
};

/// Extracts and parses the first JSON object in an LLM reply (code fences and
/// surrounding prose are tolerated). Returns nullopt when the reply does not
/// contain a well-typed object.
std::optional<DecompositionOutput> parse_decomposition(std::string_view reply);

// --- answer placeholders ---------------------------------------------------
//
// Sub-question texts refer to earlier answers with `<k>` (k = 1-based
// position in the decomposition). Planning rewrites them to node ids, e.g.
// `<de:2>`, so references survive fusion.

struct Placeholder {
  std::size_t pos = 0;
  std::size_t length = 0;
  std::string ref;  // "2" or "de:2"

  bool qualified() const { return ref.find(':') != std::string::npos; }
};

std::vector<Placeholder> find_placeholders(std::string_view text);

/// `<k>` -> `<prefix:k>`; qualified references are kept.
std::string qualify_placeholders(std::string_view text, std::string_view prefix);

/// `<de:2>` -> `<2>`; used for embedding and display.
std::string plain_placeholders(std::string_view text);

/// Node id for position k of a decomposition: "<prefix>:<k>".
NodeId plan_node_id(std::string_view prefix, std::size_t k);

/// Builds a validated graph, or returns nullopt (with a reason) when the
/// output is empty, too large, references out-of-range indices or is cyclic.
/// Placeholders imply dependency edges.
std::optional<SubQuestionGraph> graph_from_decomposition(const DecompositionOutput& output,
                                                         const LanguageTag& lang,
                                                         std::string_view id_prefix,
                                                         NodeOrigin origin,
                                                         std::size_t max_nodes,
                                                         std::string* reason = nullptr);

/// Single node holding the question itself.
SubQuestionGraph fallback_graph(const Query& q, std::string_view id_prefix, NodeOrigin origin);

struct PlanningConfig {
  std::size_t max_nodes = 12;
  int max_retries = 2;
};

struct Plan {
  Query english_query;
  SubQuestionGraph source;
  SubQuestionGraph english;
};

/// Id prefix of the English-side graph. When the source query is English
/// the two sides would collide, so the translated side uses "en.t".
std::string english_side_prefix(const LanguageTag& source_lang);

class Planner {
 public:
  Planner(ChatBackend& chat, const PromptSet& prompts, PlanningConfig config = {});

  /// Identity (no backend call) when q.lang == target. A blank reply is
  /// retried once, then EmptyTranslation.
  Query translate(const Query& q, const LanguageTag& target, ExchangeLog* log = nullptr) const;

  /// Retries unparseable or invalid output up to max_retries times, then
  /// falls back to the single-node graph. Only transport failures throw.
  SubQuestionGraph decompose(const Query& q, std::string_view id_prefix, NodeOrigin origin,
                             ExchangeLog* log = nullptr) const;
  SubQuestionGraph decompose(const Query& q, ExchangeLog* log = nullptr) const {
    return decompose(q, q.lang.code(), NodeOrigin::kSource, log);
  }

  /// (decompose(q), decompose(translate(q, en))).
  Plan plan(const Query& q, ExchangeLog* log = nullptr) const;

  const PlanningConfig& config() const noexcept { return config_; }

 private:
  ChatBackend& chat_;
  const PromptSet& prompts_;
  PlanningConfig config_;
};

}  // namespace dapt

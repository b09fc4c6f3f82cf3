#pragma once

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace dapt {

/// ISO 639-1 style language code. Stored lowercase; never empty.
class LanguageTag {
 public:
  explicit LanguageTag(std::string_view code);

  const std::string& code() const noexcept { return code_; }
  bool is_english() const noexcept { return code_ == "en"; }

  auto operator<=>(const LanguageTag&) const = default;

 private:
  std::string code_;
};

inline const LanguageTag& english() {
  static const LanguageTag tag("en");
  return tag;
}

using NodeId = std::string;

enum class NodeOrigin { kSource, kEnglish, kFused };

const char* to_string(NodeOrigin origin) noexcept;
NodeOrigin node_origin_from_string(std::string_view name);

struct AnswerRecord {
  std::string text;
  std::string provenance;  // language of the accepted candidate, or "regen"
  bool low_confidence = false;

  bool operator==(const AnswerRecord&) const = default;
};

/// One sub-question. After fusion a node may carry two phrasings.
struct QNode {
  NodeId id;
  std::map<LanguageTag, std::string> texts;
  NodeOrigin origin = NodeOrigin::kSource;
  // Ids of nodes merged into this one during fusion. Placeholders written
  // against those ids resolve to this node's answer.
  std::vector<NodeId> absorbed;
  std::optional<AnswerRecord> answer;

  /// Text in `lang`, or the lexicographically first text when absent.
  const std::string& text_for(const LanguageTag& lang) const;
  bool has_text(const LanguageTag& lang) const { return texts.contains(lang); }

  bool operator==(const QNode&) const = default;
};

using Edge = std::pair<NodeId, NodeId>;

/// Directed acyclic graph of sub-questions. An edge (u, v) means the answer
/// to u is needed to solve v. Every public mutator keeps the graph acyclic.
class SubQuestionGraph {
 public:
  /// Throws DuplicateNode on a repeated id, std::invalid_argument on a node
  /// without texts or with a blank text.
  void add_node(QNode node);

  /// Throws UnknownNode, SelfLoop or WouldCreateCycle. Adding an existing
  /// edge is a no-op.
  void add_edge(const NodeId& from, const NodeId& to);

  bool contains(const NodeId& id) const { return nodes_.contains(id); }
  bool has_edge(const NodeId& from, const NodeId& to) const {
    return edges_.contains({from, to});
  }
  bool would_create_cycle(const NodeId& from, const NodeId& to) const;

  const QNode& node(const NodeId& id) const;
  QNode& node(const NodeId& id);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  const std::map<NodeId, QNode>& nodes() const noexcept { return nodes_; }
  const std::set<Edge>& edges() const noexcept { return edges_; }
  std::vector<NodeId> node_ids() const;

  std::set<NodeId> predecessors(const NodeId& id) const;
  std::set<NodeId> successors(const NodeId& id) const;

  /// Kahn's algorithm; among ready nodes the smallest id goes first.
  std::vector<NodeId> topological_sort() const;

  /// Merges `absorbed` into `keep`: edges touching `absorbed` are redirected
  /// to `keep`, self-loops dropped, duplicates collapsed, and `absorbed`
  /// removed. Node payloads are left to the caller. Throws WouldCreateCycle
  /// (graph unchanged) when the contraction would close a cycle.
  void contract(const NodeId& keep, const NodeId& absorbed);

  /// True when contract(keep, absorbed) would succeed.
  bool can_contract(const NodeId& keep, const NodeId& absorbed) const;

  /// Disjoint union. Throws DuplicateNode if ids overlap.
  static SubQuestionGraph disjoint_union(const SubQuestionGraph& a,
                                         const SubQuestionGraph& b);

  bool operator==(const SubQuestionGraph&) const = default;

 private:
  std::set<Edge> contracted_edges(const NodeId& keep,
                                  const NodeId& absorbed) const;
  bool reachable(const NodeId& from, const NodeId& to) const;

  std::map<NodeId, QNode> nodes_;
  std::set<Edge> edges_;
};

bool is_acyclic(const std::set<NodeId>& nodes, const std::set<Edge>& edges);

nlohmann::json to_json(const QNode& node);
nlohmann::json to_json(const SubQuestionGraph& graph);
SubQuestionGraph graph_from_json(const nlohmann::json& j);

/// Graphviz rendering for debugging.
std::string to_dot(const SubQuestionGraph& graph);

}  // namespace dapt

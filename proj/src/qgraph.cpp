#include "dapt/qgraph.hpp"

#include <algorithm>
#include <cctype>
#include <queue>
#include <sstream>

#include "dapt/errors.hpp"

namespace dapt {

namespace {

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace

LanguageTag::LanguageTag(std::string_view code) : code_(code) {
  if (code_.empty()) throw std::invalid_argument("language tag must not be empty");
  for (auto& c : code_) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

const char* to_string(NodeOrigin origin) noexcept {
  switch (origin) {
    case NodeOrigin::kSource:
      return "source";
    case NodeOrigin::kEnglish:
      return "english";
    case NodeOrigin::kFused:
      return "fused";
  }
  return "source";
}

NodeOrigin node_origin_from_string(std::string_view name) {
  if (name == "source") return NodeOrigin::kSource;
  if (name == "english") return NodeOrigin::kEnglish;
  if (name == "fused") return NodeOrigin::kFused;
  throw std::invalid_argument("unknown node origin: " + std::string(name));
}

const std::string& QNode::text_for(const LanguageTag& lang) const {
  if (auto it = texts.find(lang); it != texts.end()) return it->second;
  if (texts.empty()) throw std::logic_error("node " + id + " has no text");
  return texts.begin()->second;
}

void SubQuestionGraph::add_node(QNode node) {
  if (node.texts.empty()) {
    throw std::invalid_argument("node " + node.id + " has no text");
  }
  for (const auto& [lang, text] : node.texts) {
    if (is_blank(text)) {
      throw std::invalid_argument("node " + node.id + " has a blank " +
                                  lang.code() + " text");
    }
  }
  if (nodes_.contains(node.id)) throw DuplicateNode("duplicate node id " + node.id);
  auto id = node.id;
  nodes_.emplace(std::move(id), std::move(node));
}

void SubQuestionGraph::add_edge(const NodeId& from, const NodeId& to) {
  if (!contains(from)) throw UnknownNode(from);
  if (!contains(to)) throw UnknownNode(to);
  if (from == to) throw SelfLoop(from);
  if (has_edge(from, to)) return;
  if (reachable(to, from)) {
    throw WouldCreateCycle("edge " + from + " -> " + to + " closes a cycle");
  }
  edges_.emplace(from, to);
}

bool SubQuestionGraph::would_create_cycle(const NodeId& from, const NodeId& to) const {
  return from == to || reachable(to, from);
}

const QNode& SubQuestionGraph::node(const NodeId& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw UnknownNode(id);
  return it->second;
}

QNode& SubQuestionGraph::node(const NodeId& id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw UnknownNode(id);
  return it->second;
}

std::vector<NodeId> SubQuestionGraph::node_ids() const {
  std::vector<NodeId> ids;
  ids.reserve(nodes_.size());
  for (const auto& [id, _] : nodes_) ids.push_back(id);
  return ids;
}

std::set<NodeId> SubQuestionGraph::predecessors(const NodeId& id) const {
  if (!contains(id)) throw UnknownNode(id);
  std::set<NodeId> out;
  for (const auto& [from, to] : edges_) {
    if (to == id) out.insert(from);
  }
  return out;
}

std::set<NodeId> SubQuestionGraph::successors(const NodeId& id) const {
  if (!contains(id)) throw UnknownNode(id);
  std::set<NodeId> out;
  for (auto it = edges_.lower_bound({id, NodeId{}});
       it != edges_.end() && it->first == id; ++it) {
    out.insert(it->second);
  }
  return out;
}

bool SubQuestionGraph::reachable(const NodeId& from, const NodeId& to) const {
  std::set<NodeId> seen{from};
  std::vector<NodeId> stack{from};
  while (!stack.empty()) {
    NodeId cur = std::move(stack.back());
    stack.pop_back();
    if (cur == to) return true;
    for (auto it = edges_.lower_bound({cur, NodeId{}});
         it != edges_.end() && it->first == cur; ++it) {
      if (seen.insert(it->second).second) stack.push_back(it->second);
    }
  }
  return false;
}

namespace {

// Returns the order, or nullopt when a cycle remains.
std::optional<std::vector<NodeId>> kahn(const std::set<NodeId>& nodes,
                                        const std::set<Edge>& edges) {
  std::map<NodeId, std::size_t> indegree;
  std::map<NodeId, std::vector<NodeId>> out;
  for (const auto& id : nodes) indegree[id] = 0;
  for (const auto& [from, to] : edges) {
    ++indegree[to];
    out[from].push_back(to);
  }
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) ready.push(id);
  }
  std::vector<NodeId> order;
  order.reserve(nodes.size());
  while (!ready.empty()) {
    NodeId cur = ready.top();
    ready.pop();
    for (const auto& next : out[cur]) {
      if (--indegree[next] == 0) ready.push(next);
    }
    order.push_back(std::move(cur));
  }
  if (order.size() != nodes.size()) return std::nullopt;
  return order;
}

}  // namespace

bool is_acyclic(const std::set<NodeId>& nodes, const std::set<Edge>& edges) {
  return kahn(nodes, edges).has_value();
}

std::vector<NodeId> SubQuestionGraph::topological_sort() const {
  std::set<NodeId> ids;
  for (const auto& [id, _] : nodes_) ids.insert(id);
  auto order = kahn(ids, edges_);
  if (!order) throw CycleDetected("sub-question graph contains a cycle");
  return *order;
}

std::set<Edge> SubQuestionGraph::contracted_edges(const NodeId& keep,
                                                  const NodeId& absorbed) const {
  std::set<Edge> out;
  for (auto [from, to] : edges_) {
    if (from == absorbed) from = keep;
    if (to == absorbed) to = keep;
    if (from != to) out.emplace(std::move(from), std::move(to));
  }
  return out;
}

bool SubQuestionGraph::can_contract(const NodeId& keep, const NodeId& absorbed) const {
  if (!contains(keep)) throw UnknownNode(keep);
  if (!contains(absorbed)) throw UnknownNode(absorbed);
  if (keep == absorbed) return false;
  std::set<NodeId> ids;
  for (const auto& [id, _] : nodes_) {
    if (id != absorbed) ids.insert(id);
  }
  return is_acyclic(ids, contracted_edges(keep, absorbed));
}

void SubQuestionGraph::contract(const NodeId& keep, const NodeId& absorbed) {
  if (keep == absorbed) throw SelfLoop(keep);
  if (!can_contract(keep, absorbed)) {
    throw WouldCreateCycle("merging " + absorbed + " into " + keep +
                           " closes a cycle");
  }
  edges_ = contracted_edges(keep, absorbed);
  nodes_.erase(absorbed);
}

SubQuestionGraph SubQuestionGraph::disjoint_union(const SubQuestionGraph& a,
                                                  const SubQuestionGraph& b) {
  SubQuestionGraph out = a;
  for (const auto& [id, node] : b.nodes_) out.add_node(node);
  out.edges_.insert(b.edges_.begin(), b.edges_.end());
  return out;
}

nlohmann::json to_json(const QNode& node) {
  nlohmann::json texts = nlohmann::json::object();
  for (const auto& [lang, text] : node.texts) texts[lang.code()] = text;
  nlohmann::json j = {{"id", node.id}, {"texts", texts}, {"origin", to_string(node.origin)}};
  if (!node.absorbed.empty()) j["absorbed"] = node.absorbed;
  if (node.answer) {
    j["answer"] = {{"text", node.answer->text},
                   {"provenance", node.answer->provenance},
                   {"low_confidence", node.answer->low_confidence}};
  }
  return j;
}

nlohmann::json to_json(const SubQuestionGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& [_, node] : graph.nodes()) nodes.push_back(to_json(node));
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [from, to] : graph.edges()) edges.push_back({from, to});
  return {{"nodes", nodes}, {"edges", edges}};
}

SubQuestionGraph graph_from_json(const nlohmann::json& j) {
  SubQuestionGraph graph;
  for (const auto& jn : j.at("nodes")) {
    QNode node;
    node.id = jn.at("id").get<std::string>();
    for (const auto& [lang, text] : jn.at("texts").items()) {
      node.texts.emplace(LanguageTag(lang), text.get<std::string>());
    }
    node.origin = node_origin_from_string(jn.value("origin", "source"));
    if (jn.contains("absorbed")) node.absorbed = jn["absorbed"].get<std::vector<NodeId>>();
    if (jn.contains("answer")) {
      const auto& ja = jn["answer"];
      node.answer = AnswerRecord{ja.at("text").get<std::string>(),
                                 ja.value("provenance", ""),
                                 ja.value("low_confidence", false)};
    }
    graph.add_node(std::move(node));
  }
  for (const auto& je : j.at("edges")) {
    graph.add_edge(je.at(0).get<std::string>(), je.at(1).get<std::string>());
  }
  return graph;
}

std::string to_dot(const SubQuestionGraph& graph) {
  std::ostringstream os;
  os << "digraph subquestions {\n  rankdir=LR;\n";
  for (const auto& [id, node] : graph.nodes()) {
    std::string label = id;
    for (const auto& [lang, text] : node.texts) {
      label += "\n[" + lang.code() + "] " + text;
    }
    os << "  \"" << dot_escape(id) << "\" [label=\"" << dot_escape(label) << "\"";
    if (node.origin == NodeOrigin::kFused) os << ", style=bold";
    os << "];\n";
  }
  for (const auto& [from, to] : graph.edges()) {
    os << "  \"" << dot_escape(from) << "\" -> \"" << dot_escape(to) << "\";\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace dapt

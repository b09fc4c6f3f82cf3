#include "dapt/planning.hpp"

#include <algorithm>
#include <cctype>

#include "dapt/errors.hpp"
#include "dapt/text.hpp"

namespace dapt {

Query::Query(std::string text_in, LanguageTag lang_in)
    : text(std::move(text_in)), lang(std::move(lang_in)) {
  if (text::is_blank(text)) throw std::invalid_argument("query text must not be blank");
}

std::optional<DecompositionOutput> parse_decomposition(std::string_view reply) {
  auto open = reply.find('{');
  auto close = reply.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    return std::nullopt;
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(reply.substr(open, close - open + 1));
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (!j.is_object() || !j.contains("sub_questions") || !j["sub_questions"].is_array()) {
    return std::nullopt;
  }
  DecompositionOutput out;
  for (const auto& q : j["sub_questions"]) {
    if (!q.is_string()) return std::nullopt;
    out.sub_questions.push_back(text::trim(q.get<std::string>()));
  }
  if (j.contains("dependencies")) {
    const auto& deps = j["dependencies"];
    if (!deps.is_array()) return std::nullopt;
    for (const auto& d : deps) {
      if (!d.is_array() || d.size() != 2 || !d[0].is_number_integer() ||
          !d[1].is_number_integer()) {
        return std::nullopt;
      }
      out.dependencies.emplace_back(d[0].get<int>(), d[1].get<int>());
    }
  }
  return out;
}

namespace {

bool valid_ref(std::string_view ref) {
  auto colon = ref.find(':');
  std::string_view number = colon == std::string_view::npos ? ref : ref.substr(colon + 1);
  if (number.empty() || number.size() > 6) return false;
  if (!std::all_of(number.begin(), number.end(),
                   [](unsigned char c) { return std::isdigit(c) != 0; })) {
    return false;
  }
  if (colon == std::string_view::npos) return true;
  auto prefix = ref.substr(0, colon);
  return !prefix.empty() && std::all_of(prefix.begin(), prefix.end(), [](unsigned char c) {
    return std::islower(c) || std::isdigit(c) || c == '.' || c == '-' || c == '_' || c == '+';
  });
}

template <typename Fn>
std::string rewrite_placeholders(std::string_view text, Fn&& fn) {
  std::string out;
  std::size_t pos = 0;
  for (const auto& p : find_placeholders(text)) {
    out.append(text.substr(pos, p.pos - pos));
    out += fn(p);
    pos = p.pos + p.length;
  }
  out.append(text.substr(pos));
  return out;
}

}  // namespace

std::vector<Placeholder> find_placeholders(std::string_view text) {
  std::vector<Placeholder> out;
  std::size_t pos = 0;
  while ((pos = text.find('<', pos)) != std::string_view::npos) {
    auto close = text.find('>', pos + 1);
    if (close == std::string_view::npos) break;
    auto ref = text.substr(pos + 1, close - pos - 1);
    if (valid_ref(ref)) {
      out.push_back({pos, close - pos + 1, std::string(ref)});
      pos = close + 1;
    } else {
      ++pos;
    }
  }
  return out;
}

std::string qualify_placeholders(std::string_view text, std::string_view prefix) {
  return rewrite_placeholders(text, [&](const Placeholder& p) {
    return p.qualified() ? "<" + p.ref + ">" : "<" + std::string(prefix) + ":" + p.ref + ">";
  });
}

std::string plain_placeholders(std::string_view text) {
  return rewrite_placeholders(text, [](const Placeholder& p) {
    return "<" + p.ref.substr(p.ref.find(':') + 1) + ">";
  });
}

NodeId plan_node_id(std::string_view prefix, std::size_t k) {
  return std::string(prefix) + ":" + std::to_string(k);
}

std::optional<SubQuestionGraph> graph_from_decomposition(const DecompositionOutput& output,
                                                         const LanguageTag& lang,
                                                         std::string_view id_prefix,
                                                         NodeOrigin origin,
                                                         std::size_t max_nodes,
                                                         std::string* reason) {
  auto fail = [&](std::string why) -> std::optional<SubQuestionGraph> {
    if (reason) *reason = std::move(why);
    return std::nullopt;
  };
  const std::size_t n = output.sub_questions.size();
  if (n == 0) return fail("no sub-questions");
  if (n > max_nodes) return fail(std::to_string(n) + " sub-questions exceed the cap");

  SubQuestionGraph graph;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t k = 1; k <= n; ++k) {
    const auto& raw = output.sub_questions[k - 1];
    if (text::is_blank(raw)) return fail("sub-question " + std::to_string(k) + " is blank");
    for (const auto& p : find_placeholders(raw)) {
      if (p.qualified()) continue;
      auto ref = static_cast<std::size_t>(std::stoul(p.ref));
      if (ref < 1 || ref > n) return fail("placeholder <" + p.ref + "> out of range");
      if (ref == k) return fail("sub-question " + std::to_string(k) + " references itself");
      edges.emplace_back(ref, k);
    }
    QNode node;
    node.id = plan_node_id(id_prefix, k);
    node.texts.emplace(lang, qualify_placeholders(raw, id_prefix));
    node.origin = origin;
    graph.add_node(std::move(node));
  }
  for (auto [from, to] : output.dependencies) {
    if (from < 1 || to < 1 || static_cast<std::size_t>(from) > n ||
        static_cast<std::size_t>(to) > n) {
      return fail("dependency index out of range");
    }
    if (from == to) return fail("self dependency");
    edges.emplace_back(from, to);
  }
  for (auto [from, to] : edges) {
    try {
      graph.add_edge(plan_node_id(id_prefix, from), plan_node_id(id_prefix, to));
    } catch (const WouldCreateCycle&) {
      return fail("dependencies form a cycle");
    }
  }
  return graph;
}

SubQuestionGraph fallback_graph(const Query& q, std::string_view id_prefix, NodeOrigin origin) {
  SubQuestionGraph graph;
  QNode node;
  node.id = plan_node_id(id_prefix, 1);
  node.texts.emplace(q.lang, q.text);
  node.origin = origin;
  graph.add_node(std::move(node));
  return graph;
}

std::string english_side_prefix(const LanguageTag& source_lang) {
  return source_lang.is_english() ? "en.t" : "en";
}

Planner::Planner(ChatBackend& chat, const PromptSet& prompts, PlanningConfig config)
    : chat_(chat), prompts_(prompts), config_(config) {
  if (config_.max_nodes == 0) throw std::invalid_argument("max_nodes must be positive");
  if (config_.max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
}

Query Planner::translate(const Query& q, const LanguageTag& target, ExchangeLog* log) const {
  if (q.lang == target) return q;
  const std::map<std::string, std::string> vars = {
      {"source_language", text::language_name(q.lang.code())},
      {"target_language", text::language_name(target.code())},
      {"text", q.text}};
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto reply = text::trim(ask_llm(chat_, prompts_, "translate", vars, "translate", log));
    if (!reply.empty()) return Query(std::move(reply), target);
  }
  throw EmptyTranslation("translation of '" + q.text + "' into " + target.code() +
                         " came back blank twice");
}

SubQuestionGraph Planner::decompose(const Query& q, std::string_view id_prefix,
                                    NodeOrigin origin, ExchangeLog* log) const {
  const std::map<std::string, std::string> vars = {
      {"question", q.text}, {"max_nodes", std::to_string(config_.max_nodes)}};
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    auto reply = ask_llm(chat_, prompts_, "decompose", vars, "decompose", log, 1024);
    auto parsed = parse_decomposition(reply);
    if (!parsed) continue;
    auto graph = graph_from_decomposition(*parsed, q.lang, id_prefix, origin, config_.max_nodes);
    if (graph) return std::move(*graph);
  }
  return fallback_graph(q, id_prefix, origin);
}

Plan Planner::plan(const Query& q, ExchangeLog* log) const {
  Query english_query = translate(q, english(), log);
  auto source = decompose(q, q.lang.code(), NodeOrigin::kSource, log);
  auto english_graph =
      decompose(english_query, english_side_prefix(q.lang), NodeOrigin::kEnglish, log);
  return {std::move(english_query), std::move(source), std::move(english_graph)};
}

}  // namespace dapt

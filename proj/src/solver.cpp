#include "dapt/solver.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "dapt/errors.hpp"
#include "dapt/text.hpp"

namespace dapt {

const char* to_string(PipelineMode mode) noexcept {
  switch (mode) {
    case PipelineMode::kFull:
      return "full";
    case PipelineMode::kNoDecompose:
      return "no_decompose";
    case PipelineMode::kNoFusion:
      return "no_fusion";
    case PipelineMode::kTranslateQa:
      return "translate_qa";
  }
  return "full";
}

PipelineMode parse_mode(std::string_view name) {
  if (name == "full") return PipelineMode::kFull;
  if (name == "no_decompose") return PipelineMode::kNoDecompose;
  if (name == "no_fusion") return PipelineMode::kNoFusion;
  if (name == "translate_qa") return PipelineMode::kTranslateQa;
  throw ConfigError("unknown mode '" + std::string(name) +
                    "' (expected full, no_decompose, no_fusion or translate_qa)");
}

void SolverConfig::validate() const {
  if (k < 1) throw ConfigError("top-k must be at least 1");
  if (max_regen < 0) throw ConfigError("max-regen must be >= 0");
}

const std::string& StepRecord::question_for(const LanguageTag& lang) const {
  for (const auto& p : paths) {
    if (p.lang == lang) return p.query;
  }
  if (!paths.empty()) return paths.front().query;
  return texts.begin()->second;
}

// ---------------------------------------------------------------------------

namespace {

std::string collapse_spaces(const std::string& s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (c == ' ') {
      if (!space && !out.empty()) out.push_back(' ');
      space = true;
    } else {
      out.push_back(c);
      space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

// Strips a leading "Answer:" label and surrounding quotes; "unknown" means
// the model abstained.
std::string clean_answer(const std::string& reply) {
  std::string s = text::trim(reply);
  for (const char* label : {"Answer:", "answer:", "Final answer:", "Final Answer:"}) {
    std::string l(label);
    if (s.rfind(l, 0) == 0) s = text::trim(s.substr(l.size()));
  }
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = text::trim(s.substr(1, s.size() - 2));
  auto lowered = text::lowercase(s);
  if (lowered == "unknown" || lowered == "unknown.") return "";
  return s;
}

std::string format_context(const std::vector<RetrievedDocument>& hits) {
  if (hits.empty()) return "(no passages)";
  std::string out;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (i) out += "\n\n";
    out += "[" + std::to_string(i + 1) + "] ";
    if (!hits[i].doc->title.empty()) out += hits[i].doc->title + "\n";
    out += hits[i].doc->text;
  }
  return out;
}

std::vector<ScoredDocId> scored_ids(const std::vector<RetrievedDocument>& hits) {
  std::vector<ScoredDocId> out;
  for (const auto& h : hits) out.push_back({h.doc->id, h.score});
  return out;
}

std::vector<std::string> doc_ids(const std::vector<RetrievedDocument>& hits) {
  std::vector<std::string> out;
  for (const auto& h : hits) out.push_back(h.doc->id);
  return out;
}

std::map<NodeId, std::string> answer_book(const ReasoningTrace& trace) {
  std::map<NodeId, std::string> answers;
  for (const auto& step : trace.steps) {
    answers[step.node_id] = step.answer;
    for (const auto& alias : step.aliases) answers[alias] = step.answer;
  }
  return answers;
}

const StepRecord* find_step(const ReasoningTrace& trace, const NodeId& id) {
  for (const auto& step : trace.steps) {
    if (step.node_id == id) return &step;
  }
  return nullptr;
}

std::string solved_chain(const ReasoningTrace& trace, const LanguageTag& lang) {
  std::string out;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& step = trace.steps[i];
    if (i) out += "\n";
    out += std::to_string(i + 1) + ". " + step.question_for(lang) + " → " +
           (step.answer.empty() ? "unknown" : step.answer);
  }
  return out.empty() ? "(none)" : out;
}

}  // namespace

std::string combine(const std::map<NodeId, std::string>& answers, const QNode& node,
                    const LanguageTag& lang, std::span<const DependencyAnswer> dependencies,
                    const std::optional<std::string>& previous_answer) {
  const std::string& raw = node.text_for(lang);
  auto placeholders = find_placeholders(raw);
  if (placeholders.empty()) {
    if (dependencies.empty()) return raw;
    std::string out = raw + " Given: ";
    for (std::size_t i = 0; i < dependencies.size(); ++i) {
      if (i) out += "; ";
      out += dependencies[i].question + " → " + dependencies[i].answer;
    }
    return out;
  }
  std::string out;
  std::size_t pos = 0;
  bool dropped = false;
  for (const auto& p : placeholders) {
    out.append(raw, pos, p.pos - pos);
    NodeId ref = p.qualified() ? p.ref : lang.code() + ":" + p.ref;
    auto it = answers.find(ref);
    if (it != answers.end() && !it->second.empty()) {
      out += it->second;
    } else if (previous_answer && !previous_answer->empty()) {
      out += *previous_answer;
    } else {
      dropped = true;
    }
    pos = p.pos + p.length;
  }
  out.append(raw, pos);
  return dropped ? collapse_spaces(out) : out;
}

CandidateAnswer select(const CandidateAnswer& source, const CandidateAnswer& english) {
  if (!source.text.empty()) return source;
  if (!english.text.empty()) return english;
  throw BothEmpty("both candidate answers are empty for node " + source.node_id);
}

bool parse_verdict(std::string_view reply) { return text::first_word(reply) == "yes"; }

// ---------------------------------------------------------------------------

Solver::Solver(Backends backends, const PromptSet& prompts, IndexSet indexes,
               PipelineConfig config)
    : backends_(backends),
      prompts_(prompts),
      indexes_(std::move(indexes)),
      config_(config),
      planner_(backends.chat, prompts, config.planning) {
  config_.solver.validate();
  config_.fusion.validate();
}

const CorpusIndex* Solver::find_index(const LanguageTag& lang) const {
  auto it = indexes_.find(lang);
  return it == indexes_.end() ? nullptr : it->second.get();
}

const CorpusIndex& Solver::index_for(const LanguageTag& lang) const {
  const CorpusIndex* index = find_index(lang);
  if (!index) throw MissingIndex("no corpus index for language '" + lang.code() + "'");
  return *index;
}

bool Solver::sufficient(const std::string& question, const std::string& answer,
                        const std::string& context, ExchangeLog* log) const {
  auto reply = ask_llm(backends_.chat, prompts_, "sufficiency",
                       {{"question", question}, {"answer", answer}, {"context", context}},
                       "sufficiency", log, 64);
  return parse_verdict(reply);
}

bool Solver::judge(const CandidateAnswer& source, const CandidateAnswer& english,
                   const StepRecord& step, ExchangeLog* log) const {
  if (source.text == english.text) return true;
  auto reply = ask_llm(backends_.chat, prompts_, "judge",
                       {{"source_language", text::language_name(source.lang.code())},
                        {"source_question", step.question_for(source.lang)},
                        {"english_question", step.question_for(english.lang)},
                        {"source_answer", source.text.empty() ? "unknown" : source.text},
                        {"english_answer", english.text.empty() ? "unknown" : english.text}},
                       "judge", log, 64);
  return parse_verdict(reply);
}

CandidateAnswer Solver::regen(StepRecord& step, const ReasoningTrace& trace,
                              const LanguageTag& source_lang) const {
  std::string question;
  std::string candidates;
  std::vector<std::string> context_parts;
  std::set<std::string> seen_docs;
  std::vector<std::string> support;
  for (const auto& path : step.paths) {
    if (!question.empty()) question += "\n";
    question += "[" + path.lang.code() + "] " + path.query;
    if (!candidates.empty()) candidates += "; ";
    candidates += path.lang.code() + ": " +
                  (path.candidate.text.empty() ? "unknown" : path.candidate.text);
    const CorpusIndex* index = find_index(path.lang);
    for (const auto& scored : path.retrieved) {
      if (!seen_docs.insert(path.lang.code() + "/" + scored.id).second || !index) continue;
      for (const auto& doc : index->documents()) {
        if (doc.id != scored.id) continue;
        std::string part = "[" + std::to_string(context_parts.size() + 1) + "] ";
        if (!doc.title.empty()) part += doc.title + "\n";
        context_parts.push_back(part + doc.text);
        support.push_back(doc.id);
        break;
      }
    }
  }
  std::string context;
  for (const auto& part : context_parts) context += (context.empty() ? "" : "\n\n") + part;
  if (context.empty()) context = "(no passages)";
  const std::string path = solved_chain(trace, source_lang);

  for (int attempt = 0; attempt < config_.solver.max_regen; ++attempt) {
    auto reply = ask_llm(backends_.chat, prompts_, "regen",
                         {{"question", question},
                          {"path", path},
                          {"context", context},
                          {"candidates", candidates}},
                         "regen", &step.exchanges);
    std::string answer = clean_answer(reply);
    bool accepted = !answer.empty() && sufficient(question, answer, context, &step.exchanges);
    step.regens.push_back({answer, accepted});
    if (accepted) return CandidateAnswer{answer, source_lang, support, step.node_id};
  }

  step.low_confidence = true;
  const CandidateAnswer* fallback = &step.paths.front().candidate;
  for (const auto& p : step.paths) {
    if (p.lang == source_lang && !p.candidate.text.empty()) return p.candidate;
  }
  for (const auto& p : step.paths) {
    if (!p.candidate.text.empty()) return p.candidate;
  }
  return *fallback;
}

const StepRecord& Solver::solve_node(const QNode& node, const SubQuestionGraph& graph,
                                     const LanguageTag& source_lang,
                                     ReasoningTrace& trace) const {
  StepRecord step;
  step.node_id = node.id;
  step.aliases = node.absorbed;
  step.texts = node.texts;
  for (const auto& pred : graph.predecessors(node.id)) step.dependencies.push_back(pred);

  const auto answers = answer_book(trace);
  std::optional<std::string> previous;
  if (!trace.steps.empty()) previous = trace.steps.back().answer;

  std::vector<LanguageTag> langs;
  if (node.has_text(source_lang)) langs.push_back(source_lang);
  for (const auto& [lang, _] : node.texts) {
    if (lang != source_lang) langs.push_back(lang);
  }

  std::vector<std::string> contexts;
  for (const auto& lang : langs) {
    const CorpusIndex& index = index_for(lang);
    std::vector<DependencyAnswer> deps;
    for (const auto& pred : step.dependencies) {
      if (const StepRecord* dep = find_step(trace, pred)) {
        deps.push_back({pred, dep->question_for(lang), dep->answer});
      }
    }
    std::string query = combine(answers, node, lang, deps, previous);
    auto hits = index.retrieve(query, config_.solver.k, backends_.embed);
    std::string context = format_context(hits);
    auto reply = ask_llm(backends_.chat, prompts_, "answer",
                         {{"question", query}, {"context", context}}, "answer", &step.exchanges);
    step.paths.push_back(
        {lang, query, scored_ids(hits), CandidateAnswer{clean_answer(reply), lang, doc_ids(hits), node.id}});
    contexts.push_back(std::move(context));
  }

  std::optional<CandidateAnswer> accepted;
  if (step.paths.size() == 1) {
    const auto& only = step.paths.front();
    bool ok = !only.candidate.text.empty() &&
              sufficient(only.query, only.candidate.text, contexts.front(), &step.exchanges);
    step.sufficient = ok;
    if (ok) accepted = only.candidate;
  } else {
    const auto& a_source = step.paths[0].candidate;
    const auto& a_english = step.paths[1].candidate;
    bool verdict = judge(a_source, a_english, step, &step.exchanges);
    if (verdict) {
      try {
        accepted = select(a_source, a_english);
      } catch (const BothEmpty&) {
        verdict = false;
      }
    }
    step.judge = verdict;
  }

  if (accepted) {
    step.answer = accepted->text;
    step.answer_source = accepted->lang.code();
  } else {
    auto regenerated = regen(step, trace, source_lang);
    step.answer = regenerated.text;
    step.answer_source = step.low_confidence ? regenerated.lang.code() : "regen";
  }
  trace.steps.push_back(std::move(step));
  return trace.steps.back();
}

std::string Solver::synthesize_final(const Query& q, ReasoningTrace& trace,
                                     const CorpusIndex* index) const {
  SynthesisRecord record{q.lang, q.text, {}, {}, {}};
  std::vector<RetrievedDocument> hits;
  if (index) hits = index->retrieve(q.text, config_.solver.k, backends_.embed);
  record.retrieved = scored_ids(hits);
  auto reply = ask_llm(backends_.chat, prompts_, "synthesize",
                       {{"question", q.text},
                        {"chain", solved_chain(trace, q.lang)},
                        {"context", format_context(hits)},
                        {"language", text::language_name(q.lang.code())}},
                       "synthesize", &record.exchanges);
  record.answer = clean_answer(reply);
  trace.synthesis = std::move(record);
  return trace.synthesis->answer;
}

void Solver::solve_sequence(const SubQuestionGraph& graph, const LanguageTag& source_lang,
                            ReasoningTrace& trace) const {
  trace.sequence = sequence(graph);
  for (const auto& id : trace.sequence) solve_node(graph.node(id), graph, source_lang, trace);
}

void Solver::run_full(ReasoningTrace& trace) const {
  const Query& q = trace.question;
  index_for(q.lang);
  index_for(english());

  auto plan = planner_.plan(q, &trace.planning_exchanges);
  if (!q.lang.is_english()) trace.translated = plan.english_query;
  auto fusion = fuse(plan.source, plan.english, config_.fusion, backends_.embed);
  trace.source_graph = std::move(plan.source);
  trace.english_graph = std::move(plan.english);
  trace.merges = fusion.merges;
  trace.fused_graph = std::move(fusion.graph);

  solve_sequence(*trace.fused_graph, q.lang, trace);
  trace.final_answer = synthesize_final(q, trace, &index_for(q.lang));
}

void Solver::run_no_decompose(ReasoningTrace& trace) const {
  const Query& q = trace.question;
  const CorpusIndex& index = index_for(q.lang);
  StepRecord step;
  step.node_id = plan_node_id(q.lang.code(), 1);
  step.texts.emplace(q.lang, q.text);
  auto hits = index.retrieve(q.text, config_.solver.k, backends_.embed);
  auto reply = ask_llm(backends_.chat, prompts_, "answer",
                       {{"question", q.text}, {"context", format_context(hits)}}, "answer",
                       &step.exchanges);
  CandidateAnswer candidate{clean_answer(reply), q.lang, doc_ids(hits), step.node_id};
  step.paths.push_back({q.lang, q.text, scored_ids(hits), candidate});
  step.answer = candidate.text;
  step.answer_source = q.lang.code();
  trace.sequence = {step.node_id};
  trace.steps.push_back(std::move(step));
  trace.final_answer = trace.steps.back().answer;
}

void Solver::run_no_fusion(ReasoningTrace& trace) const {
  const Query& q = trace.question;
  index_for(q.lang);
  auto plan = planner_.plan(q, &trace.planning_exchanges);
  if (!q.lang.is_english()) trace.translated = plan.english_query;
  trace.source_graph = std::move(plan.source);
  trace.english_graph = std::move(plan.english);
  solve_sequence(*trace.source_graph, q.lang, trace);
  trace.final_answer = synthesize_final(q, trace, &index_for(q.lang));
}

void Solver::run_translate_qa(ReasoningTrace& trace) const {
  const Query& q = trace.question;
  index_for(english());
  Query q_en = planner_.translate(q, english(), &trace.planning_exchanges);
  if (!q.lang.is_english()) trace.translated = q_en;
  trace.english_graph = planner_.decompose(q_en, "en", NodeOrigin::kEnglish,
                                           &trace.planning_exchanges);
  solve_sequence(*trace.english_graph, english(), trace);
  std::string english_answer = synthesize_final(q_en, trace, &index_for(english()));
  if (q.lang.is_english() || english_answer.empty()) {
    trace.final_answer = english_answer;
    return;
  }
  trace.final_answer =
      planner_.translate(Query(english_answer, english()), q.lang, &trace.output_exchanges).text;
}

ReasoningTrace Solver::answer_question(const Query& q, const std::string& qid) const {
  ReasoningTrace trace(q);
  trace.qid = qid;
  trace.mode = config_.solver.mode;
  trace.solver_config = config_.solver;
  trace.tau = config_.fusion.tau;
  try {
    switch (config_.solver.mode) {
      case PipelineMode::kFull:
        run_full(trace);
        break;
      case PipelineMode::kNoDecompose:
        run_no_decompose(trace);
        break;
      case PipelineMode::kNoFusion:
        run_no_fusion(trace);
        break;
      case PipelineMode::kTranslateQa:
        run_translate_qa(trace);
        break;
    }
  } catch (const Error& e) {
    trace.error_kind = e.kind();
    trace.error = e.what();
  } catch (const std::exception& e) {
    trace.error_kind = "InternalError";
    trace.error = e.what();
  }

  // Mirror solved answers onto the graph that was executed.
  SubQuestionGraph* solved = trace.fused_graph ? &*trace.fused_graph
                             : trace.mode == PipelineMode::kTranslateQa && trace.english_graph
                                 ? &*trace.english_graph
                             : trace.source_graph ? &*trace.source_graph
                                                  : nullptr;
  if (solved) {
    for (const auto& step : trace.steps) {
      if (!solved->contains(step.node_id)) continue;
      solved->node(step.node_id).answer =
          AnswerRecord{step.answer, step.answer_source, step.low_confidence};
    }
  }
  return trace;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json to_json(const std::vector<ScoredDocId>& ids) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : ids) out.push_back({{"id", s.id}, {"score", s.score}});
  return out;
}

nlohmann::json to_json(const ExchangeLog& log) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : log) out.push_back(dapt::to_json(e));
  return out;
}

nlohmann::json texts_json(const std::map<LanguageTag, std::string>& texts) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [lang, t] : texts) out[lang.code()] = t;
  return out;
}

nlohmann::json optional_bool(const std::optional<bool>& b) {
  return b ? nlohmann::json(*b) : nlohmann::json(nullptr);
}

nlohmann::json query_json(const Query& q) { return {{"text", q.text}, {"lang", q.lang.code()}}; }

}  // namespace

nlohmann::json to_json(const ReasoningTrace& trace) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& step : trace.steps) {
    nlohmann::json paths = nlohmann::json::array();
    for (const auto& p : step.paths) {
      paths.push_back({{"lang", p.lang.code()},
                       {"query", p.query},
                       {"retrieved", to_json(p.retrieved)},
                       {"candidate",
                        {{"text", p.candidate.text},
                         {"lang", p.candidate.lang.code()},
                         {"supporting_docs", p.candidate.supporting_docs}}}});
    }
    nlohmann::json regens = nlohmann::json::array();
    for (const auto& r : step.regens) regens.push_back({{"text", r.text}, {"accepted", r.accepted}});
    steps.push_back({{"node_id", step.node_id},
                     {"aliases", step.aliases},
                     {"texts", texts_json(step.texts)},
                     {"dependencies", step.dependencies},
                     {"paths", paths},
                     {"judge", optional_bool(step.judge)},
                     {"sufficient", optional_bool(step.sufficient)},
                     {"regen_attempts", regens},
                     {"answer", step.answer},
                     {"answer_source", step.answer_source},
                     {"low_confidence", step.low_confidence},
                     {"exchanges", to_json(step.exchanges)}});
  }

  nlohmann::json merges = nlohmann::json::array();
  for (const auto& m : trace.merges) {
    merges.push_back({{"kept", m.kept}, {"absorbed", m.absorbed}, {"similarity", m.similarity}});
  }
  auto graph_or_null = [](const std::optional<SubQuestionGraph>& g) {
    return g ? dapt::to_json(*g) : nlohmann::json(nullptr);
  };

  nlohmann::json synthesis = nullptr;
  if (trace.synthesis) {
    synthesis = {{"lang", trace.synthesis->lang.code()},
                 {"query", trace.synthesis->query},
                 {"retrieved", to_json(trace.synthesis->retrieved)},
                 {"answer", trace.synthesis->answer},
                 {"exchanges", to_json(trace.synthesis->exchanges)}};
  }

  return {{"schema_version", 1},
          {"qid", trace.qid},
          {"question", query_json(trace.question)},
          {"mode", to_string(trace.mode)},
          {"config",
           {{"tau", trace.tau},
            {"top_k", trace.solver_config.k},
            {"max_regen", trace.solver_config.max_regen}}},
          {"translated", trace.translated ? query_json(*trace.translated) : nlohmann::json(nullptr)},
          {"graphs",
           {{"source", graph_or_null(trace.source_graph)},
            {"english", graph_or_null(trace.english_graph)},
            {"fused", graph_or_null(trace.fused_graph)}}},
          {"merges", merges},
          {"sequence", trace.sequence},
          {"steps", steps},
          {"synthesis", synthesis},
          {"planning_exchanges", to_json(trace.planning_exchanges)},
          {"output_exchanges", to_json(trace.output_exchanges)},
          {"final_answer", trace.final_answer},
          {"error", trace.error ? nlohmann::json{{"kind", *trace.error_kind}, {"message", *trace.error}}
                                : nlohmann::json(nullptr)}};
}

std::filesystem::path write_trace(const ReasoningTrace& trace, const std::filesystem::path& dir,
                                  const std::string& dataset) {
  std::string qid = trace.qid;
  for (auto& c : qid) {
    if (c == '/' || c == '\\' || c == ':' || c == ' ') c = '_';
  }
  std::filesystem::create_directories(dir);
  auto path = dir / (dataset + "." + trace.question.lang.code() + "." + qid + ".trace.json");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write trace " + path.string());
  out << to_json(trace).dump(2) << '\n';
  if (!out) throw IoError("write to " + path.string() + " failed");
  return path;
}

}  // namespace dapt

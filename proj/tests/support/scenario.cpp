#include "scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dapt::testing {

namespace {

nlohmann::json rule(const std::string& tag, const std::string& contains, const std::string& reply) {
  nlohmann::json r = {{"tag", tag}, {"reply", reply}};
  if (!contains.empty()) r["contains"] = contains;
  return r;
}

nlohmann::json decomposition(const std::vector<std::string>& subs,
                             const std::vector<std::pair<int, int>>& deps) {
  nlohmann::json d = {{"sub_questions", subs}, {"dependencies", nlohmann::json::array()}};
  for (auto [a, b] : deps) d["dependencies"].push_back({a, b});
  return d;
}

// Sparse vector in `dim` dimensions.
nlohmann::json sparse(std::size_t dim, const std::vector<std::pair<std::size_t, double>>& entries) {
  std::vector<double> v(dim, 0.0);
  for (auto [i, x] : entries) v[i] = x;
  return v;
}

std::string jsonl(const std::vector<nlohmann::json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

nlohmann::json doc(const std::string& id, const std::string& title, const std::string& text) {
  return {{"id", id}, {"title", title}, {"text", text}};
}

}  // namespace

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::path(DAPT_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ScriptedPair load_script(const nlohmann::json& script) {
  ScriptedPair pair;
  pair.chat = ScriptedChat::from_json(script.value("chat", nlohmann::json::object()));
  pair.embed = ScriptedEmbedder::from_json(script.value("embed", nlohmann::json::object()));
  return pair;
}

IndexSet build_indexes(const std::filesystem::path& corpus_dir, const std::string& dataset,
                       const std::vector<std::string>& langs, EmbedBackend& embedder) {
  IndexSet out;
  for (const auto& code : langs) {
    LanguageTag lang(code);
    auto path = corpus_path(corpus_dir, dataset, lang);
    if (!std::filesystem::exists(path)) continue;
    out.emplace(lang, std::make_shared<const CorpusIndex>(
                          build_index(path, lang, embedder, {.batch_size = 64, .use_sidecar = false})));
  }
  return out;
}

nlohmann::json inception_script() {
  const std::string de1 = "Wer ist der Regisseur von Inception?";
  const std::string de2 = "In welcher Stadt wurde <1> geboren?";
  const std::string de3 = "In welchem Land liegt <2>?";
  const std::string en1 = "Who directed Inception?";
  const std::string en2 = "Where was <1> born?";
  const std::string en3 = "Which country is <2> in?";
  const std::string en4 = "When was Inception released?";

  nlohmann::json rules = nlohmann::json::array();
  rules.push_back(rule("translate", "Text: " + std::string(kInceptionQuestion), kInceptionEnglish));
  rules.push_back(rule("translate", "into German.\n\nText: England", "England"));
  rules.push_back(rule("decompose", "Question: " + std::string(kInceptionQuestion),
                       decomposition({de1, de2, de3}, {{1, 2}, {2, 3}}).dump()));
  rules.push_back(rule("decompose", "Question: " + std::string(kInceptionEnglish),
                       decomposition({en1, en2, en3, en4}, {{1, 2}, {2, 3}}).dump()));

  // The two paths of the fused first hop disagree in surface form.
  rules.push_back(rule("answer", "Question: " + de1, "Christopher Nolan"));
  rules.push_back(rule("answer", "Question: " + en1, "Nolan"));
  rules.push_back(rule("answer", "Question: In welcher Stadt wurde Christopher Nolan geboren?", "London"));
  rules.push_back(rule("answer", "Question: In welchem Land liegt London?", "England"));
  rules.push_back(rule("answer", "Question: Where was Christopher Nolan born?", "London"));
  rules.push_back(rule("answer", "Question: Where was Nolan born?", "London"));
  rules.push_back(rule("answer", "Question: Which country is London in?", "England"));
  rules.push_back(rule("answer", "Question: " + en4, "2010"));
  rules.push_back(rule("answer", "Question: " + std::string(kInceptionQuestion), kInceptionAnswer));
  rules.push_back(rule("judge", "", "no, the answers name the director differently"));
  rules.push_back(rule("sufficiency", "", "yes"));
  rules.push_back(rule("regen", "", "Christopher Nolan"));
  rules.push_back(rule("synthesize", "Question: " + std::string(kInceptionQuestion), kInceptionAnswer));
  rules.push_back(rule("synthesize", "Question: " + std::string(kInceptionEnglish), kInceptionAnswer));

  // Fusion sees placeholder-free texts; only de:1 / en:1 clear tau = 0.8.
  const std::size_t dim = 64;
  nlohmann::json table = {
      {de1, sparse(dim, {{0, 1.0}})},
      {en1, sparse(dim, {{0, 0.9}, {1, std::sqrt(0.19)}})},
      {de2, sparse(dim, {{2, 1.0}})},
      {en2, sparse(dim, {{2, 0.7}, {3, std::sqrt(0.51)}})},
      {de3, sparse(dim, {{4, 1.0}})},
      {en3, sparse(dim, {{4, 0.6}, {5, 0.8}})},
      {en4, sparse(dim, {{6, 1.0}})},
  };
  return {{"chat", {{"rules", rules}}}, {"embed", {{"dimension", dim}, {"table", table}}}};
}

ScenarioFiles write_inception_scenario(const std::filesystem::path& dir) {
  ScenarioFiles files{dir, "films", dir / "script.json", {}};
  write_file(corpus_path(dir, files.dataset, LanguageTag("de")),
             jsonl({doc("de-inception", "Inception",
                        "Inception ist ein Science-Fiction-Film von Christopher Nolan aus dem Jahr 2010."),
                    doc("de-nolan", "Christopher Nolan",
                        "Christopher Nolan wurde am 30. Juli 1970 in London geboren."),
                    doc("de-london", "London",
                        "London ist die Hauptstadt von England und des Vereinigten Königreichs."),
                    doc("de-berlin", "Berlin", "Berlin ist die Hauptstadt Deutschlands.")}));
  write_file(corpus_path(dir, files.dataset, LanguageTag("en")),
             jsonl({doc("en-inception", "Inception",
                        "Inception is a 2010 science fiction film written and directed by Christopher Nolan."),
                    doc("en-nolan", "Christopher Nolan",
                        "Christopher Nolan was born on 30 July 1970 in Westminster, London."),
                    doc("en-london", "London",
                        "London is the capital and largest city of England and the United Kingdom."),
                    doc("en-release", "Inception release",
                        "Inception premiered in London on 8 July 2010."),
                    doc("en-paris", "Paris", "Paris is the capital of France.")}));
  write_file(files.script, inception_script().dump(2));
  return files;
}

const std::vector<OracleQuestion>& oracle_questions() {
  static const std::vector<OracleQuestion> questions = {
      {"q01", "Wer schrieb den Roman Moby-Dick?", "Who wrote the novel Moby-Dick?", "Herman Melville"},
      {"q02", "In welchem Jahr fiel die Berliner Mauer?", "In what year did the Berlin Wall fall?", "1989"},
      {"q03", "Wie heißt die Hauptstadt von Kanada?", "What is the capital of Canada?", "Ottawa"},
      {"q04", "Wer malte die Mona Lisa?", "Who painted the Mona Lisa?", "Leonardo da Vinci"},
      {"q05", "Wer komponierte die Oper Carmen?", "Who composed the opera Carmen?", "Georges Bizet"},
      {"q06", "In welcher Stadt steht der Eiffelturm?", "In which city is the Eiffel Tower?", "Paris"},
      {"q07", "Wer entdeckte das Penicillin?", "Who discovered penicillin?", "Alexander Fleming"},
      {"q08", "Wie viele Spieler stellt eine Fußballmannschaft auf das Feld?",
       "How many players does a football team field?", "11"},
      {"q09", "Wer gründete Microsoft zusammen mit Paul Allen?",
       "Who co-founded Microsoft with Paul Allen?", "Bill Gates"},
      {"q10", "In welchem Jahr landete Apollo 11 auf dem Mond?",
       "In what year did Apollo 11 land on the Moon?", "1969"},
  };
  return questions;
}

nlohmann::json oracle_script() {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& q : oracle_questions()) {
    rules.push_back(rule("translate", "Text: " + q.de, q.en));
    rules.push_back(rule("translate", "into German.\n\nText: " + q.answer, q.answer));
    rules.push_back(rule("decompose", "Question: " + q.de, decomposition({q.de}, {}).dump()));
    rules.push_back(rule("decompose", "Question: " + q.en, decomposition({q.en}, {}).dump()));
    for (const char* tag : {"answer", "synthesize"}) {
      rules.push_back(rule(tag, "Question: " + q.de, q.answer));
      rules.push_back(rule(tag, "Question: " + q.en, q.answer));
    }
  }
  rules.push_back(rule("judge", "", "yes"));
  rules.push_back(rule("sufficiency", "", "yes"));
  return {{"chat", {{"rules", rules}}}, {"embed", {{"dimension", 64}}}};
}

ScenarioFiles write_oracle_benchmark(const std::filesystem::path& dir) {
  ScenarioFiles files{dir, "trivia", dir / "script.json", dir / "trivia.bench.jsonl"};
  std::vector<nlohmann::json> de_docs;
  std::vector<nlohmann::json> en_docs;
  std::vector<nlohmann::json> items;
  for (const auto& q : oracle_questions()) {
    de_docs.push_back(doc("de-" + q.qid, q.answer, q.de + " Antwort: " + q.answer + "."));
    en_docs.push_back(doc("en-" + q.qid, q.answer, q.en + " Answer: " + q.answer + "."));
    items.push_back({{"qid", q.qid},
                     {"questions", {{"de", q.de}, {"en", q.en}}},
                     {"answers", {q.answer}}});
  }
  write_file(corpus_path(dir, files.dataset, LanguageTag("de")), jsonl(de_docs));
  write_file(corpus_path(dir, files.dataset, LanguageTag("en")), jsonl(en_docs));
  write_file(files.benchmark, jsonl(items));
  write_file(files.script, oracle_script().dump(2));
  return files;
}

}  // namespace dapt::testing

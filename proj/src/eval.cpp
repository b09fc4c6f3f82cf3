#include "dapt/eval.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

#include "dapt/errors.hpp"
#include "dapt/text.hpp"

namespace dapt {

namespace {

bool char_tokenized(const LanguageTag& lang) { return lang.code() == "zh" || lang.code() == "th"; }

bool is_article(std::u32string_view word) {
  return word == U"a" || word == U"an" || word == U"the";
}

void add_usage(std::map<std::string, TokenUsage>& out, const ExchangeLog& log) {
  for (const auto& e : log) out[e.tag] += e.usage;
}

nlohmann::json usage_json(const TokenUsage& u) {
  return {{"prompt_tokens", u.prompt_tokens},
          {"completion_tokens", u.completion_tokens},
          {"calls", u.calls}};
}

}  // namespace

std::string normalize_answer(const std::string& input, const LanguageTag& lang) {
  std::u32string s = text::decode_utf8(input);
  std::u32string kept;
  kept.reserve(s.size());
  for (char32_t c : s) {
    if (text::is_punctuation(c)) continue;
    kept.push_back(text::is_space(c) ? U' ' : text::to_lower(c));
  }

  std::u32string out;
  std::size_t i = 0;
  while (i < kept.size()) {
    while (i < kept.size() && kept[i] == U' ') ++i;
    std::size_t j = i;
    while (j < kept.size() && kept[j] != U' ') ++j;
    if (j == i) break;
    std::u32string_view word(kept.data() + i, j - i);
    if (!(lang.is_english() && is_article(word))) {
      if (!out.empty()) out.push_back(U' ');
      out.append(word);
    }
    i = j;
  }
  return text::encode_utf8(out);
}

std::vector<std::string> answer_tokens(const std::string& normalized, const LanguageTag& lang) {
  std::vector<std::string> tokens;
  if (char_tokenized(lang)) {
    for (char32_t c : text::decode_utf8(normalized)) {
      if (!text::is_space(c)) tokens.push_back(text::encode_utf8(std::u32string(1, c)));
    }
    return tokens;
  }
  std::string current;
  for (char c : normalized) {
    if (c == ' ') {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

int em_score(const std::string& prediction, const std::vector<std::string>& golds,
             const LanguageTag& lang) {
  const std::string pred = normalize_answer(prediction, lang);
  for (const auto& g : golds) {
    if (normalize_answer(g, lang) == pred) return 1;
  }
  return 0;
}

double f1_score(const std::string& prediction, const std::vector<std::string>& golds,
                const LanguageTag& lang) {
  const auto pred = answer_tokens(normalize_answer(prediction, lang), lang);
  double best = 0.0;
  for (const auto& g : golds) {
    const auto gold = answer_tokens(normalize_answer(g, lang), lang);
    double f1 = 0.0;
    if (pred.empty() || gold.empty()) {
      f1 = pred.empty() && gold.empty() ? 1.0 : 0.0;
    } else {
      std::map<std::string, int> counts;
      for (const auto& t : gold) ++counts[t];
      std::size_t common = 0;
      for (const auto& t : pred) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
          --it->second;
          ++common;
        }
      }
      if (common > 0) {
        const double p = static_cast<double>(common) / static_cast<double>(pred.size());
        const double r = static_cast<double>(common) / static_cast<double>(gold.size());
        f1 = 2.0 * p * r / (p + r);
      }
    }
    best = std::max(best, f1);
  }
  return best;
}

std::vector<BenchmarkItem> load_benchmark(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read benchmark " + path.string());
  std::vector<BenchmarkItem> items;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
    if (!j.is_object()) throw MalformedRecord(line_no, "not a JSON object");
    BenchmarkItem item;
    if (!j.contains("qid") || !(j["qid"].is_string() || j["qid"].is_number_integer())) {
      throw MalformedRecord(line_no, "missing \"qid\"");
    }
    item.qid = j["qid"].is_string() ? j["qid"].get<std::string>()
                                    : std::to_string(j["qid"].get<long long>());
    if (!seen.insert(item.qid).second) throw MalformedRecord(line_no, "duplicate qid " + item.qid);

    if (!j.contains("questions") || !j["questions"].is_object()) {
      throw MalformedRecord(line_no, "missing \"questions\" object");
    }
    for (const auto& [code, q] : j["questions"].items()) {
      if (!q.is_string() || text::is_blank(q.get<std::string>())) {
        throw MalformedRecord(line_no, "question for '" + code + "' must be a non-blank string");
      }
      item.questions.emplace(LanguageTag(code), q.get<std::string>());
    }
    if (item.questions.empty()) throw MalformedRecord(line_no, "no questions");

    const char* answers_key = j.contains("answers") ? "answers" : "gold_answers";
    if (!j.contains(answers_key) || !j[answers_key].is_array() || j[answers_key].empty()) {
      throw MalformedRecord(line_no, "\"answers\" must be a non-empty array");
    }
    for (const auto& a : j[answers_key]) {
      if (!a.is_string()) throw MalformedRecord(line_no, "answers must be strings");
      item.gold_answers.push_back(a.get<std::string>());
    }
    if (j.contains("gold_lang")) {
      if (!j["gold_lang"].is_string()) throw MalformedRecord(line_no, "\"gold_lang\" must be a string");
      item.gold_lang = LanguageTag(j["gold_lang"].get<std::string>());
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::map<std::string, TokenUsage> usage_by_stage(const ReasoningTrace& trace) {
  std::map<std::string, TokenUsage> out;
  add_usage(out, trace.planning_exchanges);
  for (const auto& step : trace.steps) add_usage(out, step.exchanges);
  if (trace.synthesis) add_usage(out, trace.synthesis->exchanges);
  add_usage(out, trace.output_exchanges);
  return out;
}

nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json usage = nlohmann::json::object();
  for (const auto& [tag, u] : r.token_usage) usage[tag] = usage_json(u);
  nlohmann::json j = {{"qid", r.qid},
                      {"lang", r.lang.code()},
                      {"question", r.question},
                      {"prediction", r.prediction},
                      {"gold_answers", r.gold_answers},
                      {"normalized_prediction", r.normalized_prediction},
                      {"normalized_golds", r.normalized_golds},
                      {"em", r.em},
                      {"f1", r.f1},
                      {"latency_ms", r.latency_ms},
                      {"token_usage", usage},
                      {"error", nullptr}};
  if (r.error) j["error"] = {{"kind", r.error_kind.value_or("Error")}, {"message", *r.error}};
  return j;
}

nlohmann::json to_json(const BenchmarkReport& report) {
  return {{"dataset", report.dataset}, {"lang", report.lang.code()},
          {"mode", to_string(report.mode)}, {"n", report.n},
          {"em", report.em},           {"f1", report.f1},
          {"errors", report.errors}};
}

std::string format_report_row(const BenchmarkReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-10s %-4s %-13s n=%-5zu EM %5.1f F1 %5.1f  errors=%zu",
                report.dataset.c_str(), report.lang.code().c_str(), to_string(report.mode),
                report.n, report.em * 100.0, report.f1 * 100.0, report.errors);
  return buf;
}

BenchmarkReport run_benchmark(const std::vector<BenchmarkItem>& items, const LanguageTag& lang,
                              const Solver& solver, const std::filesystem::path& out_dir,
                              const BenchmarkOptions& options) {
  BenchmarkReport report;
  report.dataset = options.dataset;
  report.lang = lang;
  report.mode = solver.config().solver.mode;
  report.n = items.size();
  report.records.resize(items.size());

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  const auto trace_dir = out_dir / "traces";

  auto evaluate = [&](std::size_t i) {
    const BenchmarkItem& item = items[i];
    EvalRecord& rec = report.records[i];
    rec.qid = item.qid;
    rec.lang = lang;
    rec.gold_answers = item.gold_answers;
    const LanguageTag& score_lang = item.gold_lang ? *item.gold_lang : lang;
    for (const auto& g : item.gold_answers) {
      rec.normalized_golds.push_back(normalize_answer(g, score_lang));
    }
    auto q = item.questions.find(lang);
    if (q == item.questions.end()) {
      rec.error_kind = "MissingQuestion";
      rec.error = "item has no question in '" + lang.code() + "'";
      return;
    }
    rec.question = q->second;
    const auto start = std::chrono::steady_clock::now();
    ReasoningTrace trace = solver.answer_question(Query(q->second, lang), item.qid);
    rec.latency_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    rec.token_usage = usage_by_stage(trace);
    rec.prediction = trace.final_answer;
    rec.normalized_prediction = normalize_answer(rec.prediction, score_lang);
    if (!trace.ok()) {
      rec.error_kind = trace.error_kind;
      rec.error = trace.error;
    } else {
      rec.em = em_score(rec.prediction, item.gold_answers, score_lang);
      rec.f1 = f1_score(rec.prediction, item.gold_answers, score_lang);
    }
    if (options.write_traces) {
      try {
        write_trace(trace, trace_dir, options.dataset);
      } catch (const std::exception& e) {
        if (!rec.error) {
          rec.error_kind = "IoError";
          rec.error = e.what();
          rec.em = 0;
          rec.f1 = 0.0;
        }
      }
    }
  };

  auto guarded = [&](std::size_t i) {
    try {
      evaluate(i);
    } catch (const Error& e) {
      report.records[i].error_kind = e.kind();
      report.records[i].error = e.what();
    } catch (const std::exception& e) {
      report.records[i].error_kind = "InternalError";
      report.records[i].error = e.what();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(options.jobs, items.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < items.size(); i = next++) guarded(i);
      });
    }
  }

  double em = 0.0;
  double f1 = 0.0;
  for (auto& rec : report.records) {
    if (rec.error) {
      ++report.errors;
      rec.em = 0;
      rec.f1 = 0.0;
    }
    em += rec.em;
    f1 += rec.f1;
  }
  if (report.n > 0) {
    report.em = em / static_cast<double>(report.n);
    report.f1 = f1 / static_cast<double>(report.n);
  }

  const auto records_path = out_dir / ("records." + lang.code() + ".jsonl");
  {
    std::ofstream out(records_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + records_path.string());
    for (const auto& rec : report.records) out << to_json(rec).dump() << '\n';
    if (!out) throw IoError("write to " + records_path.string() + " failed");
  }
  const auto report_path = out_dir / "report.json";
  std::ofstream out(report_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + report_path.string());
  out << to_json(report).dump(2) << '\n';
  if (!out) throw IoError("write to " + report_path.string() + " failed");
  return report;
}

}  // namespace dapt

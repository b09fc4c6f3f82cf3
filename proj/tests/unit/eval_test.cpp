#include <gtest/gtest.h>

#include <fstream>

#include "dapt/errors.hpp"
#include "dapt/eval.hpp"
#include "scenario.hpp"

namespace dapt {
namespace {

const LanguageTag kEn("en");
const LanguageTag kDe("de");
const LanguageTag kZh("zh");
const LanguageTag kTh("th");

TEST(NormalizeTest, Examples) {
  EXPECT_EQ(normalize_answer("The Eiffel Tower!", kEn), "eiffel tower");
  EXPECT_EQ(normalize_answer("", kEn), "");
  EXPECT_EQ(normalize_answer("", kDe), "");
  EXPECT_EQ(normalize_answer("Der  Turm", kDe), "der turm");
  EXPECT_EQ(normalize_answer("  a   Cat, an   Owl ", kEn), "cat owl");
  EXPECT_EQ(normalize_answer("ÄRGER über Öl", kDe), "ärger über öl");
  EXPECT_EQ(normalize_answer("«Das Boot»", kDe), "das boot");
  EXPECT_EQ(normalize_answer("北京。", kZh), "北京");
}

TEST(EmTest, Examples) {
  EXPECT_EQ(em_score("Paris.", {"paris"}, kEn), 1);
  EXPECT_EQ(em_score("in Paris", {"Paris"}, kEn), 0);
  EXPECT_EQ(em_score("NYC", {"New York", "NYC", "New York City"}, kEn), 1);
  EXPECT_EQ(em_score("x", {}, kEn), 0);
}

TEST(F1Test, Examples) {
  EXPECT_DOUBLE_EQ(f1_score("The Paris", {"paris"}, kEn), 1.0);
  EXPECT_NEAR(f1_score("barack obama", {"obama"}, kEn), 2.0 / 3.0, 1e-4);
  EXPECT_DOUBLE_EQ(f1_score("tokyo", {"kyoto"}, kEn), 0.0);
  EXPECT_DOUBLE_EQ(f1_score("", {""}, kEn), 1.0);
  EXPECT_DOUBLE_EQ(f1_score("", {"x"}, kEn), 0.0);
  EXPECT_DOUBLE_EQ(f1_score("the", {"x"}, kEn), 0.0);
}

TEST(F1Test, MaxOverAliasesAndMultisetCounts) {
  EXPECT_NEAR(f1_score("new york", {"york", "new york city"}, kEn), 0.8, 1e-12);
  // pred {a,a,b} vs gold {a,b,b}: overlap 2, P=R=2/3
  EXPECT_NEAR(f1_score("x x y", {"x y y"}, kDe), 2.0 / 3.0, 1e-12);
}

TEST(F1Test, CharacterTokensForChineseAndThai) {
  EXPECT_DOUBLE_EQ(f1_score("北京大学", {"北京大学"}, kZh), 1.0);
  EXPECT_DOUBLE_EQ(f1_score("กรุงเทพ", {"กรุงเทพ"}, kTh), 1.0);
  // {北,京} vs {北,京,市}: P=1, R=2/3
  EXPECT_NEAR(f1_score("北京", {"北京市"}, kZh), 0.8, 1e-12);
  EXPECT_EQ(answer_tokens("北京 市", kZh).size(), 3u);
  EXPECT_EQ(answer_tokens("北京 市", kEn).size(), 2u);
}

TEST(F1Test, AliasOrderDoesNotMatter) {
  std::vector<std::string> golds{"alpha beta", "beta", "gamma alpha beta"};
  auto reversed = golds;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_DOUBLE_EQ(f1_score("alpha beta gamma", golds, kEn),
                   f1_score("alpha beta gamma", reversed, kEn));
}

TEST(LoadBenchmarkTest, ParsesAndValidates) {
  auto dir = testing::fresh_dir("bench_load");
  testing::write_file(dir / "ok.jsonl",
                      R"({"qid":"1","questions":{"de":"Wer?","en":"Who?"},"answers":["A","B"]})"
                      "\n"
                      R"({"qid":2,"questions":{"en":"When?"},"answers":["1970"],"gold_lang":"en"})"
                      "\n");
  auto items = load_benchmark(dir / "ok.jsonl");
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].questions.size(), 2u);
  EXPECT_EQ(items[1].qid, "2");
  EXPECT_EQ(items[1].gold_lang, std::optional<LanguageTag>(kEn));

  testing::write_file(dir / "noans.jsonl", R"({"qid":"1","questions":{"en":"Who?"},"answers":[]})");
  EXPECT_THROW(load_benchmark(dir / "noans.jsonl"), MalformedRecord);
  testing::write_file(dir / "noq.jsonl", R"({"qid":"1","questions":{},"answers":["x"]})");
  EXPECT_THROW(load_benchmark(dir / "noq.jsonl"), MalformedRecord);
  EXPECT_THROW(load_benchmark(dir / "absent.jsonl"), IoError);
  testing::write_file(dir / "empty.jsonl", "");
  EXPECT_TRUE(load_benchmark(dir / "empty.jsonl").empty());
}

class RunBenchmarkTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = testing::fresh_dir(std::string("bench_") +
                             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    files = testing::write_oracle_benchmark(dir);
    backends = testing::load_script(testing::oracle_script());
    indexes = testing::build_indexes(files.corpus_dir, files.dataset, {"de", "en"}, *backends.embed);
    items = load_benchmark(files.benchmark);
  }

  BenchmarkReport run(PipelineMode mode, std::size_t jobs = 2, std::size_t n = 0) {
    PipelineConfig p;
    p.solver.mode = mode;
    Solver solver({*backends.chat, *backends.embed}, prompts, indexes, p);
    std::vector<BenchmarkItem> subset(items.begin(), n ? items.begin() + n : items.end());
    return run_benchmark(subset, kDe, solver, dir / "out" / to_string(mode),
                         {files.dataset, jobs, true});
  }

  std::filesystem::path dir;
  testing::ScenarioFiles files;
  testing::ScriptedPair backends;
  PromptSet prompts = PromptSet::builtin();
  IndexSet indexes;
  std::vector<BenchmarkItem> items;
};

TEST_F(RunBenchmarkTest, TwoItemOracleRunScoresPerfectly) {
  auto report = run(PipelineMode::kFull, 2, 2);
  EXPECT_EQ(report.n, 2u);
  EXPECT_DOUBLE_EQ(report.em, 1.0);
  EXPECT_DOUBLE_EQ(report.f1, 1.0);
  EXPECT_EQ(report.errors, 0u);
  EXPECT_NE(format_report_row(report).find("EM 100.0 F1 100.0"), std::string::npos);
}

TEST_F(RunBenchmarkTest, WritesRecordsReportAndTraces) {
  auto report = run(PipelineMode::kFull, 3);
  auto out = dir / "out" / "full";
  ASSERT_TRUE(std::filesystem::exists(out / "records.de.jsonl"));
  ASSERT_TRUE(std::filesystem::exists(out / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(out / "traces" / "trivia.de.q01.trace.json"));

  auto j = nlohmann::json::parse(testing::read_file(out / "report.json"));
  EXPECT_EQ(j["dataset"], "trivia");
  EXPECT_EQ(j["lang"], "de");
  EXPECT_EQ(j["mode"], "full");
  EXPECT_EQ(j["n"], 10);
  EXPECT_EQ(j["errors"], 0);

  // Aggregates are the arithmetic mean of the stored per-item scores.
  std::ifstream in(out / "records.de.jsonl");
  std::string line;
  double em = 0;
  double f1 = 0;
  std::vector<std::string> qids;
  while (std::getline(in, line)) {
    auto r = nlohmann::json::parse(line);
    em += r["em"].get<double>();
    f1 += r["f1"].get<double>();
    qids.push_back(r["qid"]);
    EXPECT_TRUE(r["token_usage"].contains("answer"));
  }
  ASSERT_EQ(qids.size(), 10u);
  EXPECT_EQ(qids.front(), "q01");
  EXPECT_EQ(qids.back(), "q10");
  EXPECT_DOUBLE_EQ(j["em"].get<double>(), em / 10);
  EXPECT_DOUBLE_EQ(j["f1"].get<double>(), f1 / 10);
}

TEST_F(RunBenchmarkTest, BackendErrorIsContained) {
  auto prior = backends.chat;
  prior->set_responder([](const ChatRequest& r) -> std::optional<std::string> {
    if (r.last_user_message().find("Question: Wer schrieb den Roman Moby-Dick?") != std::string::npos) {
      throw BackendError(BackendFailure::kTransport, "boom");
    }
    return std::nullopt;
  });
  auto report = run(PipelineMode::kFull, 1, 3);
  EXPECT_EQ(report.errors, 1u);
  EXPECT_EQ(report.records[0].em, 0);
  EXPECT_EQ(report.records[0].error_kind, std::optional<std::string>("BackendError"));
  EXPECT_NEAR(report.em, 2.0 / 3.0, 1e-12);
}

TEST_F(RunBenchmarkTest, ModeSweepGivesFourRows) {
  std::vector<std::string> rows;
  for (auto mode : {PipelineMode::kFull, PipelineMode::kNoDecompose, PipelineMode::kNoFusion,
                    PipelineMode::kTranslateQa}) {
    auto report = run(mode, 2, 3);
    EXPECT_EQ(report.errors, 0u) << to_string(mode);
    EXPECT_DOUBLE_EQ(report.em, 1.0) << to_string(mode);
    rows.push_back(format_report_row(report));
  }
  EXPECT_EQ(rows.size(), 4u);
  EXPECT_NE(rows[3].find("translate_qa"), std::string::npos);
}

TEST_F(RunBenchmarkTest, MissingLanguageIsFlagged) {
  PipelineConfig p;
  Solver solver({*backends.chat, *backends.embed}, prompts, indexes, p);
  BenchmarkItem only_en{"x", {{kEn, "Who?"}}, {"A"}, std::nullopt};
  auto report = run_benchmark({only_en}, kDe, solver, dir / "missing", {"t", 1, false});
  EXPECT_EQ(report.errors, 1u);
  EXPECT_EQ(report.records[0].error_kind, std::optional<std::string>("MissingQuestion"));
}

}  // namespace
}  // namespace dapt

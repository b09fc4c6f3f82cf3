#include <gtest/gtest.h>

#include <sstream>

#include "dapt/cli.hpp"
#include "dapt/errors.hpp"
#include "scenario.hpp"

namespace dapt {
namespace {

using testing::ScenarioFiles;

class FailingChat : public ChatBackend {
 public:
  Completion complete(const ChatRequest&) override {
    ++calls;
    throw BackendError(BackendFailure::kTransport, "network disabled");
  }
  BackendIdentity identity() const override { return {BackendKind::kChat, "offline", "", 0}; }
  int calls = 0;
};

class FailingEmbed : public EmbedBackend {
 public:
  std::vector<Vector> embed(const EmbedRequest&) override {
    ++calls;
    throw BackendError(BackendFailure::kTransport, "network disabled");
  }
  BackendIdentity identity() const override { return {BackendKind::kEmbed, "offline", "", 0}; }
  int calls = 0;
};

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args, std::shared_ptr<ChatBackend> chat = nullptr,
        std::shared_ptr<EmbedBackend> embed = nullptr) {
  args.insert(args.begin(), "dapt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  CliEnv env{out, err, std::move(chat), std::move(embed)};
  Run r;
  r.status = run_cli(static_cast<int>(argv.size()), argv.data(), env);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string test_name() { return ::testing::UnitTest::GetInstance()->current_test_info()->name(); }

class CliScenarioTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = testing::fresh_dir("cli_" + test_name());
    files = testing::write_inception_scenario(dir);
  }

  std::vector<std::string> ask_args(std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"ask",          testing::kInceptionQuestion,
                                  "--lang",       "de",
                                  "--corpus-dir", files.corpus_dir.string(),
                                  "--dataset",    files.dataset,
                                  "--script",     files.script.string(),
                                  "--out",        (dir / "out").string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
  }

  nlohmann::json trace() {
    return nlohmann::json::parse(testing::read_file(dir / "out" / "films.de.ask.trace.json"));
  }

  std::filesystem::path dir;
  ScenarioFiles files;
};

TEST(CliIndexTest, IndexesAndReusesSidecar) {
  auto dir = testing::fresh_dir("cli_index");
  testing::write_file(dir / "c.en.jsonl",
                      "{\"id\":\"a\",\"text\":\"alpha\"}\n{\"id\":\"b\",\"text\":\"beta\"}\n"
                      "{\"id\":\"c\",\"text\":\"gamma\"}\n");
  auto embed = std::make_shared<ScriptedEmbedder>(16);
  auto first = run({"index", (dir / "c.en.jsonl").string(), "--lang", "en"}, nullptr, embed);
  EXPECT_EQ(first.status, 0) << first.err;
  EXPECT_EQ(first.out.rfind("indexed 3 docs", 0), 0u) << first.out;
  const auto calls = embed->call_count();
  EXPECT_GT(calls, 0u);

  auto second = run({"index", (dir / "c.en.jsonl").string(), "--lang", "en"}, nullptr, embed);
  EXPECT_EQ(second.status, 0);
  EXPECT_NE(second.out.find("cache hit"), std::string::npos);
  EXPECT_EQ(embed->call_count(), calls);
}

TEST(CliIndexTest, MissingCorpusExitsTwo) {
  auto r = run({"index", "/nonexistent/corpus.jsonl"}, nullptr, std::make_shared<ScriptedEmbedder>());
  EXPECT_EQ(r.status, 2);
  EXPECT_TRUE(r.out.empty());
  EXPECT_FALSE(r.err.empty());
}

TEST(CliUsageTest, BadInvocations) {
  EXPECT_EQ(run({}).status, 2);
  EXPECT_EQ(run({"frobnicate"}).status, 2);
  EXPECT_EQ(run({"ask", "q?", "--mode", "fastest"}).status, 2);
  EXPECT_EQ(run({"ask", "q?", "--top-k", "zero"}).status, 2);
  EXPECT_EQ(run({"ask", "q?", "--tau", "1.5"}).status, 2);
  EXPECT_EQ(run({"--help"}).status, 0);
}

TEST_F(CliScenarioTest, AskPrintsScriptedAnswer) {
  auto r = run(ask_args());
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(r.out, std::string(testing::kInceptionAnswer) + "\n");
  auto t = trace();
  EXPECT_EQ(t["final_answer"], testing::kInceptionAnswer);
  EXPECT_EQ(t["mode"], "full");
  EXPECT_EQ(t["merges"].size(), 1u);
}

TEST_F(CliScenarioTest, AskTraceIsByteStable) {
  ASSERT_EQ(run(ask_args()).status, 0);
  auto first = testing::read_file(dir / "out" / "films.de.ask.trace.json");
  ASSERT_EQ(run(ask_args()).status, 0);
  EXPECT_EQ(testing::read_file(dir / "out" / "films.de.ask.trace.json"), first);
}

TEST_F(CliScenarioTest, MissingEnglishIndexExitsTwo) {
  std::filesystem::remove(files.corpus_dir / "films.en.jsonl");
  auto r = run(ask_args());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("MissingIndex"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
}

TEST_F(CliScenarioTest, NoDecomposeTraceHasOneStep) {
  auto r = run(ask_args({"--mode", "no_decompose"}));
  ASSERT_EQ(r.status, 0) << r.err;
  auto t = trace();
  EXPECT_EQ(t["mode"], "no_decompose");
  ASSERT_EQ(t["steps"].size(), 1u);
  EXPECT_EQ(t["steps"][0]["paths"].size(), 1u);
  EXPECT_TRUE(t["synthesis"].is_null());
}

TEST_F(CliScenarioTest, FlagOverridesFileOverridesDefault) {
  testing::write_file(dir / "run.conf", "# sample\ntau = 0.5\ntop-k = 5\nmax-regen=1\n");
  auto r = run(ask_args({"--config", (dir / "run.conf").string(), "--top-k", "2"}));
  ASSERT_EQ(r.status, 0) << r.err;
  auto cfg = trace()["config"];
  EXPECT_DOUBLE_EQ(cfg["tau"].get<double>(), 0.5);
  EXPECT_EQ(cfg["top_k"], 2);
  EXPECT_EQ(cfg["max_regen"], 1);

  auto defaults = run(ask_args());
  ASSERT_EQ(defaults.status, 0);
  cfg = trace()["config"];
  EXPECT_DOUBLE_EQ(cfg["tau"].get<double>(), 0.8);
  EXPECT_EQ(cfg["top_k"], 3);
  EXPECT_EQ(cfg["max_regen"], 2);
}

TEST_F(CliScenarioTest, BadConfigFileExitsTwo) {
  testing::write_file(dir / "bad.conf", "colour = blue\n");
  EXPECT_EQ(run(ask_args({"--config", (dir / "bad.conf").string()})).status, 2);
  EXPECT_EQ(run(ask_args({"--config", (dir / "absent.conf").string()})).status, 2);
}

TEST_F(CliScenarioTest, ReplayMakesNoBackendCalls) {
  auto cache = (dir / "cache.jsonl").string();
  auto recorded = run(ask_args({"--record", cache}));
  ASSERT_EQ(recorded.status, 0) << recorded.err;
  auto recorded_trace = testing::read_file(dir / "out" / "films.de.ask.trace.json");

  auto chat = std::make_shared<FailingChat>();
  auto embed = std::make_shared<FailingEmbed>();
  auto args = ask_args({"--replay", cache});
  auto replayed = run(args, chat, embed);
  ASSERT_EQ(replayed.status, 0) << replayed.err;
  EXPECT_EQ(replayed.out, recorded.out);
  EXPECT_EQ(chat->calls, 0);
  EXPECT_EQ(embed->calls, 0);
  EXPECT_EQ(testing::read_file(dir / "out" / "films.de.ask.trace.json"), recorded_trace);
}

TEST_F(CliScenarioTest, ReplayMissIsAPipelineFailure) {
  testing::write_file(dir / "empty_cache.jsonl", "");
  auto r = run(ask_args({"--replay", (dir / "empty_cache.jsonl").string()}),
               std::make_shared<FailingChat>(), std::make_shared<FailingEmbed>());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("CacheMiss"), std::string::npos);
}

class CliBenchTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = testing::fresh_dir("cli_" + test_name());
    files = testing::write_oracle_benchmark(dir);
  }

  std::vector<std::string> bench_args(const std::filesystem::path& bench,
                                      std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"bench",        bench.string(),
                                  "--lang",       "de",
                                  "--corpus-dir", files.corpus_dir.string(),
                                  "--dataset",    files.dataset,
                                  "--script",     files.script.string(),
                                  "--out",        (dir / "out").string(),
                                  "--jobs",       "2"};
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
  }

  std::filesystem::path dir;
  ScenarioFiles files;
};

TEST_F(CliBenchTest, TwoItemBenchmarkPrintsPerfectRow) {
  auto all = testing::read_file(files.benchmark);
  auto cut = all.find('\n', all.find('\n') + 1);
  testing::write_file(dir / "two.jsonl", all.substr(0, cut + 1));
  auto r = run(bench_args(dir / "two.jsonl"));
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("EM 100.0 F1 100.0"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("n=2"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "full" / "de" / "report.json"));
}

TEST_F(CliBenchTest, FourModeSweepPrintsFourRows) {
  auto r = run(bench_args(files.benchmark, {"--modes", "full,no_decompose,no_fusion,translate_qa"}));
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 4);
  for (const char* mode : {"full", "no_decompose", "no_fusion", "translate_qa"}) {
    EXPECT_NE(r.out.find(mode), std::string::npos) << mode;
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / mode / "de" / "records.de.jsonl")) << mode;
  }
}

TEST_F(CliBenchTest, EmptyBenchmarkExitsTwo) {
  testing::write_file(dir / "empty.jsonl", "");
  auto r = run(bench_args(dir / "empty.jsonl"));
  EXPECT_EQ(r.status, 2);
  EXPECT_TRUE(r.out.empty());
}

TEST_F(CliBenchTest, ItemFailureGivesNonzeroExit) {
  auto chat = ScriptedChat::from_json(testing::oracle_script()["chat"]);
  chat->set_responder([](const ChatRequest& req) -> std::optional<std::string> {
    if (req.last_user_message().find("Question: Wer malte die Mona Lisa?") != std::string::npos) {
      throw BackendError(BackendFailure::kTransport, "boom");
    }
    return std::nullopt;
  });
  auto r = run(bench_args(files.benchmark), std::move(chat));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("errors=1"), std::string::npos) << r.out;
}

}  // namespace
}  // namespace dapt

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "dapt/backends.hpp"
#include "dapt/errors.hpp"
#include "httplib.h"

namespace dapt {
namespace {

// Local OpenAI-compatible stand-in. Handlers are installed per test.
class FakeServer {
 public:
  FakeServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  httplib::Server& server() { return server_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

HttpOptions options_for(const FakeServer& fake) {
  HttpOptions o;
  o.base_url = fake.url();
  o.model = "test-model";
  o.api_key = "secret";
  o.initial_backoff_ms = 1;
  o.timeout_s = 5;
  return o;
}

ChatRequest hello() {
  ChatRequest r;
  r.messages = {{Role::kUser, "hello"}};
  r.tag = "answer";
  return r;
}

std::string chat_body(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
                        {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 2}}}}
      .dump();
}

TEST(HttpChatTest, RetriesRateLimitThenSucceeds) {
  FakeServer fake;
  std::atomic<int> hits{0};
  std::string auth;
  nlohmann::json seen;
  fake.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (++hits <= 2) {
      res.status = 429;
      return;
    }
    auth = req.get_header_value("Authorization");
    seen = nlohmann::json::parse(req.body);
    res.set_content(chat_body("Paris"), "application/json");
  });
  auto ledger = std::make_shared<UsageLedger>();
  HttpChatBackend chat(options_for(fake), ledger);
  auto c = chat.complete(hello());
  EXPECT_EQ(c.text, "Paris");
  EXPECT_EQ(chat.retry_count(), 2u);
  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(auth, "Bearer secret");
  EXPECT_EQ(seen["model"], "test-model");
  EXPECT_EQ(seen["temperature"], 0.0);
  EXPECT_EQ(c.usage.prompt_tokens, 7);
  EXPECT_EQ(ledger->snapshot().at("answer").completion_tokens, 2);
}

TEST(HttpChatTest, UnauthorizedIsNotRetried) {
  FakeServer fake;
  std::atomic<int> hits{0};
  fake.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 401;
  });
  HttpChatBackend chat(options_for(fake));
  try {
    chat.complete(hello());
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.failure(), BackendFailure::kAuth);
  }
  EXPECT_EQ(hits.load(), 1);
  EXPECT_EQ(chat.retry_count(), 0u);
}

TEST(HttpChatTest, ExhaustedRetriesClassifyFailure) {
  FakeServer fake;
  fake.server().Post("/v1/chat/completions",
                     [&](const httplib::Request&, httplib::Response& res) { res.status = 429; });
  fake.server().Post("/v2/chat/completions",
                     [&](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  HttpChatBackend limited(options_for(fake));
  try {
    limited.complete(hello());
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.failure(), BackendFailure::kRateLimitExhausted);
  }
  EXPECT_EQ(limited.retry_count(), 2u);

  auto o = options_for(fake);
  o.base_url.replace(o.base_url.size() - 2, 2, "v2");
  HttpChatBackend failing(o);
  try {
    failing.complete(hello());
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.failure(), BackendFailure::kTransport);
  }
}

TEST(HttpChatTest, ConnectionRefusedIsTransport) {
  HttpOptions o;
  o.base_url = "http://127.0.0.1:1/v1";
  o.model = "m";
  o.initial_backoff_ms = 1;
  o.max_attempts = 2;
  HttpChatBackend chat(o);
  try {
    chat.complete(hello());
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.failure(), BackendFailure::kTransport);
  }
  EXPECT_EQ(chat.retry_count(), 1u);
}

TEST(HttpChatTest, EmptyChoicesIsEmptyResponse) {
  FakeServer fake;
  fake.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices": []})", "application/json");
  });
  HttpChatBackend chat(options_for(fake));
  try {
    chat.complete(hello());
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.failure(), BackendFailure::kEmptyResponse);
  }
}

nlohmann::json embedding(std::size_t index, std::size_t dim, double fill = 1.0) {
  return {{"index", index}, {"embedding", std::vector<double>(dim, fill)}};
}

TEST(HttpEmbedTest, MixedDimensionsInOneBatch) {
  FakeServer fake;
  fake.server().Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
    nlohmann::json body = {{"data", {embedding(0, 768), embedding(1, 384)}}};
    res.set_content(body.dump(), "application/json");
  });
  HttpEmbedBackend embed(options_for(fake));
  try {
    embed.embed(EmbedRequest{{"a", "b"}});
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.failure(), BackendFailure::kDimensionMismatch);
  }
}

TEST(HttpEmbedTest, ReordersByIndexAndLearnsDimension) {
  FakeServer fake;
  fake.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    auto in = nlohmann::json::parse(req.body);
    nlohmann::json data = nlohmann::json::array();
    const std::size_t n = in["input"].size();
    for (std::size_t i = n; i-- > 0;) data.push_back(embedding(i, 4, static_cast<double>(i + 1)));
    res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
  });
  HttpEmbedBackend embed(options_for(fake));
  auto v = embed.embed(EmbedRequest{{"a", "b", "c"}});
  ASSERT_EQ(v.size(), 3u);
  EXPECT_NEAR(v[0][0], 0.5, 1e-12);
  EXPECT_EQ(embed.identity().dimension, 4u);
  EXPECT_EQ(embed.identity().fingerprint(), "embed|test-model|" + fake.url() + "/embeddings");
}

TEST(HttpEmbedTest, DimensionChangeAcrossCalls) {
  FakeServer fake;
  std::atomic<int> hits{0};
  fake.server().Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
    const std::size_t dim = ++hits == 1 ? 8 : 6;
    res.set_content(nlohmann::json{{"data", {embedding(0, dim)}}}.dump(), "application/json");
  });
  HttpEmbedBackend embed(options_for(fake));
  embed.embed(EmbedRequest{{"a"}});
  EXPECT_THROW(embed.embed(EmbedRequest{{"b"}}), BackendError);
}

TEST(HttpOptionsTest, FromEnvironment) {
  ::setenv("DAPT_EMBED_URL", "http://localhost:9/v1", 1);
  ::setenv("DAPT_EMBED_MODEL", "bge-m3", 1);
  ::unsetenv("DAPT_EMBED_KEY");
  auto o = http_options_from_env(BackendKind::kEmbed);
  ASSERT_TRUE(o);
  EXPECT_EQ(o->model, "bge-m3");
  EXPECT_TRUE(o->api_key.empty());
  ::unsetenv("DAPT_EMBED_URL");
  EXPECT_FALSE(http_options_from_env(BackendKind::kEmbed));
}

}  // namespace
}  // namespace dapt

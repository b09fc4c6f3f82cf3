#include <algorithm>
#include <atomic>
#include <chrono>
#include <semaphore>
#include <thread>

#include "dapt/backends.hpp"
#include "dapt/errors.hpp"
#include "httplib.h"

namespace dapt {

// Shared POST-with-retry machinery for both clients. One httplib::Client is
// created per request so the transport can be used from many threads.
class HttpTransport {
 public:
  explicit HttpTransport(const HttpOptions& options)
      : options_(options), slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options.max_in_flight))) {
    split_url(options.base_url);
  }

  nlohmann::json post(const std::string& route, const nlohmann::json& body) {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<1024>& s;
      ~Release() { s.release(); }
    } release{slots_};

    const std::string path = prefix_ + route;
    const std::string payload = body.dump();
    int last_status = 0;
    std::string last_error;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
      if (attempt > 1) {
        retries_.fetch_add(1);
        auto delay = std::chrono::milliseconds(
            static_cast<long long>(options_.initial_backoff_ms) << (attempt - 2));
        std::this_thread::sleep_for(delay);
      }
      httplib::Client client(origin_);
      client.set_connection_timeout(options_.timeout_s);
      client.set_read_timeout(options_.timeout_s);
      client.set_write_timeout(options_.timeout_s);
      httplib::Headers headers;
      if (!options_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + options_.api_key);
      }
      auto res = client.Post(path, headers, payload, "application/json");
      if (!res) {
        last_status = 0;
        last_error = httplib::to_string(res.error());
        continue;
      }
      last_status = res->status;
      if (res->status == 401 || res->status == 403) {
        throw BackendError(BackendFailure::kAuth,
                           "HTTP " + std::to_string(res->status) + " from " + origin_ + path);
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        throw BackendError(BackendFailure::kTransport,
                           "HTTP " + std::to_string(res->status) + ": " + res->body);
      }
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw BackendError(BackendFailure::kTransport,
                           std::string("unparseable response body: ") + e.what());
      }
    }
    if (last_status == 429) {
      throw BackendError(BackendFailure::kRateLimitExhausted,
                         "rate limited after " + std::to_string(options_.max_attempts) +
                             " attempts");
    }
    throw BackendError(BackendFailure::kTransport,
                       last_error + " after " + std::to_string(options_.max_attempts) +
                           " attempts");
  }

  std::size_t retries() const { return retries_.load(); }
  std::string endpoint(const std::string& route) const { return origin_ + prefix_ + route; }

 private:
  void split_url(std::string url) {
    for (const char* suffix : {"/chat/completions", "/embeddings"}) {
      std::string s(suffix);
      if (url.size() >= s.size() && url.compare(url.size() - s.size(), s.size(), s) == 0) {
        url.resize(url.size() - s.size());
      }
    }
    while (!url.empty() && url.back() == '/') url.pop_back();
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      throw ConfigError("backend URL must include a scheme: " + url);
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      origin_ = url;
    } else {
      origin_ = url.substr(0, path_start);
      prefix_ = url.substr(path_start);
    }
  }

  HttpOptions options_;
  std::string origin_;
  std::string prefix_;
  std::counting_semaphore<1024> slots_;
  std::atomic<std::size_t> retries_{0};
};

HttpChatBackend::HttpChatBackend(HttpOptions options, std::shared_ptr<UsageLedger> ledger)
    : transport_(std::make_unique<HttpTransport>(options)),
      options_(std::move(options)),
      ledger_(std::move(ledger)) {}

HttpChatBackend::~HttpChatBackend() = default;

Completion HttpChatBackend::complete(const ChatRequest& request) {
  request.validate();
  nlohmann::json body = to_json(request);
  body.erase("kind");
  body.erase("tag");
  body["model"] = options_.model;
  auto reply = transport_->post("/chat/completions", body);

  std::string text;
  try {
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    if (content.is_string()) text = content.get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw BackendError(BackendFailure::kEmptyResponse, "response has no choices[0].message");
  }
  if (text.empty()) throw BackendError(BackendFailure::kEmptyResponse, "empty completion");

  TokenUsage usage;
  usage.calls = 1;
  if (reply.contains("usage") && reply["usage"].is_object()) {
    usage.prompt_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
    usage.completion_tokens = reply["usage"].value("completion_tokens", std::int64_t{0});
  }
  if (ledger_) ledger_->add(request.tag, usage);
  return {std::move(text), usage};
}

BackendIdentity HttpChatBackend::identity() const {
  return {BackendKind::kChat, options_.model, transport_->endpoint("/chat/completions"), 0};
}

std::size_t HttpChatBackend::retry_count() const { return transport_->retries(); }

HttpEmbedBackend::HttpEmbedBackend(HttpOptions options)
    : transport_(std::make_unique<HttpTransport>(options)),
      options_(std::move(options)),
      dimension_(options_.dimension) {}

HttpEmbedBackend::~HttpEmbedBackend() = default;

std::vector<Vector> HttpEmbedBackend::embed(const EmbedRequest& request) {
  request.validate();
  nlohmann::json body = {{"model", options_.model}, {"input", request.texts}};
  auto reply = transport_->post("/embeddings", body);
  if (!reply.contains("data") || !reply["data"].is_array()) {
    throw BackendError(BackendFailure::kEmptyResponse, "embedding response has no data");
  }

  std::vector<std::pair<std::size_t, Vector>> rows;
  std::size_t position = 0;
  for (const auto& item : reply["data"]) {
    rows.emplace_back(item.value("index", position), item.at("embedding").get<Vector>());
    ++position;
  }
  if (rows.size() != request.texts.size()) {
    throw BackendError(BackendFailure::kEmptyResponse,
                       "expected " + std::to_string(request.texts.size()) +
                           " embeddings, got " + std::to_string(rows.size()));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  std::size_t expected;
  {
    std::lock_guard lock(mu_);
    if (dimension_ == 0) dimension_ = rows.front().second.size();
    expected = dimension_;
  }
  std::vector<Vector> out;
  out.reserve(rows.size());
  for (auto& [_, v] : rows) {
    if (v.size() != expected) {
      throw BackendError(BackendFailure::kDimensionMismatch,
                         "expected dimension " + std::to_string(expected) + ", got " +
                             std::to_string(v.size()));
    }
    normalize_in_place(v);
    out.push_back(std::move(v));
  }
  return out;
}

BackendIdentity HttpEmbedBackend::identity() const {
  std::lock_guard lock(mu_);
  return {BackendKind::kEmbed, options_.model, transport_->endpoint("/embeddings"), dimension_};
}

std::size_t HttpEmbedBackend::retry_count() const { return transport_->retries(); }

}  // namespace dapt

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace dapt {

using Vector = std::vector<double>;

enum class Role { kSystem, kUser };

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 512;
  std::string tag;  // pipeline stage, used for accounting

  /// Content of the last user message; empty when there is none.
  const std::string& last_user_message() const;
  /// Throws std::invalid_argument when the request violates its invariants.
  void validate() const;
};

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t calls = 0;

  TokenUsage& operator+=(const TokenUsage& other);
  bool operator==(const TokenUsage&) const = default;
};

struct Completion {
  std::string text;
  TokenUsage usage;
};

struct EmbedRequest {
  std::vector<std::string> texts;

  void validate() const;
};

enum class BackendKind { kChat, kEmbed };

struct BackendIdentity {
  BackendKind kind = BackendKind::kChat;
  std::string model_name;
  std::string endpoint;
  std::size_t dimension = 0;  // embed backends only

  /// Stable string used to key index sidecars. Excludes the dimension, which
  /// HTTP embedders only learn from their first reply.
  std::string fingerprint() const;
};

/// Per-run token counters keyed by request tag. Thread-safe.
class UsageLedger {
 public:
  void add(const std::string& tag, const TokenUsage& usage);
  std::map<std::string, TokenUsage> snapshot() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, TokenUsage> by_tag_;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual Completion complete(const ChatRequest& request) = 0;
  virtual BackendIdentity identity() const = 0;
};

class EmbedBackend {
 public:
  virtual ~EmbedBackend() = default;
  /// One unit-norm vector per input text, in input order.
  virtual std::vector<Vector> embed(const EmbedRequest& request) = 0;
  virtual BackendIdentity identity() const = 0;
};

/// Scales `v` to unit L2 norm. Throws BackendError on a zero or non-finite
/// vector.
void normalize_in_place(Vector& v);
double cosine(const Vector& a, const Vector& b);

nlohmann::json to_json(const ChatRequest& request);
nlohmann::json to_json(const EmbedRequest& request);

// ---------------------------------------------------------------------------
// Scripted backends for tests and offline demos.

/// A rule fires when its tag (if set) equals the request tag and every
/// `contains` fragment occurs in the last user message.
struct ScriptRule {
  std::optional<std::string> tag;
  std::vector<std::string> contains;
  std::string reply;
};

struct ChatCall {
  std::string tag;
  std::string user_message;
};

/// Deterministic chat backend. Replies are a pure function of the request:
/// first a custom responder (if any), then the first matching rule, then the
/// default reply. With neither a match nor a default it throws
/// BackendError(kEmptyResponse).
class ScriptedChat : public ChatBackend {
 public:
  using Responder = std::function<std::optional<std::string>(const ChatRequest&)>;

  ScriptedChat() = default;
  explicit ScriptedChat(std::vector<ScriptRule> rules,
                        std::optional<std::string> default_reply = std::nullopt);

  void add_rule(ScriptRule rule);
  void set_default(std::string reply) { default_reply_ = std::move(reply); }
  void set_responder(Responder responder) { responder_ = std::move(responder); }

  Completion complete(const ChatRequest& request) override;
  BackendIdentity identity() const override;

  std::vector<ChatCall> calls() const;
  std::size_t count_calls(const std::string& tag) const;
  void clear_calls();

  /// {"rules":[{"tag":..,"contains":[..],"reply":..}], "default": ..}
  static std::unique_ptr<ScriptedChat> from_json(const nlohmann::json& j);

 private:
  std::vector<ScriptRule> rules_;
  std::optional<std::string> default_reply_;
  Responder responder_;
  mutable std::mutex mu_;
  std::vector<ChatCall> calls_;
};

/// Feature-hashing embedder: lowercased word unigrams and character trigrams
/// hashed into `dimension` buckets. Deterministic across platforms, so
/// identical texts map to identical vectors and overlapping texts to
/// similar ones.
class HashingEmbedder : public EmbedBackend {
 public:
  explicit HashingEmbedder(std::size_t dimension = 64);

  std::vector<Vector> embed(const EmbedRequest& request) override;
  BackendIdentity identity() const override;
  Vector embed_one(const std::string& text) const;

 private:
  std::size_t dimension_;
};

/// Table lookup with a hashing fallback for texts not in the table. Records
/// every call for shape assertions.
class ScriptedEmbedder : public EmbedBackend {
 public:
  explicit ScriptedEmbedder(std::size_t dimension = 64);

  void set(const std::string& text, Vector v);

  std::vector<Vector> embed(const EmbedRequest& request) override;
  BackendIdentity identity() const override;

  std::size_t call_count() const;
  std::size_t texts_embedded() const;

  /// {"dimension": n, "table": {"text": [..], ...}}
  static std::unique_ptr<ScriptedEmbedder> from_json(const nlohmann::json& j);

 private:
  std::size_t dimension_;
  HashingEmbedder fallback_;
  std::map<std::string, Vector> table_;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
  std::size_t texts_ = 0;
};

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP clients.

struct HttpOptions {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string model;
  std::string api_key;
  int max_attempts = 3;
  int initial_backoff_ms = 500;
  int timeout_s = 120;
  std::size_t max_in_flight = 8;
  std::size_t dimension = 0;  // embed: expected size, 0 = learn from first reply
};

/// Reads DAPT_CHAT_URL / DAPT_CHAT_MODEL / DAPT_CHAT_KEY (chat) or the
/// DAPT_EMBED_* equivalents. Returns nullopt when the URL is unset.
std::optional<HttpOptions> http_options_from_env(BackendKind kind);

class HttpTransport;

class HttpChatBackend : public ChatBackend {
 public:
  HttpChatBackend(HttpOptions options, std::shared_ptr<UsageLedger> ledger = nullptr);
  ~HttpChatBackend() override;

  Completion complete(const ChatRequest& request) override;
  BackendIdentity identity() const override;

  /// Number of retried attempts across the lifetime of this client.
  std::size_t retry_count() const;

 private:
  std::unique_ptr<HttpTransport> transport_;
  HttpOptions options_;
  std::shared_ptr<UsageLedger> ledger_;
};

class HttpEmbedBackend : public EmbedBackend {
 public:
  explicit HttpEmbedBackend(HttpOptions options);
  ~HttpEmbedBackend() override;

  std::vector<Vector> embed(const EmbedRequest& request) override;
  BackendIdentity identity() const override;
  std::size_t retry_count() const;

 private:
  std::unique_ptr<HttpTransport> transport_;
  HttpOptions options_;
  mutable std::mutex mu_;
  std::size_t dimension_;
};

// ---------------------------------------------------------------------------
// Record/replay cache.

enum class CacheMode { kRecord, kReplay };

/// Append-only JSONL store of {key, request, response}. Keys are SHA-256 of
/// the canonical request JSON. Writes are serialized.
class ReplayStore {
 public:
  ReplayStore(std::string path, CacheMode mode);

  CacheMode mode() const noexcept { return mode_; }
  const std::string& path() const noexcept { return path_; }

  std::optional<nlohmann::json> lookup(const std::string& key) const;
  void append(const std::string& key, const nlohmann::json& request,
              const nlohmann::json& response);
  std::size_t size() const;

 private:
  std::string path_;
  CacheMode mode_;
  mutable std::mutex mu_;
  std::map<std::string, nlohmann::json> entries_;
};

std::string request_key(const nlohmann::json& request);

/// Wraps a chat backend. `inner` may be null in replay mode.
class CachedChat : public ChatBackend {
 public:
  CachedChat(std::shared_ptr<ChatBackend> inner, std::shared_ptr<ReplayStore> store,
             BackendIdentity identity = {BackendKind::kChat, "replay", "", 0});

  Completion complete(const ChatRequest& request) override;
  BackendIdentity identity() const override;

 private:
  std::shared_ptr<ChatBackend> inner_;
  std::shared_ptr<ReplayStore> store_;
  BackendIdentity identity_;
};

class CachedEmbed : public EmbedBackend {
 public:
  CachedEmbed(std::shared_ptr<EmbedBackend> inner, std::shared_ptr<ReplayStore> store,
              BackendIdentity identity = {BackendKind::kEmbed, "replay", "", 0});

  std::vector<Vector> embed(const EmbedRequest& request) override;
  BackendIdentity identity() const override;

 private:
  std::shared_ptr<EmbedBackend> inner_;
  std::shared_ptr<ReplayStore> store_;
  BackendIdentity identity_;
};

}  // namespace dapt

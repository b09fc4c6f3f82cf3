#include "dapt/backends.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

#include "dapt/errors.hpp"

namespace dapt {

const char* to_string(BackendFailure failure) noexcept {
  switch (failure) {
    case BackendFailure::kTransport:
      return "Transport";
    case BackendFailure::kAuth:
      return "Auth";
    case BackendFailure::kRateLimitExhausted:
      return "RateLimitExhausted";
    case BackendFailure::kEmptyResponse:
      return "EmptyResponse";
    case BackendFailure::kDimensionMismatch:
      return "DimensionMismatch";
  }
  return "Transport";
}

namespace {

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 1469598103934665603ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

const std::string& ChatRequest::last_user_message() const {
  static const std::string kEmpty;
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::kUser) return it->content;
  }
  return kEmpty;
}

void ChatRequest::validate() const {
  bool has_user = std::any_of(messages.begin(), messages.end(),
                              [](const ChatMessage& m) { return m.role == Role::kUser; });
  if (!has_user) throw std::invalid_argument("chat request has no user message");
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
}

void EmbedRequest::validate() const {
  if (texts.empty()) throw std::invalid_argument("embed request has no texts");
  for (const auto& t : texts) {
    if (is_blank(t)) throw std::invalid_argument("embed request contains a blank text");
  }
}

TokenUsage& TokenUsage::operator+=(const TokenUsage& other) {
  prompt_tokens += other.prompt_tokens;
  completion_tokens += other.completion_tokens;
  calls += other.calls;
  return *this;
}

std::string BackendIdentity::fingerprint() const {
  std::string out = kind == BackendKind::kChat ? "chat" : "embed";
  out += "|" + model_name + "|" + endpoint;
  return out;
}

void UsageLedger::add(const std::string& tag, const TokenUsage& usage) {
  std::lock_guard lock(mu_);
  by_tag_[tag] += usage;
}

std::map<std::string, TokenUsage> UsageLedger::snapshot() const {
  std::lock_guard lock(mu_);
  return by_tag_;
}

void normalize_in_place(Vector& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw BackendError(BackendFailure::kEmptyResponse,
                       "embedding has zero or non-finite norm");
  }
  for (double& x : v) x /= norm;
}

double cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw BackendError(BackendFailure::kDimensionMismatch,
                       "cosine of vectors with sizes " + std::to_string(a.size()) +
                           " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

nlohmann::json to_json(const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", m.role == Role::kSystem ? "system" : "user"},
                        {"content", m.content}});
  }
  return {{"kind", "chat"},
          {"messages", messages},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens},
          {"tag", request.tag}};
}

nlohmann::json to_json(const EmbedRequest& request) {
  return {{"kind", "embed"}, {"texts", request.texts}};
}

// ---------------------------------------------------------------------------

ScriptedChat::ScriptedChat(std::vector<ScriptRule> rules,
                           std::optional<std::string> default_reply)
    : rules_(std::move(rules)), default_reply_(std::move(default_reply)) {}

void ScriptedChat::add_rule(ScriptRule rule) { rules_.push_back(std::move(rule)); }

Completion ScriptedChat::complete(const ChatRequest& request) {
  request.validate();
  const std::string& user = request.last_user_message();
  {
    std::lock_guard lock(mu_);
    calls_.push_back({request.tag, user});
  }

  std::optional<std::string> reply;
  if (responder_) reply = responder_(request);
  if (!reply) {
    for (const auto& rule : rules_) {
      if (rule.tag && *rule.tag != request.tag) continue;
      bool all = std::all_of(rule.contains.begin(), rule.contains.end(),
                             [&](const std::string& frag) {
                               return user.find(frag) != std::string::npos;
                             });
      if (all) {
        reply = rule.reply;
        break;
      }
    }
  }
  if (!reply) reply = default_reply_;
  if (!reply) {
    throw BackendError(BackendFailure::kEmptyResponse,
                       "no scripted reply for tag '" + request.tag + "'");
  }

  auto words = [](const std::string& s) {
    std::int64_t n = 0;
    bool in_word = false;
    for (unsigned char c : s) {
      bool space = std::isspace(c) != 0;
      if (!space && !in_word) ++n;
      in_word = !space;
    }
    return n;
  };
  TokenUsage usage;
  for (const auto& m : request.messages) usage.prompt_tokens += words(m.content);
  usage.completion_tokens = words(*reply);
  usage.calls = 1;
  return {*reply, usage};
}

BackendIdentity ScriptedChat::identity() const {
  return {BackendKind::kChat, "scripted", "local", 0};
}

std::vector<ChatCall> ScriptedChat::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t ScriptedChat::count_calls(const std::string& tag) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(
      calls_.begin(), calls_.end(), [&](const ChatCall& c) { return c.tag == tag; }));
}

void ScriptedChat::clear_calls() {
  std::lock_guard lock(mu_);
  calls_.clear();
}

std::unique_ptr<ScriptedChat> ScriptedChat::from_json(const nlohmann::json& j) {
  auto chat = std::make_unique<ScriptedChat>();
  const auto rules = j.value("rules", nlohmann::json::array());
  for (const auto& jr : rules) {
    ScriptRule rule;
    if (jr.contains("tag")) rule.tag = jr["tag"].get<std::string>();
    if (jr.contains("contains")) {
      const auto& c = jr["contains"];
      if (c.is_string()) {
        rule.contains.push_back(c.get<std::string>());
      } else {
        rule.contains = c.get<std::vector<std::string>>();
      }
    }
    rule.reply = jr.at("reply").get<std::string>();
    chat->add_rule(std::move(rule));
  }
  if (j.contains("default")) chat->set_default(j["default"].get<std::string>());
  return chat;
}

// ---------------------------------------------------------------------------

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw std::invalid_argument("embedding dimension must be positive");
}

Vector HashingEmbedder::embed_one(const std::string& text) const {
  Vector v(dimension_, 0.0);
  auto bump = [&](std::string_view feature, double weight) {
    std::uint64_t h = fnv1a(feature);
    double sign = (h >> 63) != 0 ? -1.0 : 1.0;
    v[h % dimension_] += sign * weight;
  };

  std::string lowered;
  lowered.reserve(text.size());
  for (unsigned char c : text) {
    lowered.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
  }
  std::string word;
  auto flush = [&] {
    if (!word.empty()) bump("w:" + word, 1.0);
    word.clear();
  };
  for (unsigned char c : lowered) {
    if (c < 0x80 && !std::isalnum(c)) {
      flush();
    } else {
      word.push_back(static_cast<char>(c));
    }
  }
  flush();
  for (std::size_t i = 0; i + 3 <= lowered.size(); ++i) {
    bump("t:" + lowered.substr(i, 3), 0.5);
  }
  // Texts with no features (e.g. a single punctuation mark) still need a
  // direction.
  if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
    bump("empty:" + lowered, 1.0);
  }
  normalize_in_place(v);
  return v;
}

std::vector<Vector> HashingEmbedder::embed(const EmbedRequest& request) {
  request.validate();
  std::vector<Vector> out;
  out.reserve(request.texts.size());
  for (const auto& t : request.texts) out.push_back(embed_one(t));
  return out;
}

BackendIdentity HashingEmbedder::identity() const {
  return {BackendKind::kEmbed, "hashing", "local", dimension_};
}

ScriptedEmbedder::ScriptedEmbedder(std::size_t dimension)
    : dimension_(dimension), fallback_(dimension) {}

void ScriptedEmbedder::set(const std::string& text, Vector v) {
  if (v.size() != dimension_) {
    throw std::invalid_argument("scripted vector for '" + text + "' has wrong size");
  }
  normalize_in_place(v);
  std::lock_guard lock(mu_);
  table_[text] = std::move(v);
}

std::vector<Vector> ScriptedEmbedder::embed(const EmbedRequest& request) {
  request.validate();
  std::lock_guard lock(mu_);
  ++calls_;
  texts_ += request.texts.size();
  std::vector<Vector> out;
  out.reserve(request.texts.size());
  for (const auto& t : request.texts) {
    if (auto it = table_.find(t); it != table_.end()) {
      out.push_back(it->second);
    } else {
      out.push_back(fallback_.embed_one(t));
    }
  }
  return out;
}

BackendIdentity ScriptedEmbedder::identity() const {
  return {BackendKind::kEmbed, "scripted", "local", dimension_};
}

std::size_t ScriptedEmbedder::call_count() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t ScriptedEmbedder::texts_embedded() const {
  std::lock_guard lock(mu_);
  return texts_;
}

std::unique_ptr<ScriptedEmbedder> ScriptedEmbedder::from_json(const nlohmann::json& j) {
  auto embedder = std::make_unique<ScriptedEmbedder>(j.value("dimension", std::size_t{64}));
  const auto table = j.value("table", nlohmann::json::object());
  for (const auto& [text, vec] : table.items()) {
    embedder->set(text, vec.get<Vector>());
  }
  return embedder;
}

std::optional<HttpOptions> http_options_from_env(BackendKind kind) {
  const char* prefix = kind == BackendKind::kChat ? "DAPT_CHAT_" : "DAPT_EMBED_";
  auto env = [&](const char* suffix) -> std::string {
    const char* v = std::getenv((std::string(prefix) + suffix).c_str());
    return v ? std::string(v) : std::string();
  };
  HttpOptions options;
  options.base_url = env("URL");
  if (options.base_url.empty()) return std::nullopt;
  options.model = env("MODEL");
  options.api_key = env("KEY");
  return options;
}

}  // namespace dapt

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>

#include "dapt/backends.hpp"
#include "dapt/errors.hpp"

namespace dapt {

std::string request_key(const nlohmann::json& request) {
  // nlohmann::json objects are key-sorted, so dump() is canonical.
  const std::string canonical = request.dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(canonical.data(), canonical.size(), digest, &length, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

ReplayStore::ReplayStore(std::string path, CacheMode mode)
    : path_(std::move(path)), mode_(mode) {
  std::ifstream in(path_);
  if (!in) {
    if (mode_ == CacheMode::kReplay) throw IoError("cannot open replay cache " + path_);
    return;
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      entries_[j.at("key").get<std::string>()] = j.at("response");
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(line_no, std::string("cache entry: ") + e.what());
    }
  }
}

std::optional<nlohmann::json> ReplayStore::lookup(const std::string& key) const {
  std::lock_guard lock(mu_);
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  return std::nullopt;
}

void ReplayStore::append(const std::string& key, const nlohmann::json& request,
                         const nlohmann::json& response) {
  std::lock_guard lock(mu_);
  if (entries_.contains(key)) return;
  auto parent = std::filesystem::path(path_).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot append to cache " + path_);
  out << nlohmann::json{{"key", key}, {"request", request}, {"response", response}}.dump()
      << '\n';
  out.flush();
  if (!out) throw IoError("write to cache " + path_ + " failed");
  entries_[key] = response;
}

std::size_t ReplayStore::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

CachedChat::CachedChat(std::shared_ptr<ChatBackend> inner, std::shared_ptr<ReplayStore> store,
                       BackendIdentity identity)
    : inner_(std::move(inner)), store_(std::move(store)), identity_(std::move(identity)) {
  if (!store_) throw std::invalid_argument("cached backend needs a store");
  if (!inner_ && store_->mode() == CacheMode::kRecord) {
    throw std::invalid_argument("record mode needs an inner backend");
  }
}

Completion CachedChat::complete(const ChatRequest& request) {
  request.validate();
  const auto jreq = to_json(request);
  const auto key = request_key(jreq);
  if (auto hit = store_->lookup(key)) {
    TokenUsage usage{0, 0, 1};
    if (hit->contains("usage")) {
      usage.prompt_tokens = hit->at("usage").value("prompt_tokens", 0);
      usage.completion_tokens = hit->at("usage").value("completion_tokens", 0);
    }
    return {hit->at("text").get<std::string>(), usage};
  }
  if (store_->mode() == CacheMode::kReplay) {
    throw CacheMiss("no cached completion for '" + request.tag + "' request " + key);
  }
  auto completion = inner_->complete(request);
  store_->append(key, jreq,
                 {{"text", completion.text},
                  {"usage",
                   {{"prompt_tokens", completion.usage.prompt_tokens},
                    {"completion_tokens", completion.usage.completion_tokens}}}});
  return completion;
}

BackendIdentity CachedChat::identity() const {
  return inner_ ? inner_->identity() : identity_;
}

CachedEmbed::CachedEmbed(std::shared_ptr<EmbedBackend> inner,
                         std::shared_ptr<ReplayStore> store, BackendIdentity identity)
    : inner_(std::move(inner)), store_(std::move(store)), identity_(std::move(identity)) {
  if (!store_) throw std::invalid_argument("cached backend needs a store");
  if (!inner_ && store_->mode() == CacheMode::kRecord) {
    throw std::invalid_argument("record mode needs an inner backend");
  }
}

std::vector<Vector> CachedEmbed::embed(const EmbedRequest& request) {
  request.validate();
  const auto jreq = to_json(request);
  const auto key = request_key(jreq);
  if (auto hit = store_->lookup(key)) return hit->get<std::vector<Vector>>();
  if (store_->mode() == CacheMode::kReplay) {
    throw CacheMiss("no cached embedding for request " + key);
  }
  auto vectors = inner_->embed(request);
  store_->append(key, jreq, vectors);
  return vectors;
}

BackendIdentity CachedEmbed::identity() const {
  return inner_ ? inner_->identity() : identity_;
}

}  // namespace dapt

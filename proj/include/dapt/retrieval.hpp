#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dapt/backends.hpp"
#include "dapt/qgraph.hpp"

namespace dapt {

struct Document {
  std::string id;
  std::string title;
  std::string text;
  LanguageTag lang;
};

struct SearchHit {
  std::size_t row = 0;
  double score = 0.0;
};

struct RetrievedDocument {
  const Document* doc = nullptr;  // owned by the index
  double score = 0.0;
};

/// Flat exact-search index over one language's passages. Vectors are stored
/// unit-normalized, so cosine similarity is a dot product.
class CorpusIndex {
 public:
  CorpusIndex(LanguageTag lang, std::size_t dimension);

  /// Normalizes `v`. Throws std::invalid_argument on a duplicate id, blank
  /// text or wrong dimension.
  void add(Document doc, Vector v);

  const LanguageTag& lang() const noexcept { return lang_; }
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return documents_.size(); }
  bool empty() const noexcept { return documents_.empty(); }
  const std::vector<Document>& documents() const noexcept { return documents_; }
  std::span<const double> vector(std::size_t row) const;

  /// Top-k rows by cosine, descending; ties go to the smaller document id.
  std::vector<SearchHit> search(const Vector& query, std::size_t k) const;

  /// Embeds `query` and searches. An empty index returns nothing without
  /// calling the embedder.
  std::vector<RetrievedDocument> retrieve(const std::string& query, std::size_t k,
                                          EmbedBackend& embedder) const;

 private:
  LanguageTag lang_;
  std::size_t dimension_;
  std::vector<Document> documents_;
  std::vector<double> vectors_;  // row-major, size() x dimension_
  std::map<std::string, std::size_t> by_id_;
};

/// Reads `<corpus>.jsonl`: one {"id", "title", "text"} object per line.
/// Throws IoError or MalformedRecord(line).
std::vector<Document> load_corpus(const std::filesystem::path& path, const LanguageTag& lang);

struct IndexOptions {
  std::size_t batch_size = 64;
  bool use_sidecar = true;
};

struct IndexBuildStats {
  bool sidecar_hit = false;
  std::size_t embedded = 0;
};

/// `<corpus>.idx` next to the corpus file.
std::filesystem::path sidecar_path(const std::filesystem::path& corpus);

/// Loads the corpus, reuses the sidecar when the corpus modification time,
/// size and embedder fingerprint all match, and otherwise embeds in batches
/// and rewrites the sidecar.
CorpusIndex build_index(const std::filesystem::path& corpus, const LanguageTag& lang,
                        EmbedBackend& embedder, const IndexOptions& options = {},
                        IndexBuildStats* stats = nullptr);

using IndexSet = std::map<LanguageTag, std::shared_ptr<const CorpusIndex>>;

/// `<dir>/<dataset>.<lang>.jsonl`
std::filesystem::path corpus_path(const std::filesystem::path& dir, const std::string& dataset,
                                  const LanguageTag& lang);

}  // namespace dapt

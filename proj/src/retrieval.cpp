#include "dapt/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>

#include "dapt/errors.hpp"
#include "dapt/text.hpp"

namespace dapt {

namespace {

constexpr char kSidecarMagic[8] = {'D', 'A', 'P', 'T', 'I', 'D', 'X', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool read_pod(std::istream& in, T& value) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&value), sizeof(T)));
}

struct CorpusStamp {
  std::int64_t mtime = 0;
  std::uint64_t size = 0;
};

CorpusStamp stamp_of(const std::filesystem::path& path) {
  CorpusStamp s;
  s.mtime = static_cast<std::int64_t>(
      std::filesystem::last_write_time(path).time_since_epoch().count());
  s.size = std::filesystem::file_size(path);
  return s;
}

struct SidecarHeader {
  std::string fingerprint;
  CorpusStamp stamp;
  std::uint64_t rows = 0;
  std::uint64_t dimension = 0;
};

// Stores the vectors as the embedder returned them, so a cached load goes
// through the same normalization as a fresh build.
void write_sidecar(const std::filesystem::path& path, const SidecarHeader& header,
                   const std::vector<Vector>& vectors) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write index sidecar " + tmp.string());
    out.write(kSidecarMagic, sizeof(kSidecarMagic));
    write_pod(out, static_cast<std::uint64_t>(header.fingerprint.size()));
    out.write(header.fingerprint.data(), static_cast<std::streamsize>(header.fingerprint.size()));
    write_pod(out, header.stamp.mtime);
    write_pod(out, header.stamp.size);
    write_pod(out, header.rows);
    write_pod(out, header.dimension);
    for (const auto& v : vectors) {
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!out) throw IoError("write to index sidecar " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

// Returns the vectors when the sidecar matches, nullopt otherwise.
std::optional<std::vector<Vector>> read_sidecar(const std::filesystem::path& path,
                                                const SidecarHeader& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[sizeof(kSidecarMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kSidecarMagic, sizeof(magic)) != 0) {
    return std::nullopt;
  }
  std::uint64_t fp_len = 0;
  if (!read_pod(in, fp_len) || fp_len > (1u << 16)) return std::nullopt;
  std::string fingerprint(fp_len, '\0');
  if (!in.read(fingerprint.data(), static_cast<std::streamsize>(fp_len))) return std::nullopt;
  SidecarHeader h;
  if (!read_pod(in, h.stamp.mtime) || !read_pod(in, h.stamp.size) || !read_pod(in, h.rows) ||
      !read_pod(in, h.dimension)) {
    return std::nullopt;
  }
  if (fingerprint != expected.fingerprint || h.stamp.mtime != expected.stamp.mtime ||
      h.stamp.size != expected.stamp.size || h.rows != expected.rows) {
    return std::nullopt;
  }
  if (h.rows > 0 && h.dimension == 0) return std::nullopt;
  std::vector<Vector> vectors(h.rows, Vector(h.dimension));
  for (auto& v : vectors) {
    if (!in.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double)))) {
      return std::nullopt;
    }
  }
  return vectors;
}

}  // namespace

CorpusIndex::CorpusIndex(LanguageTag lang, std::size_t dimension)
    : lang_(std::move(lang)), dimension_(dimension) {}

void CorpusIndex::add(Document doc, Vector v) {
  if (documents_.empty() && dimension_ == 0) dimension_ = v.size();
  if (v.size() != dimension_ || dimension_ == 0) {
    throw std::invalid_argument("document " + doc.id + " has vector size " +
                                std::to_string(v.size()) + ", index expects " +
                                std::to_string(dimension_));
  }
  if (text::is_blank(doc.text)) throw std::invalid_argument("document " + doc.id + " is blank");
  if (by_id_.contains(doc.id)) throw std::invalid_argument("duplicate document id " + doc.id);
  normalize_in_place(v);
  by_id_.emplace(doc.id, documents_.size());
  documents_.push_back(std::move(doc));
  vectors_.insert(vectors_.end(), v.begin(), v.end());
}

std::span<const double> CorpusIndex::vector(std::size_t row) const {
  return std::span<const double>(vectors_).subspan(row * dimension_, dimension_);
}

std::vector<SearchHit> CorpusIndex::search(const Vector& query, std::size_t k) const {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  if (documents_.empty()) return {};
  if (query.size() != dimension_) {
    throw BackendError(BackendFailure::kDimensionMismatch,
                       "query has dimension " + std::to_string(query.size()) +
                           ", index has " + std::to_string(dimension_));
  }
  Vector q = query;
  normalize_in_place(q);

  std::vector<SearchHit> hits(documents_.size());
  for (std::size_t r = 0; r < documents_.size(); ++r) {
    const double* row = vectors_.data() + r * dimension_;
    double dot = 0.0;
    for (std::size_t i = 0; i < dimension_; ++i) dot += row[i] * q[i];
    hits[r] = {r, std::clamp(dot, -1.0, 1.0)};
  }
  auto better = [&](const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return documents_[a.row].id < documents_[b.row].id;
  };
  const std::size_t take = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(),
                    better);
  hits.resize(take);
  return hits;
}

std::vector<RetrievedDocument> CorpusIndex::retrieve(const std::string& query, std::size_t k,
                                                     EmbedBackend& embedder) const {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  if (documents_.empty()) return {};
  auto vectors = embedder.embed(EmbedRequest{{query}});
  if (vectors.size() != 1) {
    throw BackendError(BackendFailure::kEmptyResponse, "embedder returned no query vector");
  }
  std::vector<RetrievedDocument> out;
  for (const auto& hit : search(vectors.front(), k)) {
    out.push_back({&documents_[hit.row], hit.score});
  }
  return out;
}

std::vector<Document> load_corpus(const std::filesystem::path& path, const LanguageTag& lang) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus " + path.string());
  std::vector<Document> docs;
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
    for (const char* field : {"id", "text"}) {
      if (!j.contains(field) || !j[field].is_string()) {
        throw MalformedRecord(line_no, std::string("missing string field \"") + field + "\"");
      }
    }
    if (j.contains("title") && !j["title"].is_string()) {
      throw MalformedRecord(line_no, "\"title\" must be a string");
    }
    Document doc{j["id"].get<std::string>(), j.value("title", ""), j["text"].get<std::string>(),
                 lang};
    if (text::is_blank(doc.text)) throw MalformedRecord(line_no, "blank \"text\"");
    if (!seen.insert(doc.id).second) throw MalformedRecord(line_no, "duplicate id " + doc.id);
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::filesystem::path sidecar_path(const std::filesystem::path& corpus) {
  auto p = corpus;
  p += ".idx";
  return p;
}

CorpusIndex build_index(const std::filesystem::path& corpus, const LanguageTag& lang,
                        EmbedBackend& embedder, const IndexOptions& options,
                        IndexBuildStats* stats) {
  if (options.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  auto docs = load_corpus(corpus, lang);
  IndexBuildStats local;
  IndexBuildStats& st = stats ? *stats : local;
  st = {};

  SidecarHeader header{embedder.identity().fingerprint(), stamp_of(corpus), docs.size(), 0};
  std::vector<Vector> vectors;
  if (options.use_sidecar) {
    if (auto cached = read_sidecar(sidecar_path(corpus), header)) {
      vectors = std::move(*cached);
      st.sidecar_hit = true;
    }
  }
  if (!st.sidecar_hit) {
    vectors.reserve(docs.size());
    for (std::size_t start = 0; start < docs.size(); start += options.batch_size) {
      EmbedRequest request;
      const std::size_t end = std::min(docs.size(), start + options.batch_size);
      for (std::size_t i = start; i < end; ++i) {
        request.texts.push_back(docs[i].text);
      }
      auto batch = embedder.embed(request);
      if (batch.size() != request.texts.size()) {
        throw BackendError(BackendFailure::kEmptyResponse, "embedder returned wrong batch size");
      }
      for (auto& v : batch) vectors.push_back(std::move(v));
    }
    st.embedded = docs.size();
  }

  const std::size_t dimension = vectors.empty() ? embedder.identity().dimension : vectors.front().size();
  CorpusIndex index(lang, dimension);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (vectors[i].size() != dimension) {
      throw BackendError(BackendFailure::kDimensionMismatch,
                         "document " + docs[i].id + " embedded with dimension " +
                             std::to_string(vectors[i].size()));
    }
    index.add(std::move(docs[i]), vectors[i]);
  }
  if (options.use_sidecar && !st.sidecar_hit) {
    header.dimension = index.dimension();
    write_sidecar(sidecar_path(corpus), header, vectors);
  }
  return index;
}

std::filesystem::path corpus_path(const std::filesystem::path& dir, const std::string& dataset,
                                  const LanguageTag& lang) {
  return dir / (dataset + "." + lang.code() + ".jsonl");
}

}  // namespace dapt

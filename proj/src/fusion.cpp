#include "dapt/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dapt/errors.hpp"
#include "dapt/planning.hpp"

namespace dapt {

void FusionConfig::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0, 1]");
}

SimilarityMatrix similarity_matrix(const SubQuestionGraph& source,
                                   const SubQuestionGraph& english, EmbedBackend& embedder) {
  if (source.empty() || english.empty()) {
    throw std::invalid_argument("similarity_matrix needs two non-empty graphs");
  }
  SimilarityMatrix m;
  EmbedRequest request;
  for (const auto& [id, node] : source.nodes()) {
    m.rows.push_back(id);
    request.texts.push_back(plain_placeholders(node.texts.begin()->second));
  }
  for (const auto& [id, node] : english.nodes()) {
    m.cols.push_back(id);
    request.texts.push_back(plain_placeholders(node.text_for(dapt::english())));
  }
  auto vectors = embedder.embed(request);
  if (vectors.size() != request.texts.size()) {
    throw BackendError(BackendFailure::kEmptyResponse, "embedder returned wrong batch size");
  }
  const std::size_t offset = m.rows.size();
  m.values.assign(m.rows.size(), std::vector<double>(m.cols.size(), 0.0));
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    for (std::size_t c = 0; c < m.cols.size(); ++c) {
      m.values[r][c] = cosine(vectors[r], vectors[offset + c]);
    }
  }
  return m;
}

FusionResult fuse_with_matrix(const SubQuestionGraph& source, const SubQuestionGraph& english,
                              const SimilarityMatrix& sims, const FusionConfig& config) {
  config.validate();
  if (sims.values.size() != sims.rows.size()) {
    throw std::invalid_argument("similarity matrix row count mismatch");
  }
  struct Candidate {
    std::size_t row;
    std::size_t col;
    double sim;
  };
  std::vector<Candidate> pairs;
  for (std::size_t r = 0; r < sims.rows.size(); ++r) {
    if (sims.values[r].size() != sims.cols.size()) {
      throw std::invalid_argument("similarity matrix column count mismatch");
    }
    for (std::size_t c = 0; c < sims.cols.size(); ++c) {
      if (!std::isfinite(sims.values[r][c])) {
        throw std::invalid_argument("similarity matrix has a non-finite value");
      }
      pairs.push_back({r, c, sims.values[r][c]});
    }
  }
  // Because similarities never change, visiting pairs in this order is the
  // same as repeatedly taking the argmax over the still-eligible pairs.
  std::sort(pairs.begin(), pairs.end(), [&](const Candidate& a, const Candidate& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    if (sims.rows[a.row] != sims.rows[b.row]) return sims.rows[a.row] < sims.rows[b.row];
    return sims.cols[a.col] < sims.cols[b.col];
  });

  FusionResult result{SubQuestionGraph::disjoint_union(source, english), {}, {}};
  std::vector<bool> row_used(sims.rows.size(), false);
  std::vector<bool> col_used(sims.cols.size(), false);
  for (const auto& p : pairs) {
    if (!(p.sim > config.tau)) break;
    if (row_used[p.row] || col_used[p.col]) continue;
    const NodeId& keep = sims.rows[p.row];
    const NodeId& absorbed = sims.cols[p.col];
    if (!result.graph.can_contract(keep, absorbed)) {
      result.skipped.push_back({keep, absorbed, p.sim});
      continue;
    }
    QNode gone = result.graph.node(absorbed);
    result.graph.contract(keep, absorbed);

    QNode& kept = result.graph.node(keep);
    for (auto& [lang, text] : gone.texts) {
      // Same-language duplicates (English source queries) collapse into the
      // existing text; the node stays monolingual.
      kept.texts.emplace(lang, std::move(text));
    }
    if (kept.texts.size() >= 2) kept.origin = NodeOrigin::kFused;
    kept.absorbed.push_back(absorbed);
    kept.absorbed.insert(kept.absorbed.end(), gone.absorbed.begin(), gone.absorbed.end());

    row_used[p.row] = true;
    col_used[p.col] = true;
    result.merges.push_back({keep, absorbed, p.sim});
  }
  return result;
}

FusionResult fuse(const SubQuestionGraph& source, const SubQuestionGraph& english,
                  const FusionConfig& config, EmbedBackend& embedder) {
  config.validate();
  auto sims = similarity_matrix(source, english, embedder);
  return fuse_with_matrix(source, english, sims, config);
}

std::vector<NodeId> sequence(const SubQuestionGraph& fused) { return fused.topological_sort(); }

}  // namespace dapt

#pragma once

#include <vector>

#include "dapt/backends.hpp"
#include "dapt/qgraph.hpp"

namespace dapt {

/// Cosine similarities between source-side nodes (rows) and English-side
/// nodes (cols), both in id order.
struct SimilarityMatrix {
  std::vector<NodeId> rows;
  std::vector<NodeId> cols;
  std::vector<std::vector<double>> values;

  double at(std::size_t r, std::size_t c) const { return values[r][c]; }
};

struct FusionConfig {
  double tau = 0.8;

  void validate() const;
};

/// Record of one merge, in the order merges happened.
struct FusionMerge {
  NodeId kept;
  NodeId absorbed;
  double similarity = 0.0;
};

struct FusionResult {
  SubQuestionGraph graph;
  std::vector<FusionMerge> merges;
  // Pairs above the threshold that were skipped because merging them would
  // have closed a cycle.
  std::vector<FusionMerge> skipped;
};

/// Embeds every node once (one batched call) and fills the matrix. Source
/// nodes use their own text, English nodes their English text; answer
/// placeholders are shown as `<k>`.
SimilarityMatrix similarity_matrix(const SubQuestionGraph& source,
                                   const SubQuestionGraph& english, EmbedBackend& embedder);

/// Greedy one-to-one fusion over a precomputed matrix. Pairs are visited by
/// descending similarity (ties: smaller row id, then smaller col id); a pair
/// merges only when its similarity is strictly greater than tau, neither node
/// has been fused yet, and the merge keeps the graph acyclic.
FusionResult fuse_with_matrix(const SubQuestionGraph& source, const SubQuestionGraph& english,
                              const SimilarityMatrix& sims, const FusionConfig& config);

FusionResult fuse(const SubQuestionGraph& source, const SubQuestionGraph& english,
                  const FusionConfig& config, EmbedBackend& embedder);

/// Execution order of the fused graph.
std::vector<NodeId> sequence(const SubQuestionGraph& fused);

}  // namespace dapt

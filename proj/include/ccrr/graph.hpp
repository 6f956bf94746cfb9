#pragma once

/// \file graph.hpp
/// \brief Cross-modal candidate relation graphs.
///
/// The appearance graph is wired by gait nearest neighbours and carries
/// appearance edge features; the gait graph is the mirror image. Both graphs
/// share one node-feature matrix (the encoded similarity matrix S).

#include <memory>
#include <nlohmann/json.hpp>
#include <vector>

#include "ccrr/data_model.hpp"
#include "ccrr/ranking.hpp"

namespace ccrr {

struct RelationGraph {
  /// sources[k] lists j for every edge j -> k. The self-loop k comes last.
  std::vector<std::vector<std::size_t>> sources;
  /// edge_features[k].row(i) is e_{sources[k][i], k}.
  std::vector<Matrix> edge_features;
  std::shared_ptr<const Matrix> node_features;  // K x D, may be unset

  std::size_t num_nodes() const { return sources.size(); }
  std::size_t num_edges() const;
  Eigen::Index edge_dim() const { return edge_features.empty() ? 0 : edge_features.front().cols(); }
};

/// For every row k, the min(n, K-1) nearest other rows (ties by index),
/// nearest first. Self-loops are not included.
std::vector<std::vector<std::size_t>> knn_edges(const Matrix& features, int n);

struct GraphPair {
  RelationGraph appearance;
  RelationGraph gait;
};

/// Builds both graphs over the candidates. `appearance` and `gait` are the
/// gallery feature matrices that `cand.indices` point into; they are
/// L2-normalized here.
GraphPair build_relation_graphs(const CandidateSet& cand, const Matrix& appearance, const Matrix& gait, int n,
                                std::shared_ptr<const Matrix> node_features = nullptr);

/// Debug description: nodes, per-node incoming sources, edge dims.
nlohmann::json describe(const RelationGraph& graph);

}  // namespace ccrr

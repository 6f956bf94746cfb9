#include "ccrr/graph.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ccrr {

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(m.rows())) {
      throw std::out_of_range("candidate index " + std::to_string(rows[i]) + " outside the feature matrix");
    }
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

RelationGraph wire(const std::vector<std::vector<std::size_t>>& neighbours, const Matrix& edge_modality) {
  RelationGraph g;
  const std::size_t K = neighbours.size();
  g.sources.resize(K);
  g.edge_features.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto& src = g.sources[k];
    src = neighbours[k];
    src.push_back(k);
    Matrix& e = g.edge_features[k];
    e.resize(static_cast<Eigen::Index>(src.size()), edge_modality.cols());
    const auto rk = edge_modality.row(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < src.size(); ++i)
      e.row(static_cast<Eigen::Index>(i)) = edge_modality.row(static_cast<Eigen::Index>(src[i])).cwiseProduct(rk);
  }
  return g;
}

}  // namespace

std::size_t RelationGraph::num_edges() const {
  std::size_t total = 0;
  for (const auto& s : sources) total += s.size();
  return total;
}

std::vector<std::vector<std::size_t>> knn_edges(const Matrix& features, int n) {
  if (n < 1) throw std::invalid_argument("knn_edges: n must be >= 1");
  const Matrix x = l2_normalize_rows(features);
  const auto K = static_cast<std::size_t>(x.rows());
  const std::size_t keep = K == 0 ? 0 : std::min<std::size_t>(static_cast<std::size_t>(n), K - 1);

  // Pairwise distances between unit rows: |a-b|^2 = 2 - 2 a.b
  const Matrix gram = x * x.transpose();
  std::vector<std::vector<std::size_t>> out(K);
  std::vector<std::size_t> others;
  std::vector<double> dist(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < K; ++j)
      dist[j] = std::sqrt(std::max(0.0, 2.0 - 2.0 * gram(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j))));
    others.clear();
    for (std::size_t j = 0; j < K; ++j)
      if (j != k) others.push_back(j);
    std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(keep), others.end(),
                      [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
    out[k].assign(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  return out;
}

GraphPair build_relation_graphs(const CandidateSet& cand, const Matrix& appearance, const Matrix& gait, int n,
                                std::shared_ptr<const Matrix> node_features) {
  if (node_features && node_features->rows() != static_cast<Eigen::Index>(cand.size())) {
    throw std::invalid_argument("build_relation_graphs: node features must have one row per candidate");
  }
  const Matrix app = l2_normalize_rows(gather_rows(appearance, cand.indices));
  const Matrix gt = l2_normalize_rows(gather_rows(gait, cand.indices));
  GraphPair pair{wire(knn_edges(gt, n), app), wire(knn_edges(app, n), gt)};
  pair.appearance.node_features = node_features;
  pair.gait.node_features = std::move(node_features);
  return pair;
}

nlohmann::json describe(const RelationGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t k = 0; k < graph.num_nodes(); ++k) nodes.push_back({{"node", k}, {"sources", graph.sources[k]}});
  return {{"num_nodes", graph.num_nodes()},
          {"num_edges", graph.num_edges()},
          {"edge_dim", graph.edge_dim()},
          {"incoming", nodes}};
}

}  // namespace ccrr

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "ccrr/graph.hpp"
#include "test_util.hpp"

using namespace ccrr;

namespace {

// Brute force: sort every other row by (pairwise_distance, index).
std::vector<std::vector<std::size_t>> knn_oracle(const Matrix& x, int n) {
  const auto K = static_cast<std::size_t>(x.rows());
  std::vector<std::vector<std::size_t>> out(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < K; ++j) {
      if (j == k) continue;
      const auto rk = x.row(static_cast<Eigen::Index>(k));
      const auto rj = x.row(static_cast<Eigen::Index>(j));
      d.push_back({pairwise_distance(std::span<const double>(rk.data(), static_cast<std::size_t>(x.cols())),
                                     std::span<const double>(rj.data(), static_cast<std::size_t>(x.cols()))),
                   j});
    }
    std::sort(d.begin(), d.end());
    for (std::size_t i = 0; i < std::min<std::size_t>(static_cast<std::size_t>(n), d.size()); ++i)
      out[k].push_back(d[i].second);
  }
  return out;
}

CandidateSet identity_candidates(std::size_t K) {
  CandidateSet c;
  for (std::size_t k = 0; k < K; ++k) {
    c.indices.push_back(k);
    c.s_app.push_back(0.5);
    c.s_gait.push_back(0.5);
    c.labels.push_back(0);
  }
  c.num_neg = K;
  return c;
}

}  // namespace

TEST_CASE("knn_edges: collinear directions") {
  // Angles 0, 30 and 90 degrees: B sits between A and C.
  Matrix x(3, 2);
  x << 1, 0, std::cos(M_PI / 6), std::sin(M_PI / 6), 0, 3;
  const auto e = knn_edges(x, 1);
  CHECK(e == knn_oracle(x, 1));
  CHECK(e[0] == std::vector<std::size_t>{1});
  CHECK(e[1] == std::vector<std::size_t>{0});
  CHECK(e[2] == std::vector<std::size_t>{1});
}

TEST_CASE("knn_edges: clamping and degenerate sizes") {
  std::mt19937_64 rng(4);
  const auto two = knn_edges(testing::random_matrix(rng, 2, 3), 5);
  CHECK(two[0] == std::vector<std::size_t>{1});
  CHECK(two[1] == std::vector<std::size_t>{0});
  const auto one = knn_edges(testing::random_matrix(rng, 1, 3), 5);
  REQUIRE(one.size() == 1);
  CHECK(one[0].empty());
  Matrix zero = Matrix::Ones(3, 2);
  zero.row(2).setZero();
  CHECK_THROWS_AS(knn_edges(zero, 1), std::invalid_argument);
}

TEST_CASE("knn_edges matches brute force on random data") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 25; ++trial) {
    const Matrix x = testing::random_matrix(rng, 5 + trial, 6);
    const int n = 1 + trial % 7;
    CHECK(knn_edges(x, n) == knn_oracle(x, n));
  }
}

TEST_CASE("build_relation_graphs: single node") {
  const CandidateSet c = identity_candidates(1);
  Matrix app(1, 2), gait(1, 3);
  app << 3, 4;
  gait << 0, 2, 0;
  const auto g = build_relation_graphs(c, app, gait, 30);
  REQUIRE(g.appearance.num_nodes() == 1);
  CHECK(g.appearance.sources[0] == std::vector<std::size_t>{0});
  CHECK(g.appearance.edge_features[0](0, 0) == doctest::Approx(0.36));
  CHECK(g.appearance.edge_features[0](0, 1) == doctest::Approx(0.64));
  CHECK(g.gait.edge_features[0](0, 1) == doctest::Approx(1.0));
  CHECK(g.gait.edge_features[0](0, 0) == 0.0);
}

TEST_CASE("build_relation_graphs: edge features are elementwise products") {
  const CandidateSet c = identity_candidates(2);
  Matrix app(2, 2), gait(2, 2);
  app << 1, 0, 0, 2;
  gait << 1, 1, 1, -1;
  const auto g = build_relation_graphs(c, app, gait, 1);
  // node 1 receives from node 0 first, then its self-loop
  CHECK(g.appearance.sources[1] == std::vector<std::size_t>{0, 1});
  CHECK(g.appearance.edge_features[1].row(0).isZero());
  CHECK(g.appearance.edge_features[1](1, 1) == doctest::Approx(1.0));
}

TEST_CASE("build_relation_graphs: structure on random candidates") {
  std::mt19937_64 rng(21);
  const std::size_t K = 20;
  const CandidateSet c = identity_candidates(K);
  const Matrix app = testing::random_matrix(rng, K, 16);
  const Matrix gait = testing::random_matrix(rng, K, 8);
  auto S = std::make_shared<const Matrix>(testing::random_matrix(rng, K, 4));
  const auto g = build_relation_graphs(c, app, gait, 3, S);

  const auto gait_nn = knn_oracle(gait, 3);
  const auto app_nn = knn_oracle(app, 3);
  for (std::size_t k = 0; k < K; ++k) {
    CHECK(g.appearance.sources[k].size() == 4);
    CHECK(g.gait.sources[k].size() == 4);
    CHECK(g.appearance.sources[k].back() == k);
    CHECK(std::vector(g.appearance.sources[k].begin(), g.appearance.sources[k].end() - 1) == gait_nn[k]);
    CHECK(std::vector(g.gait.sources[k].begin(), g.gait.sources[k].end() - 1) == app_nn[k]);
  }
  CHECK(g.appearance.num_edges() == K * 4);
  CHECK(g.gait.num_edges() == K * 4);
  CHECK(g.appearance.edge_dim() == 16);
  CHECK(g.gait.edge_dim() == 8);
  CHECK(g.appearance.node_features.get() == g.gait.node_features.get());
  CHECK(g.appearance.node_features.get() == S.get());
}

TEST_CASE("property: appearance graph edge values ignore gait features") {
  std::mt19937_64 rng(33);
  const std::size_t K = 15;
  const CandidateSet c = identity_candidates(K);
  const Matrix app = testing::random_matrix(rng, K, 10);
  const Matrix gait = testing::random_matrix(rng, K, 6);
  const Matrix gait2 = gait + testing::random_matrix(rng, K, 6, 0.7);
  const auto a = build_relation_graphs(c, app, gait, 4);
  const auto b = build_relation_graphs(c, app, gait2, 4);

  bool any_changed = false;
  for (std::size_t k = 0; k < K; ++k) {
    const auto& sa = a.appearance.sources[k];
    const auto& sb = b.appearance.sources[k];
    any_changed |= sa != sb;
    for (std::size_t i = 0; i < sb.size(); ++i) {
      const auto it = std::find(sa.begin(), sa.end(), sb[i]);
      if (it == sa.end()) continue;
      const auto ia = static_cast<Eigen::Index>(it - sa.begin());
      CHECK(a.appearance.edge_features[k].row(ia) == b.appearance.edge_features[k].row(static_cast<Eigen::Index>(i)));
    }
    // gait graph wiring comes from appearance, so it is untouched
    CHECK(a.gait.sources[k] == b.gait.sources[k]);
  }
  CHECK(any_changed);
}

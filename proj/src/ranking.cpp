#include "ccrr/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ccrr {

double pairwise_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("pairwise_distance: dimension mismatch");
  double nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("pairwise_distance: zero vector");
  nu = std::sqrt(nu);
  nv = std::sqrt(nv);
  double sq = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double diff = u[i] / nu - v[i] / nv;
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    if (norm == 0.0 || !std::isfinite(norm)) {
      throw std::invalid_argument("row " + std::to_string(r) + " cannot be L2-normalized");
    }
    out.row(r) /= norm;
  }
  return out;
}

std::vector<std::size_t> RankingList::position_of() const {
  std::vector<std::size_t> pos(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  return pos;
}

RankingList initial_ranking_normalized(std::span<const double> query, const Matrix& gallery) {
  const auto n = static_cast<std::size_t>(gallery.rows());
  Eigen::Map<const Eigen::RowVectorXd> q(query.data(), static_cast<Eigen::Index>(query.size()));
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = (gallery.row(static_cast<Eigen::Index>(i)) - q).norm();

  RankingList list;
  list.order.resize(n);
  std::iota(list.order.begin(), list.order.end(), std::size_t{0});
  std::stable_sort(list.order.begin(), list.order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  list.distances.resize(n);
  for (std::size_t i = 0; i < n; ++i) list.distances[i] = dist[list.order[i]];
  return list;
}

RankingList initial_ranking(std::span<const double> query, const Matrix& gallery) {
  if (gallery.rows() == 0) throw std::invalid_argument("initial_ranking: empty gallery");
  if (static_cast<Eigen::Index>(query.size()) != gallery.cols()) {
    throw std::invalid_argument("initial_ranking: dimension mismatch");
  }
  Vector q = Eigen::Map<const Vector>(query.data(), static_cast<Eigen::Index>(query.size()));
  const double qn = q.norm();
  if (qn == 0.0) throw std::invalid_argument("initial_ranking: zero query vector");
  q /= qn;
  const Matrix g = l2_normalize_rows(gallery);
  return initial_ranking_normalized(std::span<const double>(q.data(), q.size()), g);
}

std::vector<double> minmax_similarity(std::span<const double> distances) {
  if (distances.empty()) throw std::invalid_argument("minmax_similarity: no distances");
  const auto [lo, hi] = std::minmax_element(distances.begin(), distances.end());
  const double m = *lo, M = *hi;
  std::vector<double> s(distances.size());
  if (M == m) {
    std::fill(s.begin(), s.end(), 0.5);
    return s;
  }
  for (std::size_t k = 0; k < distances.size(); ++k) s[k] = (M - distances[k]) / (M - m);
  return s;
}

CandidateSet collect_candidates(const RankingList& by_app, const RankingList& by_gait, int K, double gamma) {
  if (K < 1) throw std::invalid_argument("collect_candidates: K must be >= 1");
  if (by_app.size() != by_gait.size()) throw std::invalid_argument("collect_candidates: lists differ in size");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("collect_candidates: gamma outside [0, 1]");
  const std::size_t n = by_app.size();
  const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(K), n);
  const std::size_t from_app = std::min(want, static_cast<std::size_t>(std::floor(gamma * K)));

  CandidateSet cand;
  std::vector<char> taken(n, 0);
  for (std::size_t i = 0; i < from_app; ++i) {
    cand.indices.push_back(by_app.order[i]);
    taken[by_app.order[i]] = 1;
  }
  for (std::size_t i = 0; i < n && cand.indices.size() < want; ++i) {
    const std::size_t g = by_gait.order[i];
    if (taken[g]) continue;
    cand.indices.push_back(g);
    taken[g] = 1;
  }

  const auto app_pos = by_app.position_of();
  const auto gait_pos = by_gait.position_of();
  std::vector<double> d_app, d_gait;
  d_app.reserve(want);
  d_gait.reserve(want);
  for (std::size_t g : cand.indices) {
    d_app.push_back(by_app.distances[app_pos[g]]);
    d_gait.push_back(by_gait.distances[gait_pos[g]]);
  }
  cand.s_app = minmax_similarity(d_app);
  cand.s_gait = minmax_similarity(d_gait);
  cand.labels.assign(cand.indices.size(), 0);
  cand.num_neg = cand.indices.size();
  return cand;
}

void label_candidates(CandidateSet& cand, std::span<const int> gallery_person_ids, int query_person_id) {
  cand.num_pos = cand.num_neg = 0;
  for (std::size_t k = 0; k < cand.indices.size(); ++k) {
    const int label = gallery_person_ids[cand.indices[k]] == query_person_id ? 1 : 0;
    cand.labels[k] = label;
    (label ? cand.num_pos : cand.num_neg) += 1;
  }
}

}  // namespace ccrr

#pragma once

/// \file ranking.hpp
/// \brief Two-branch initial retrieval and top-K candidate collection.

#include <span>
#include <vector>

#include "ccrr/data_model.hpp"

namespace ccrr {

/// Euclidean distance between the L2-normalized inputs, in [0, 2].
/// Throws std::invalid_argument on a zero vector or a size mismatch.
double pairwise_distance(std::span<const double> u, std::span<const double> v);

/// Row-wise L2 normalization. A zero row is rejected with its index.
Matrix l2_normalize_rows(const Matrix& m);

struct RankingList {
  std::vector<std::size_t> order;   // gallery row positions, best first
  std::vector<double> distances;    // aligned with `order`

  std::size_t size() const { return order.size(); }
  /// Inverse permutation: position_of()[gallery_row] = rank (0-based).
  std::vector<std::size_t> position_of() const;
};

/// Sorts all gallery rows by ascending distance to the query, ties by row.
RankingList initial_ranking(std::span<const double> query, const Matrix& gallery);

/// Variant for inputs already L2-normalized (no re-normalization, no checks).
RankingList initial_ranking_normalized(std::span<const double> query, const Matrix& gallery);

/// Min-max similarity s = (M - d) / (M - m); a constant input maps to 0.5.
std::vector<double> minmax_similarity(std::span<const double> distances);

struct CandidateSet {
  std::size_t query = 0;               // query row (caller's indexing)
  std::vector<std::size_t> indices;    // gallery rows, in selection order
  std::vector<double> s_app;
  std::vector<double> s_gait;
  std::vector<int> labels;             // 1 iff same identity as the query
  std::size_t num_pos = 0;
  std::size_t num_neg = 0;

  std::size_t size() const { return indices.size(); }
};

/// Takes the first floor(gamma*K) entries of `by_app`, then fills up to
/// min(K, N) from the top of `by_gait`, skipping indices already chosen.
/// Similarities are min-max normalized over the chosen set. Labels are left
/// at 0 until label_candidates() runs.
CandidateSet collect_candidates(const RankingList& by_app, const RankingList& by_gait, int K, double gamma);

/// Sets labels from identity equality; `gallery_person_ids[i]` belongs to gallery row i.
void label_candidates(CandidateSet& cand, std::span<const int> gallery_person_ids, int query_person_id);

}  // namespace ccrr

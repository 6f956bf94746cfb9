#pragma once

/// \file rerank_eval.hpp
/// \brief Test-time re-ranking and the clothes-changing / standard protocols.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccrr/data_model.hpp"
#include "ccrr/graph.hpp"
#include "ccrr/hyperparams.hpp"
#include "ccrr/net.hpp"
#include "ccrr/ranking.hpp"

namespace ccrr {

enum class Protocol { kClothesChanging, kStandard };

std::string to_string(Protocol protocol);
Protocol protocol_from_string(const std::string& text);  // "cc" | "standard"

/// L2-normalized copy of a feature store, computed once per dataset.
struct NormalizedFeatures {
  Matrix appearance;
  Matrix gait;

  static NormalizedFeatures from(const FeatureStore& store);
};

/// Gallery rows admissible for `query` under `protocol`. The clothes-changing
/// protocol drops entries sharing both identity and clothes with the query.
std::vector<std::size_t> filter_gallery(const SequenceRecord& query, const Manifest& manifest,
                                        std::span<const std::size_t> gallery_rows, Protocol protocol);

/// Everything needed to score one query: both ranking lists over the
/// gallery, the labelled candidate set and its relation graphs.
/// Ranking lists and candidate indices are positions into `gallery_rows`.
struct QueryProblem {
  std::size_t query_row = 0;
  std::vector<std::size_t> gallery_rows;  // manifest rows, ascending
  RankingList by_app;
  RankingList by_gait;
  CandidateSet cand;
  GraphPair graphs;
};

QueryProblem build_query_problem(const Manifest& manifest, const NormalizedFeatures& features, std::size_t query_row,
                                 std::vector<std::size_t> gallery_rows, const Hyperparams& hp);

/// How candidate similarities are produced.
enum class ScorerKind {
  kModel,   // trained network, eval mode
  kApp,     // c_app = 1, c_gait = 0, no S term
  kGait,    // c_app = 0, c_gait = 1, no S term
  kSum,     // c_app = c_gait = 1, no S term (direct summation)
  kOracle,  // confidences set to their pseudo-labels, no S term
};

std::string to_string(ScorerKind kind);
ScorerKind scorer_from_string(const std::string& text);  // "model" | "app" | "gait" | "sum" | "oracle"

struct Scorer {
  ScorerKind kind = ScorerKind::kSum;
  const ModelParams* model = nullptr;  // required for kModel
};

Vector score_candidates(const QueryProblem& problem, const Scorer& scorer);

struct FinalRanking {
  std::size_t query_row = 0;
  std::vector<std::size_t> order;  // positions into gallery_rows, best first
  std::size_t head_size = 0;
};

/// Head: candidates by fused similarity (descending, ties by gallery
/// position). Tail: the rest by 1-based rank in by_app + rank in by_gait,
/// ties by appearance rank.
FinalRanking rerank(const QueryProblem& problem, const Vector& fused);

/// Mean over relevant positions of precision at that position.
/// Throws std::invalid_argument when nothing is relevant.
double average_precision(std::span<const int> relevance);

/// 1-based rank of the first relevant entry, or 0 if none.
std::size_t first_hit(std::span<const int> relevance);

struct MetricsReport {
  Protocol protocol = Protocol::kClothesChanging;
  double mAP = 0.0;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  std::size_t num_queries = 0;
  std::size_t num_skipped = 0;
  std::vector<double> per_query_ap;
  std::vector<std::size_t> per_query_first_hit;
};

/// Aggregates per-query relevance lists (in ranking order) into mAP/CMC.
MetricsReport summarize(Protocol protocol, const std::vector<std::vector<int>>& relevance, std::size_t skipped = 0);

/// Runs filter -> rerank -> metrics over every query-split record.
MetricsReport evaluate(const Dataset& data, const Scorer& scorer, Protocol protocol, const Hyperparams& hp);

nlohmann::ordered_json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

}  // namespace ccrr

#include "ccrr/rerank_eval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "ccrr/loss.hpp"

namespace ccrr {

std::string to_string(Protocol protocol) {
  return protocol == Protocol::kClothesChanging ? "cc" : "standard";
}

Protocol protocol_from_string(const std::string& text) {
  if (text == "cc") return Protocol::kClothesChanging;
  if (text == "standard") return Protocol::kStandard;
  throw std::invalid_argument("unknown protocol \"" + text + "\" (expected cc or standard)");
}

NormalizedFeatures NormalizedFeatures::from(const FeatureStore& store) {
  return {l2_normalize_rows(store.appearance), l2_normalize_rows(store.gait)};
}

std::vector<std::size_t> filter_gallery(const SequenceRecord& query, const Manifest& manifest,
                                        std::span<const std::size_t> gallery_rows, Protocol protocol) {
  std::vector<std::size_t> out;
  out.reserve(gallery_rows.size());
  for (std::size_t row : gallery_rows) {
    const auto& g = manifest.records.at(row);
    if (protocol == Protocol::kClothesChanging && g.person_id == query.person_id && g.clothes_id == query.clothes_id) {
      continue;
    }
    out.push_back(row);
  }
  return out;
}

namespace {

Matrix gather(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace

QueryProblem build_query_problem(const Manifest& manifest, const NormalizedFeatures& features, std::size_t query_row,
                                 std::vector<std::size_t> gallery_rows, const Hyperparams& hp) {
  if (gallery_rows.empty()) throw std::invalid_argument("build_query_problem: empty gallery");
  QueryProblem p;
  p.query_row = query_row;
  p.gallery_rows = std::move(gallery_rows);
  const Matrix app = gather(features.appearance, p.gallery_rows);
  const Matrix gait = gather(features.gait, p.gallery_rows);
  const auto q = static_cast<Eigen::Index>(query_row);
  const Vector qa = features.appearance.row(q).transpose();
  const Vector qg = features.gait.row(q).transpose();
  p.by_app = initial_ranking_normalized(std::span<const double>(qa.data(), qa.size()), app);
  p.by_gait = initial_ranking_normalized(std::span<const double>(qg.data(), qg.size()), gait);
  p.cand = collect_candidates(p.by_app, p.by_gait, hp.K, hp.gamma);
  p.cand.query = query_row;

  std::vector<int> ids(p.gallery_rows.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = manifest.records[p.gallery_rows[i]].person_id;
  label_candidates(p.cand, ids, manifest.records.at(query_row).person_id);
  p.graphs = build_relation_graphs(p.cand, app, gait, hp.n);
  return p;
}

std::string to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::kModel: return "model";
    case ScorerKind::kApp: return "app";
    case ScorerKind::kGait: return "gait";
    case ScorerKind::kSum: return "sum";
    case ScorerKind::kOracle: return "oracle";
  }
  return "model";
}

ScorerKind scorer_from_string(const std::string& text) {
  if (text == "model") return ScorerKind::kModel;
  if (text == "app") return ScorerKind::kApp;
  if (text == "gait") return ScorerKind::kGait;
  if (text == "sum") return ScorerKind::kSum;
  if (text == "oracle") return ScorerKind::kOracle;
  throw std::invalid_argument("unknown baseline \"" + text + "\" (expected app, gait, sum or oracle)");
}

Vector score_candidates(const QueryProblem& problem, const Scorer& scorer) {
  const auto& c = problem.cand;
  const auto K = static_cast<Eigen::Index>(c.size());
  const Eigen::Map<const Vector> s_app(c.s_app.data(), K);
  const Eigen::Map<const Vector> s_gait(c.s_gait.data(), K);
  switch (scorer.kind) {
    case ScorerKind::kModel:
      if (!scorer.model) throw std::invalid_argument("model scorer without a model");
      return model_forward(c, problem.graphs, *scorer.model, Mode::kEval).s;
    case ScorerKind::kApp: return s_app;
    case ScorerKind::kGait: return s_gait;
    case ScorerKind::kSum: return s_app + s_gait;
    case ScorerKind::kOracle: {
      const Vector t_app = pseudo_labels(c.s_app, c.labels);
      const Vector t_gait = pseudo_labels(c.s_gait, c.labels);
      return t_app.cwiseProduct(s_app) + t_gait.cwiseProduct(s_gait);
    }
  }
  return s_app + s_gait;
}

FinalRanking rerank(const QueryProblem& problem, const Vector& fused) {
  const auto& c = problem.cand;
  if (static_cast<std::size_t>(fused.size()) != c.size()) throw std::invalid_argument("rerank: score length mismatch");
  FinalRanking out;
  out.query_row = problem.query_row;
  out.head_size = c.size();

  std::vector<std::size_t> head(c.size());
  std::iota(head.begin(), head.end(), std::size_t{0});
  std::sort(head.begin(), head.end(), [&](std::size_t a, std::size_t b) {
    const double sa = fused[static_cast<Eigen::Index>(a)], sb = fused[static_cast<Eigen::Index>(b)];
    if (sa != sb) return sa > sb;
    return c.indices[a] < c.indices[b];
  });

  const std::size_t n = problem.gallery_rows.size();
  std::vector<char> in_head(n, 0);
  for (std::size_t k : head) {
    out.order.push_back(c.indices[k]);
    in_head[c.indices[k]] = 1;
  }

  const auto app_pos = problem.by_app.position_of();
  const auto gait_pos = problem.by_gait.position_of();
  std::vector<std::size_t> tail;
  for (std::size_t g = 0; g < n; ++g)
    if (!in_head[g]) tail.push_back(g);
  std::sort(tail.begin(), tail.end(), [&](std::size_t a, std::size_t b) {
    const std::size_t ra = (app_pos[a] + 1) + (gait_pos[a] + 1);
    const std::size_t rb = (app_pos[b] + 1) + (gait_pos[b] + 1);
    if (ra != rb) return ra < rb;
    if (app_pos[a] != app_pos[b]) return app_pos[a] < app_pos[b];
    return a < b;
  });
  out.order.insert(out.order.end(), tail.begin(), tail.end());
  return out;
}

double average_precision(std::span<const int> relevance) {
  // Extended-precision accumulation keeps the result correctly rounded on
  // short lists, e.g. [1, 0, 1] gives exactly the double nearest 5/6.
  long double sum = 0.0L;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    if (!relevance[i]) continue;
    ++hits;
    sum += static_cast<long double>(hits) / static_cast<long double>(i + 1);
  }
  if (hits == 0) throw std::invalid_argument("average_precision: no relevant items");
  return static_cast<double>(sum / static_cast<long double>(hits));
}

std::size_t first_hit(std::span<const int> relevance) {
  for (std::size_t i = 0; i < relevance.size(); ++i)
    if (relevance[i]) return i + 1;
  return 0;
}

MetricsReport summarize(Protocol protocol, const std::vector<std::vector<int>>& relevance, std::size_t skipped) {
  MetricsReport r;
  r.protocol = protocol;
  r.num_skipped = skipped;
  r.num_queries = relevance.size();
  if (relevance.empty()) throw std::invalid_argument("no evaluable queries");
  std::size_t r1 = 0, r5 = 0, r10 = 0;
  double ap_sum = 0.0;
  for (const auto& rel : relevance) {
    const double ap = average_precision(rel);
    const std::size_t hit = first_hit(rel);
    r.per_query_ap.push_back(ap);
    r.per_query_first_hit.push_back(hit);
    ap_sum += ap;
    r1 += hit >= 1 && hit <= 1;
    r5 += hit >= 1 && hit <= 5;
    r10 += hit >= 1 && hit <= 10;
  }
  const auto nq = static_cast<double>(r.num_queries);
  r.mAP = ap_sum / nq;
  r.rank1 = static_cast<double>(r1) / nq;
  r.rank5 = static_cast<double>(r5) / nq;
  r.rank10 = static_cast<double>(r10) / nq;
  return r;
}

MetricsReport evaluate(const Dataset& data, const Scorer& scorer, Protocol protocol, const Hyperparams& hp) {
  const Manifest& manifest = data.manifest;
  const auto queries = manifest.indices_of(Split::kQuery);
  const auto gallery = manifest.indices_of(Split::kGallery);
  if (queries.empty() || gallery.empty()) throw std::invalid_argument("evaluate: need query and gallery records");
  const NormalizedFeatures features = NormalizedFeatures::from(data.features);

  std::vector<std::vector<int>> relevance;
  std::size_t skipped = 0;
  for (std::size_t q : queries) {
    const auto& query = manifest.records[q];
    auto admissible = filter_gallery(query, manifest, gallery, protocol);
    const bool has_positive = std::any_of(admissible.begin(), admissible.end(), [&](std::size_t g) {
      return manifest.records[g].person_id == query.person_id;
    });
    if (!has_positive) {
      ++skipped;
      continue;
    }
    const QueryProblem problem = build_query_problem(manifest, features, q, std::move(admissible), hp);
    const FinalRanking ranking = rerank(problem, score_candidates(problem, scorer));
    std::vector<int> rel(ranking.order.size());
    for (std::size_t i = 0; i < rel.size(); ++i)
      rel[i] = manifest.records[problem.gallery_rows[ranking.order[i]]].person_id == query.person_id;
    relevance.push_back(std::move(rel));
  }
  if (relevance.empty()) throw std::invalid_argument("evaluate: no evaluable queries");
  return summarize(protocol, relevance, skipped);
}

nlohmann::ordered_json to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["protocol"] = to_string(report.protocol);
  j["mAP"] = report.mAP;
  j["rank1"] = report.rank1;
  j["rank5"] = report.rank5;
  j["rank10"] = report.rank10;
  j["num_queries"] = report.num_queries;
  j["num_skipped"] = report.num_skipped;
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.protocol = protocol_from_string(j.at("protocol").get<std::string>());
  r.mAP = j.at("mAP").get<double>();
  r.rank1 = j.at("rank1").get<double>();
  r.rank5 = j.at("rank5").get<double>();
  r.rank10 = j.at("rank10").get<double>();
  r.num_queries = j.at("num_queries").get<std::size_t>();
  r.num_skipped = j.at("num_skipped").get<std::size_t>();
  return r;
}

}  // namespace ccrr

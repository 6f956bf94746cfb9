#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

namespace ccrr {

enum class AttentionMode {
  kSoftmax,  // softmax over each node's incoming edges, aggregates W*H_j
  kRaw,      // unnormalized alpha^T e_jk weights, aggregates W*H_j
  kLiteral,  // unnormalized weights applied to the receiving node's own W*H_k
};

std::string to_string(AttentionMode mode);
AttentionMode attention_mode_from_string(const std::string& text);

/// Retrieval, architecture and optimization settings. Defaults follow the
/// published setup where one exists (K, gamma, n, D, GCN width, margin).
struct Hyperparams {
  int K = 100;           // candidates kept per query
  double gamma = 0.75;   // share of candidates taken from the appearance list
  int n = 30;            // in-degree of the relation graphs
  int D = 32;            // shared node-feature width
  int hidden = 32;       // encoder hidden width
  int gcn_out = 32;      // GCN output width
  double epsilon = 0.2;  // triplet margin
  double dropout = 0.1;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  AttentionMode attention = AttentionMode::kSoftmax;

  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 10;
  int batch = 8;              // queries per optimizer update
  int checkpoint_every = 0;   // epochs between periodic checkpoints, 0 = final only
  /// Gallery rule for training episodes: "standard" keeps every other train
  /// sequence, "cc" also drops the query's same-identity same-clothes ones.
  std::string train_protocol = "cc";
  std::uint64_t seed = 17;

  void validate() const;  // throws std::invalid_argument
};

void to_json(nlohmann::json& j, const Hyperparams& h);
/// Missing keys keep defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, Hyperparams& h);
/// Applies one `key=value` override (value parsed as JSON, bare strings allowed).
void apply_override(Hyperparams& h, const std::string& assignment);

}  // namespace ccrr

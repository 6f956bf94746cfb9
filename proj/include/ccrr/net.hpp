#pragma once

/// \file net.hpp
/// \brief Confidence-estimation network with hand-derived gradients.
///
/// Pipeline for one query with K candidates:
///
///   S0 (K x 2: appearance, gait similarity)
///     -> encoder: linear -> batch-norm -> PReLU -> dropout -> linear  => S (K x D)
///   per branch (appearance graph / gait graph, unshared weights):
///     z_jk = alpha . e_jk over incoming edges (self-loop included)
///     H_k  = PReLU( sum_j w_jk * W S_j + b ),  w = softmax(z) by default
///     c_k  = omega . H_k + omega_bias
///   s_k = c_app_k * s_app_k + c_gait_k * s_gait_k + w0 . S_k + b0
///
/// All arithmetic is double precision.

#include <cstdint>
#include <span>
#include <string_view>

#include "ccrr/data_model.hpp"
#include "ccrr/graph.hpp"
#include "ccrr/hyperparams.hpp"
#include "ccrr/ranking.hpp"

namespace ccrr {

enum class Mode { kTrain, kEval };

struct EncoderParams {
  Matrix w1;  // hidden x 2
  Vector b1;
  Vector bn_gamma;
  Vector bn_beta;
  Vector running_mean;  // buffer, not learned
  Vector running_var;   // buffer, not learned
  double prelu = 0.25;
  Matrix w2;  // D x hidden
  Vector b2;
};

struct BranchParams {
  Vector alpha;  // edge-feature dim of this branch's graph
  Matrix w;      // gcn_out x D
  Vector bias;
  double prelu = 0.25;
  Vector omega;  // gcn_out
  double omega_bias = 0.0;
};

struct ModelShape {
  int d_app_edge = 0;   // appearance feature dim
  int d_gait_edge = 0;  // gait feature dim
  int hidden = 32;
  int D = 32;
  int gcn_out = 32;
  double dropout = 0.1;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  AttentionMode attention = AttentionMode::kSoftmax;

  static ModelShape from(const Hyperparams& h, int d_app, int d_gait);
  bool operator==(const ModelShape&) const = default;
};

struct ModelParams {
  ModelShape shape;
  EncoderParams encoder;
  BranchParams app;
  BranchParams gait;
  Vector fuse_w;  // D
  double fuse_bias = 0.0;

  /// Seeded initialization: fan-in uniform linears, zero attention vectors,
  /// unit batch-norm scale, PReLU slope 0.25.
  static ModelParams initialize(const ModelShape& shape, std::uint64_t seed);
  /// Same shapes, every entry zero (used for gradients and Adam moments).
  static ModelParams zeros(const ModelShape& shape);

  /// Calls fn(name, span) for every learnable tensor in a fixed order.
  template <typename Fn>
  void for_each_learnable(Fn&& fn);
  template <typename Fn>
  void for_each_learnable(Fn&& fn) const;
  /// Learnable tensors followed by the batch-norm buffers.
  template <typename Fn>
  void for_each_tensor(Fn&& fn);
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const;

  std::size_t num_learnable() const;
  void validate() const;  // finite, running_var >= 0, shapes consistent
};

using Gradients = ModelParams;

// ---------------------------------------------------------------------------
// Forward pieces

struct EncoderTrace {
  Matrix x0;    // K x 2
  Matrix z1;    // K x hidden, pre-BN
  Matrix xhat;  // normalized
  Matrix y;     // post-BN affine
  Matrix mask;  // dropout scale per entry (0 or 1/(1-p)); ones in eval
  Matrix dp;    // post-PReLU, post-dropout
  Vector mean;      // statistics used for normalization
  Vector inv_std;
  Vector batch_var_unbiased;  // for the running-variance update (train only)
  Mode mode = Mode::kEval;
};

struct BranchTrace {
  std::vector<Vector> logits;   // per receiving node, aligned with graph sources
  std::vector<Vector> weights;
  Matrix u;    // K x gcn_out, S W^T
  Matrix agg;  // pre-activation
  Matrix out;  // H after PReLU
  Vector c;
};

struct ForwardTrace {
  EncoderTrace encoder;
  BranchTrace app;
  BranchTrace gait;
  Matrix S;
  Vector s_app;
  Vector s_gait;
  Vector s;
};

Matrix similarity_matrix(const CandidateSet& cand);  // K x 2

Matrix encoder_forward(const Matrix& s0, const ModelParams& params, Mode mode, std::uint64_t noise_seed,
                       EncoderTrace* trace = nullptr);

Matrix gcn_forward(const RelationGraph& graph, const Matrix& node_features, const BranchParams& branch,
                   AttentionMode attention, BranchTrace* trace = nullptr);

Vector confidence_head(const Matrix& H, const BranchParams& branch);

Vector fuse_similarity(const Vector& c_app, const Vector& s_app, const Vector& c_gait, const Vector& s_gait,
                       const Matrix& S, const ModelParams& params);

struct ForwardResult {
  Vector s;
  Vector c_app;
  Vector c_gait;
  ForwardTrace trace;
};

/// Full forward pass. Train mode normalizes with batch statistics over the
/// K candidates and applies a dropout mask drawn from `noise_seed`. The
/// params are never modified; see update_running_stats().
ForwardResult model_forward(const CandidateSet& cand, const GraphPair& graphs, const ModelParams& params, Mode mode,
                            std::uint64_t noise_seed = 0);

/// Exponential-moving-average update of the batch-norm buffers from a
/// train-mode trace.
void update_running_stats(ModelParams& params, const EncoderTrace& trace);

// ---------------------------------------------------------------------------
// Backward

struct UpstreamGrads {
  Vector d_s;       // dL/ds
  Vector d_c_app;   // dL/dc_app (direct, e.g. from the confidence loss)
  Vector d_c_gait;
};

/// Exact gradients of the loss w.r.t. every learnable parameter.
/// Throws std::invalid_argument if trace, graphs and params disagree in shape.
Gradients model_backward(const ModelParams& params, const GraphPair& graphs, const ForwardTrace& trace,
                         const UpstreamGrads& upstream);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::int64_t step = 0;

  static AdamState zeros(const ModelShape& shape);
};

struct AdamSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update. A non-finite gradient throws
/// std::domain_error naming the parameter; nothing is modified in that case.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, const AdamSettings& settings);

// ---------------------------------------------------------------------------
// Checkpoints: u64 LE header length | JSON header | one CCVF (float64) blob
// per tensor in for_each_tensor order, then Adam first/second moments.

struct Checkpoint {
  ModelParams params;
  AdamState adam;
  Hyperparams hyperparams;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

namespace detail {
inline std::span<double> view(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
inline std::span<double> view(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
inline std::span<double> view(double& x) { return {&x, 1}; }
inline std::span<const double> view(const Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
inline std::span<const double> view(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
inline std::span<const double> view(const double& x) { return {&x, 1}; }

template <typename Self, typename Fn>
void visit_learnable(Self& p, Fn&& fn) {
  fn(std::string_view("encoder.w1"), view(p.encoder.w1));
  fn(std::string_view("encoder.b1"), view(p.encoder.b1));
  fn(std::string_view("encoder.bn_gamma"), view(p.encoder.bn_gamma));
  fn(std::string_view("encoder.bn_beta"), view(p.encoder.bn_beta));
  fn(std::string_view("encoder.prelu"), view(p.encoder.prelu));
  fn(std::string_view("encoder.w2"), view(p.encoder.w2));
  fn(std::string_view("encoder.b2"), view(p.encoder.b2));
  fn(std::string_view("app.alpha"), view(p.app.alpha));
  fn(std::string_view("app.w"), view(p.app.w));
  fn(std::string_view("app.bias"), view(p.app.bias));
  fn(std::string_view("app.prelu"), view(p.app.prelu));
  fn(std::string_view("app.omega"), view(p.app.omega));
  fn(std::string_view("app.omega_bias"), view(p.app.omega_bias));
  fn(std::string_view("gait.alpha"), view(p.gait.alpha));
  fn(std::string_view("gait.w"), view(p.gait.w));
  fn(std::string_view("gait.bias"), view(p.gait.bias));
  fn(std::string_view("gait.prelu"), view(p.gait.prelu));
  fn(std::string_view("gait.omega"), view(p.gait.omega));
  fn(std::string_view("gait.omega_bias"), view(p.gait.omega_bias));
  fn(std::string_view("fuse.w"), view(p.fuse_w));
  fn(std::string_view("fuse.bias"), view(p.fuse_bias));
}

template <typename Self, typename Fn>
void visit_buffers(Self& p, Fn&& fn) {
  fn(std::string_view("encoder.running_mean"), view(p.encoder.running_mean));
  fn(std::string_view("encoder.running_var"), view(p.encoder.running_var));
}
}  // namespace detail

template <typename Fn>
void ModelParams::for_each_learnable(Fn&& fn) {
  detail::visit_learnable(*this, fn);
}
template <typename Fn>
void ModelParams::for_each_learnable(Fn&& fn) const {
  detail::visit_learnable(*this, fn);
}
template <typename Fn>
void ModelParams::for_each_tensor(Fn&& fn) {
  detail::visit_learnable(*this, fn);
  detail::visit_buffers(*this, fn);
}
template <typename Fn>
void ModelParams::for_each_tensor(Fn&& fn) const {
  detail::visit_learnable(*this, fn);
  detail::visit_buffers(*this, fn);
}

}  // namespace ccrr

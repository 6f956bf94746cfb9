#include "ccrr/net.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace ccrr {

namespace {

double prelu(double x, double slope) { return x > 0.0 ? x : slope * x; }

void uniform_fill(std::span<double> out, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& x : out) x = dist(rng);
}

BranchParams zero_branch(int edge_dim, const ModelShape& s) {
  BranchParams b;
  b.alpha = Vector::Zero(edge_dim);
  b.w = Matrix::Zero(s.gcn_out, s.D);
  b.bias = Vector::Zero(s.gcn_out);
  b.prelu = 0.0;
  b.omega = Vector::Zero(s.gcn_out);
  b.omega_bias = 0.0;
  return b;
}

void check_shape(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("shape mismatch: ") + what);
}

}  // namespace

ModelShape ModelShape::from(const Hyperparams& h, int d_app, int d_gait) {
  ModelShape s;
  s.d_app_edge = d_app;
  s.d_gait_edge = d_gait;
  s.hidden = h.hidden;
  s.D = h.D;
  s.gcn_out = h.gcn_out;
  s.dropout = h.dropout;
  s.bn_eps = h.bn_eps;
  s.bn_momentum = h.bn_momentum;
  s.attention = h.attention;
  return s;
}

ModelParams ModelParams::zeros(const ModelShape& shape) {
  ModelParams p;
  p.shape = shape;
  p.encoder.w1 = Matrix::Zero(shape.hidden, 2);
  p.encoder.b1 = Vector::Zero(shape.hidden);
  p.encoder.bn_gamma = Vector::Zero(shape.hidden);
  p.encoder.bn_beta = Vector::Zero(shape.hidden);
  p.encoder.running_mean = Vector::Zero(shape.hidden);
  p.encoder.running_var = Vector::Zero(shape.hidden);
  p.encoder.prelu = 0.0;
  p.encoder.w2 = Matrix::Zero(shape.D, shape.hidden);
  p.encoder.b2 = Vector::Zero(shape.D);
  p.app = zero_branch(shape.d_app_edge, shape);
  p.gait = zero_branch(shape.d_gait_edge, shape);
  p.fuse_w = Vector::Zero(shape.D);
  p.fuse_bias = 0.0;
  return p;
}

ModelParams ModelParams::initialize(const ModelShape& shape, std::uint64_t seed) {
  if (shape.d_app_edge < 1 || shape.d_gait_edge < 1 || shape.hidden < 1 || shape.D < 1 || shape.gcn_out < 1) {
    throw std::invalid_argument("ModelParams::initialize: all dimensions must be >= 1");
  }
  ModelParams p = zeros(shape);
  std::mt19937_64 rng(seed);
  auto fan_in = [](int n) { return 1.0 / std::sqrt(static_cast<double>(n)); };

  uniform_fill(detail::view(p.encoder.w1), fan_in(2), rng);
  uniform_fill(detail::view(p.encoder.b1), fan_in(2), rng);
  p.encoder.bn_gamma.setOnes();
  p.encoder.running_var.setOnes();
  p.encoder.prelu = 0.25;
  uniform_fill(detail::view(p.encoder.w2), fan_in(shape.hidden), rng);
  uniform_fill(detail::view(p.encoder.b2), fan_in(shape.hidden), rng);
  for (BranchParams* b : {&p.app, &p.gait}) {
    uniform_fill(detail::view(b->w), fan_in(shape.D), rng);
    uniform_fill(detail::view(b->bias), fan_in(shape.D), rng);
    b->prelu = 0.25;
    uniform_fill(detail::view(b->omega), fan_in(shape.gcn_out), rng);
    uniform_fill(detail::view(b->omega_bias), fan_in(shape.gcn_out), rng);
  }
  uniform_fill(detail::view(p.fuse_w), fan_in(shape.D), rng);
  return p;
}

std::size_t ModelParams::num_learnable() const {
  std::size_t n = 0;
  for_each_learnable([&](std::string_view, std::span<const double> t) { n += t.size(); });
  return n;
}

void ModelParams::validate() const {
  const ModelShape& s = shape;
  check_shape(encoder.w1.rows() == s.hidden && encoder.w1.cols() == 2, "encoder.w1");
  check_shape(encoder.b1.size() == s.hidden && encoder.bn_gamma.size() == s.hidden &&
                  encoder.bn_beta.size() == s.hidden && encoder.running_mean.size() == s.hidden &&
                  encoder.running_var.size() == s.hidden,
              "encoder hidden vectors");
  check_shape(encoder.w2.rows() == s.D && encoder.w2.cols() == s.hidden && encoder.b2.size() == s.D, "encoder.w2");
  for (const auto* b : {&app, &gait}) {
    check_shape(b->w.rows() == s.gcn_out && b->w.cols() == s.D && b->bias.size() == s.gcn_out &&
                    b->omega.size() == s.gcn_out,
                "branch weights");
  }
  check_shape(app.alpha.size() == s.d_app_edge, "app.alpha");
  check_shape(gait.alpha.size() == s.d_gait_edge, "gait.alpha");
  check_shape(fuse_w.size() == s.D, "fuse.w");
  if (!(s.dropout >= 0.0 && s.dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  for_each_tensor([](std::string_view name, std::span<const double> t) {
    for (double x : t)
      if (!std::isfinite(x)) throw std::domain_error("non-finite value in " + std::string(name));
  });
  if ((encoder.running_var.array() < 0.0).any()) throw std::domain_error("negative batch-norm running variance");
}

// ---------------------------------------------------------------------------

Matrix similarity_matrix(const CandidateSet& cand) {
  Matrix s0(static_cast<Eigen::Index>(cand.size()), 2);
  for (std::size_t k = 0; k < cand.size(); ++k) {
    s0(static_cast<Eigen::Index>(k), 0) = cand.s_app[k];
    s0(static_cast<Eigen::Index>(k), 1) = cand.s_gait[k];
  }
  return s0;
}

Matrix encoder_forward(const Matrix& s0, const ModelParams& params, Mode mode, std::uint64_t noise_seed,
                       EncoderTrace* trace) {
  const EncoderParams& e = params.encoder;
  const ModelShape& shape = params.shape;
  const Eigen::Index K = s0.rows();
  if (K < 1) throw std::invalid_argument("encoder_forward: need at least one row");
  check_shape(s0.cols() == 2, "encoder input must be K x 2");

  EncoderTrace local;
  EncoderTrace& t = trace ? *trace : local;
  t.mode = mode;
  t.x0 = s0;
  t.z1 = (s0 * e.w1.transpose()).rowwise() + e.b1.transpose();

  if (mode == Mode::kTrain) {
    t.mean = t.z1.colwise().mean().transpose();
    const Matrix centered = t.z1.rowwise() - t.mean.transpose();
    const Vector var = centered.colwise().squaredNorm().transpose() / static_cast<double>(K);
    t.inv_std = (var.array() + shape.bn_eps).rsqrt().matrix();
    t.batch_var_unbiased = K > 1 ? Vector(var * (static_cast<double>(K) / static_cast<double>(K - 1))) : var;
  } else {
    t.mean = e.running_mean;
    t.inv_std = (e.running_var.array() + shape.bn_eps).rsqrt().matrix();
    t.batch_var_unbiased.resize(0);
  }
  t.xhat = (t.z1.rowwise() - t.mean.transpose()).array().rowwise() * t.inv_std.transpose().array();
  t.y = (t.xhat.array().rowwise() * e.bn_gamma.transpose().array()).rowwise() + e.bn_beta.transpose().array();

  t.mask = Matrix::Ones(K, shape.hidden);
  if (mode == Mode::kTrain && shape.dropout > 0.0) {
    std::mt19937_64 rng(noise_seed);
    std::bernoulli_distribution keep(1.0 - shape.dropout);
    const double scale = 1.0 / (1.0 - shape.dropout);
    for (Eigen::Index r = 0; r < K; ++r)
      for (Eigen::Index c = 0; c < shape.hidden; ++c) t.mask(r, c) = keep(rng) ? scale : 0.0;
  }
  t.dp = t.y.unaryExpr([&](double v) { return prelu(v, e.prelu); }).cwiseProduct(t.mask);
  return (t.dp * e.w2.transpose()).rowwise() + e.b2.transpose();
}

Matrix gcn_forward(const RelationGraph& graph, const Matrix& node_features, const BranchParams& branch,
                   AttentionMode attention, BranchTrace* trace) {
  const std::size_t K = graph.num_nodes();
  check_shape(node_features.rows() == static_cast<Eigen::Index>(K), "node features vs graph size");
  check_shape(node_features.cols() == branch.w.cols(), "node features vs GCN weight");
  check_shape(K == 0 || graph.edge_dim() == branch.alpha.size(), "edge features vs attention vector");

  BranchTrace local;
  BranchTrace& t = trace ? *trace : local;
  t.u = node_features * branch.w.transpose();
  t.agg = Matrix::Zero(static_cast<Eigen::Index>(K), branch.w.rows());
  t.logits.assign(K, Vector());
  t.weights.assign(K, Vector());

  for (std::size_t k = 0; k < K; ++k) {
    const auto& src = graph.sources[k];
    Vector z = graph.edge_features[k] * branch.alpha;
    Vector w;
    if (attention == AttentionMode::kSoftmax) {
      w = (z.array() - z.maxCoeff()).exp().matrix();
      w /= w.sum();
    } else {
      w = z;
    }
    const auto kk = static_cast<Eigen::Index>(k);
    auto row = t.agg.row(kk);
    if (attention == AttentionMode::kLiteral) {
      row = w.sum() * t.u.row(kk);
    } else {
      for (std::size_t i = 0; i < src.size(); ++i) row += w[static_cast<Eigen::Index>(i)] * t.u.row(static_cast<Eigen::Index>(src[i]));
    }
    row += branch.bias.transpose();
    t.logits[k] = std::move(z);
    t.weights[k] = std::move(w);
  }
  t.out = t.agg.unaryExpr([&](double v) { return prelu(v, branch.prelu); });
  return t.out;
}

Vector confidence_head(const Matrix& H, const BranchParams& branch) {
  check_shape(H.cols() == branch.omega.size(), "confidence head input");
  return (H * branch.omega).array() + branch.omega_bias;
}

Vector fuse_similarity(const Vector& c_app, const Vector& s_app, const Vector& c_gait, const Vector& s_gait,
                       const Matrix& S, const ModelParams& params) {
  check_shape(c_app.size() == s_app.size() && c_gait.size() == s_gait.size() && c_app.size() == c_gait.size() &&
                  S.rows() == c_app.size(),
              "fusion inputs");
  return (c_app.cwiseProduct(s_app) + c_gait.cwiseProduct(s_gait) + S * params.fuse_w).array() + params.fuse_bias;
}

ForwardResult model_forward(const CandidateSet& cand, const GraphPair& graphs, const ModelParams& params, Mode mode,
                            std::uint64_t noise_seed) {
  check_shape(graphs.appearance.num_nodes() == cand.size() && graphs.gait.num_nodes() == cand.size(),
              "graphs vs candidate set");
  ForwardResult r;
  ForwardTrace& t = r.trace;
  t.S = encoder_forward(similarity_matrix(cand), params, mode, noise_seed, &t.encoder);
  const Matrix h_app = gcn_forward(graphs.appearance, t.S, params.app, params.shape.attention, &t.app);
  const Matrix h_gait = gcn_forward(graphs.gait, t.S, params.gait, params.shape.attention, &t.gait);
  t.app.c = confidence_head(h_app, params.app);
  t.gait.c = confidence_head(h_gait, params.gait);
  t.s_app = Eigen::Map<const Vector>(cand.s_app.data(), static_cast<Eigen::Index>(cand.size()));
  t.s_gait = Eigen::Map<const Vector>(cand.s_gait.data(), static_cast<Eigen::Index>(cand.size()));
  t.s = fuse_similarity(t.app.c, t.s_app, t.gait.c, t.s_gait, t.S, params);
  r.s = t.s;
  r.c_app = t.app.c;
  r.c_gait = t.gait.c;
  return r;
}

void update_running_stats(ModelParams& params, const EncoderTrace& trace) {
  if (trace.mode != Mode::kTrain) return;
  const double m = params.shape.bn_momentum;
  params.encoder.running_mean = (1.0 - m) * params.encoder.running_mean + m * trace.mean;
  params.encoder.running_var = (1.0 - m) * params.encoder.running_var + m * trace.batch_var_unbiased;
}

// ---------------------------------------------------------------------------

namespace {

// Returns dL/dS contributed through this branch.
Matrix branch_backward(const RelationGraph& graph, const Matrix& S, const BranchParams& p, AttentionMode attention,
                       const BranchTrace& t, const Vector& d_c, BranchParams& g) {
  const auto K = static_cast<Eigen::Index>(graph.num_nodes());
  g.omega = t.out.transpose() * d_c;
  g.omega_bias = d_c.sum();
  const Matrix d_out = d_c * p.omega.transpose();

  Matrix d_agg = d_out;
  g.prelu = 0.0;
  for (Eigen::Index r = 0; r < K; ++r) {
    for (Eigen::Index c = 0; c < d_agg.cols(); ++c) {
      if (t.agg(r, c) <= 0.0) {
        g.prelu += d_out(r, c) * t.agg(r, c);
        d_agg(r, c) *= p.prelu;
      }
    }
  }
  g.bias = d_agg.colwise().sum().transpose();

  Matrix d_u = Matrix::Zero(K, t.u.cols());
  g.alpha = Vector::Zero(p.alpha.size());
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& src = graph.sources[static_cast<std::size_t>(k)];
    const Vector& w = t.weights[static_cast<std::size_t>(k)];
    const auto dk = d_agg.row(k);
    Vector d_w(w.size());
    if (attention == AttentionMode::kLiteral) {
      d_u.row(k) += w.sum() * dk;
      d_w.setConstant(dk.dot(t.u.row(k)));
    } else {
      for (std::size_t i = 0; i < src.size(); ++i) {
        const auto j = static_cast<Eigen::Index>(src[i]);
        d_u.row(j) += w[static_cast<Eigen::Index>(i)] * dk;
        d_w[static_cast<Eigen::Index>(i)] = dk.dot(t.u.row(j));
      }
    }
    Vector d_z;
    if (attention == AttentionMode::kSoftmax) {
      d_z = w.cwiseProduct((d_w.array() - w.dot(d_w)).matrix());
    } else {
      d_z = d_w;
    }
    g.alpha += graph.edge_features[static_cast<std::size_t>(k)].transpose() * d_z;
  }
  g.w = d_u.transpose() * S;
  return d_u * p.w;
}

void encoder_backward(const ModelParams& params, const EncoderTrace& t, const Matrix& d_S, EncoderParams& g) {
  const EncoderParams& e = params.encoder;
  const auto K = static_cast<double>(t.x0.rows());
  g.w2 = d_S.transpose() * t.dp;
  g.b2 = d_S.colwise().sum().transpose();
  const Matrix d_dp = (d_S * e.w2).cwiseProduct(t.mask);

  Matrix d_y = d_dp;
  g.prelu = 0.0;
  for (Eigen::Index r = 0; r < d_y.rows(); ++r) {
    for (Eigen::Index c = 0; c < d_y.cols(); ++c) {
      if (t.y(r, c) <= 0.0) {
        g.prelu += d_dp(r, c) * t.y(r, c);
        d_y(r, c) *= e.prelu;
      }
    }
  }
  g.bn_gamma = d_y.cwiseProduct(t.xhat).colwise().sum().transpose();
  g.bn_beta = d_y.colwise().sum().transpose();
  const Matrix d_xhat = d_y.array().rowwise() * e.bn_gamma.transpose().array();

  Matrix d_z1;
  if (t.mode == Mode::kTrain) {
    const Eigen::RowVectorXd sum_dx = d_xhat.colwise().sum();
    const Eigen::RowVectorXd sum_dx_xhat = d_xhat.cwiseProduct(t.xhat).colwise().sum();
    const Matrix inner =
        (K * d_xhat).rowwise() - sum_dx - Matrix(t.xhat.array().rowwise() * sum_dx_xhat.array());
    d_z1 = (inner.array().rowwise() * (t.inv_std.transpose().array() / K)).matrix();
  } else {
    d_z1 = d_xhat.array().rowwise() * t.inv_std.transpose().array();
  }
  g.w1 = d_z1.transpose() * t.x0;
  g.b1 = d_z1.colwise().sum().transpose();
}

}  // namespace

Gradients model_backward(const ModelParams& params, const GraphPair& graphs, const ForwardTrace& trace,
                         const UpstreamGrads& upstream) {
  const Eigen::Index K = trace.S.rows();
  check_shape(trace.encoder.x0.rows() == K, "trace encoder rows");
  check_shape(trace.S.cols() == params.shape.D, "trace width vs params");
  check_shape(trace.encoder.z1.cols() == params.shape.hidden, "trace hidden width vs params");
  check_shape(trace.app.out.rows() == K && trace.app.out.cols() == params.shape.gcn_out, "appearance trace");
  check_shape(trace.gait.out.rows() == K && trace.gait.out.cols() == params.shape.gcn_out, "gait trace");
  check_shape(static_cast<Eigen::Index>(graphs.appearance.num_nodes()) == K &&
                  static_cast<Eigen::Index>(graphs.gait.num_nodes()) == K,
              "graphs vs trace");
  check_shape(upstream.d_s.size() == K && upstream.d_c_app.size() == K && upstream.d_c_gait.size() == K,
              "upstream gradients");

  Gradients g = ModelParams::zeros(params.shape);
  g.fuse_w = trace.S.transpose() * upstream.d_s;
  g.fuse_bias = upstream.d_s.sum();
  Matrix d_S = upstream.d_s * params.fuse_w.transpose();

  const Vector d_c_app = upstream.d_c_app + upstream.d_s.cwiseProduct(trace.s_app);
  const Vector d_c_gait = upstream.d_c_gait + upstream.d_s.cwiseProduct(trace.s_gait);
  d_S += branch_backward(graphs.appearance, trace.S, params.app, params.shape.attention, trace.app, d_c_app, g.app);
  d_S += branch_backward(graphs.gait, trace.S, params.gait, params.shape.attention, trace.gait, d_c_gait, g.gait);

  encoder_backward(params, trace.encoder, d_S, g.encoder);
  return g;
}

// ---------------------------------------------------------------------------

AdamState AdamState::zeros(const ModelShape& shape) {
  return {ModelParams::zeros(shape), ModelParams::zeros(shape), 0};
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, const AdamSettings& settings) {
  check_shape(grads.shape == params.shape && state.m.shape == params.shape && state.v.shape == params.shape,
              "adam_step operands");
  grads.for_each_learnable([](std::string_view name, std::span<const double> g) {
    for (double x : g)
      if (!std::isfinite(x)) throw std::domain_error("non-finite gradient for " + std::string(name));
  });

  std::vector<std::span<const double>> gs;
  grads.for_each_learnable([&](std::string_view, std::span<const double> g) { gs.push_back(g); });
  std::vector<std::span<double>> ms, vs;
  state.m.for_each_learnable([&](std::string_view, std::span<double> m) { ms.push_back(m); });
  state.v.for_each_learnable([&](std::string_view, std::span<double> v) { vs.push_back(v); });

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(settings.beta1, t);
  const double c2 = 1.0 - std::pow(settings.beta2, t);
  std::size_t idx = 0;
  params.for_each_learnable([&](std::string_view, std::span<double> p) {
    auto g = gs[idx];
    auto m = ms[idx];
    auto v = vs[idx];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = settings.beta1 * m[i] + (1.0 - settings.beta1) * g[i];
      v[i] = settings.beta2 * v[i] + (1.0 - settings.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= settings.lr * m_hat / (std::sqrt(v_hat) + settings.eps);
    }
    ++idx;
  });
}

}  // namespace ccrr

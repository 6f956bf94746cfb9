#include <doctest.h>

#include <cmath>
#include <random>

#include "ccrr/net.hpp"
#include "test_util.hpp"

using namespace ccrr;

namespace {

ModelShape small_shape(int d_app = 6, int d_gait = 4) {
  ModelShape s;
  s.d_app_edge = d_app;
  s.d_gait_edge = d_gait;
  s.hidden = 8;
  s.D = 8;
  s.gcn_out = 8;
  return s;
}

double prelu_ref(double x, double a) { return x > 0.0 ? x : a * x; }

bool all_zero(const ModelParams& g) {
  bool zero = true;
  g.for_each_learnable([&](std::string_view, std::span<const double> t) {
    for (double x : t) zero &= x == 0.0;
  });
  return zero;
}

// Dense re-evaluation of one GCN layer: build the K x K weight matrix first.
Matrix dense_gcn(const RelationGraph& g, const Matrix& S, const BranchParams& b, AttentionMode mode) {
  const auto K = static_cast<Eigen::Index>(g.num_nodes());
  Matrix A = Matrix::Zero(K, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& src = g.sources[static_cast<std::size_t>(k)];
    std::vector<double> z;
    for (std::size_t i = 0; i < src.size(); ++i) {
      double acc = 0.0;
      for (Eigen::Index d = 0; d < b.alpha.size(); ++d)
        acc += b.alpha[d] * g.edge_features[static_cast<std::size_t>(k)](static_cast<Eigen::Index>(i), d);
      z.push_back(acc);
    }
    double denom = 0.0;
    for (double v : z) denom += std::exp(v);
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double w = mode == AttentionMode::kSoftmax ? std::exp(z[i]) / denom : z[i];
      const auto j = mode == AttentionMode::kLiteral ? k : static_cast<Eigen::Index>(src[i]);
      A(k, j) += w;
    }
  }
  Matrix pre = A * S * b.w.transpose();
  pre.rowwise() += b.bias.transpose();
  return pre.unaryExpr([&](double v) { return prelu_ref(v, b.prelu); });
}

}  // namespace

TEST_CASE("encoder_forward: identity configuration in eval mode") {
  ModelShape s = small_shape();
  s.hidden = 2;
  s.D = 2;
  s.dropout = 0.0;
  ModelParams p = ModelParams::zeros(s);
  p.encoder.w1 = Matrix::Identity(2, 2);
  p.encoder.w2 = Matrix::Identity(2, 2);
  p.encoder.bn_gamma.setOnes();
  p.encoder.running_var.setOnes();
  p.encoder.prelu = 1.0;
  Matrix s0(3, 2);
  s0 << 0.2, 0.9, 1.0, 0.0, 0.5, 0.5;
  const Matrix S = encoder_forward(s0, p, Mode::kEval, 0);
  const double scale = 1.0 / std::sqrt(1.0 + s.bn_eps);
  CHECK((S - s0 * scale).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("encoder_forward: equal rows in train mode normalize to the shift") {
  ModelShape s = small_shape();
  s.dropout = 0.0;
  ModelParams p = testing::random_params(s, 3);
  Matrix s0(5, 2);
  s0.rowwise() = Eigen::RowVector2d(0.3, 0.7);
  EncoderTrace t;
  encoder_forward(s0, p, Mode::kTrain, 0, &t);
  for (Eigen::Index r = 0; r < 5; ++r)
    for (Eigen::Index c = 0; c < s.hidden; ++c) CHECK(t.y(r, c) == doctest::Approx(p.encoder.bn_beta[c]).epsilon(1e-9));
  // a single row behaves the same way and is not an error
  CHECK_NOTHROW(encoder_forward(s0.topRows(1), p, Mode::kTrain, 0));
}

TEST_CASE("encoder_forward matches a step-by-step re-evaluation") {
  std::mt19937_64 rng(12);
  ModelShape s = small_shape();
  const ModelParams p = testing::random_params(s, 5);
  const Matrix s0 = testing::random_matrix(rng, 8, 2).cwiseAbs();

  for (Mode mode : {Mode::kEval, Mode::kTrain}) {
    const std::uint64_t seed = 99;
    const Matrix S = encoder_forward(s0, p, mode, seed);

    std::mt19937_64 noise(seed);
    std::bernoulli_distribution keep(1.0 - s.dropout);
    Matrix ref(8, s.D);
    std::vector<double> mean(static_cast<std::size_t>(s.hidden)), var(static_cast<std::size_t>(s.hidden));
    Matrix z(8, s.hidden);
    for (int r = 0; r < 8; ++r)
      for (int h = 0; h < s.hidden; ++h)
        z(r, h) = p.encoder.w1(h, 0) * s0(r, 0) + p.encoder.w1(h, 1) * s0(r, 1) + p.encoder.b1[h];
    for (int h = 0; h < s.hidden; ++h) {
      if (mode == Mode::kTrain) {
        double m = 0.0, v = 0.0;
        for (int r = 0; r < 8; ++r) m += z(r, h) / 8.0;
        for (int r = 0; r < 8; ++r) v += (z(r, h) - m) * (z(r, h) - m) / 8.0;
        mean[static_cast<std::size_t>(h)] = m;
        var[static_cast<std::size_t>(h)] = v;
      } else {
        mean[static_cast<std::size_t>(h)] = p.encoder.running_mean[h];
        var[static_cast<std::size_t>(h)] = p.encoder.running_var[h];
      }
    }
    Matrix act(8, s.hidden);
    for (int r = 0; r < 8; ++r) {
      for (int h = 0; h < s.hidden; ++h) {
        const auto hh = static_cast<std::size_t>(h);
        const double y = p.encoder.bn_gamma[h] * (z(r, h) - mean[hh]) / std::sqrt(var[hh] + s.bn_eps) + p.encoder.bn_beta[h];
        double a = prelu_ref(y, p.encoder.prelu);
        if (mode == Mode::kTrain) a = keep(noise) ? a / (1.0 - s.dropout) : 0.0;
        act(r, h) = a;
      }
    }
    for (int r = 0; r < 8; ++r) {
      for (int d = 0; d < s.D; ++d) {
        double acc = p.encoder.b2[d];
        for (int h = 0; h < s.hidden; ++h) acc += p.encoder.w2(d, h) * act(r, h);
        ref(r, d) = acc;
      }
    }
    CHECK((S - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gcn_forward: identity and symmetry cases") {
  ModelShape s = small_shape(2, 2);
  s.D = 3;
  s.gcn_out = 3;
  BranchParams b = ModelParams::zeros(s).app;
  b.w = Matrix::Identity(3, 3);
  b.prelu = 0.25;

  CandidateSet one;
  one.indices = {0};
  one.s_app = {0.5};
  one.s_gait = {0.5};
  one.labels = {0};
  Matrix f(1, 2);
  f << 1.0, 2.0;
  Matrix H(1, 3);
  H << 0.4, 1.5, 2.0;
  const auto g1 = build_relation_graphs(one, f, f, 30);
  BranchTrace t;
  CHECK(gcn_forward(g1.appearance, H, b, AttentionMode::kSoftmax, &t) == H);
  CHECK(t.weights[0][0] == 1.0);

  CandidateSet two = one;
  two.indices = {0, 1};
  two.s_app = {0.5, 0.5};
  two.s_gait = {0.5, 0.5};
  two.labels = {0, 0};
  Matrix f2(2, 2);
  f2 << 1.0, 0.0, 1.0, 0.0;  // identical rows: every edge feature equal
  Matrix H2(2, 3);
  H2 << 1.0, -2.0, 0.0, 3.0, 0.0, 4.0;
  b.alpha << 0.7, -0.3;
  const auto g2 = build_relation_graphs(two, f2, f2, 1);
  const Matrix out = gcn_forward(g2.appearance, H2, b, AttentionMode::kSoftmax, &t);
  for (const Vector& w : t.weights) CHECK((w.array() - 0.5).abs().maxCoeff() < 1e-15);
  // mean of the two rows is (2, -1, 2)
  for (Eigen::Index r = 0; r < 2; ++r) {
    CHECK(out(r, 0) == doctest::Approx(2.0));
    CHECK(out(r, 1) == doctest::Approx(-0.25));
    CHECK(out(r, 2) == doctest::Approx(2.0));
  }
}

TEST_CASE("gcn_forward matches a dense re-evaluation in every attention mode") {
  std::mt19937_64 rng(41);
  const auto inst = testing::random_instance(rng, 12, 6, 4, 3);
  const ModelParams p = testing::random_params(small_shape(), 8);
  const Matrix S = testing::random_matrix(rng, 12, 8);
  for (AttentionMode mode : {AttentionMode::kSoftmax, AttentionMode::kRaw, AttentionMode::kLiteral}) {
    const Matrix a = gcn_forward(inst.graphs.appearance, S, p.app, mode);
    const Matrix g = gcn_forward(inst.graphs.gait, S, p.gait, mode);
    CHECK((a - dense_gcn(inst.graphs.appearance, S, p.app, mode)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((g - dense_gcn(inst.graphs.gait, S, p.gait, mode)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("softmax attention weights are positive and sum to one") {
  std::mt19937_64 rng(2);
  const auto inst = testing::random_instance(rng, 16, 6, 4, 3);
  const ModelParams p = testing::random_params(small_shape(), 1);
  const auto f = model_forward(inst.cand, inst.graphs, p, Mode::kEval);
  for (const BranchTrace* t : {&f.trace.app, &f.trace.gait}) {
    for (const Vector& w : t->weights) {
      CHECK(w.minCoeff() > 0.0);
      CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("confidence_head and fuse_similarity") {
  ModelShape s = small_shape();
  s.gcn_out = 3;
  s.D = 3;
  ModelParams p = ModelParams::zeros(s);
  const Matrix H = Matrix::Identity(3, 3);
  CHECK(confidence_head(H, p.app).isZero());
  p.app.omega << 1, 0, 0;
  CHECK(confidence_head(H, p.app) == Vector((Vector(3) << 1, 0, 0).finished()));

  std::mt19937_64 rng(6);
  const Matrix R = testing::random_matrix(rng, 5, 3);
  p.gait.omega = testing::random_matrix(rng, 3, 1).col(0);
  p.gait.omega_bias = 0.4;
  const Vector c = confidence_head(R, p.gait);
  for (Eigen::Index k = 0; k < 5; ++k)
    CHECK(c[k] == doctest::Approx(R(k, 0) * p.gait.omega[0] + R(k, 1) * p.gait.omega[1] + R(k, 2) * p.gait.omega[2] + 0.4));

  const Vector sa = (Vector(3) << 0.9, 0.1, 0.4).finished();
  const Vector sb = (Vector(3) << 0.2, 0.8, 0.5).finished();
  const Matrix S = testing::random_matrix(rng, 3, 3);
  p.fuse_w.setZero();
  CHECK(fuse_similarity(Vector::Ones(3), sa, Vector::Zero(3), sb, S, p) == sa);
  CHECK(fuse_similarity(Vector::Ones(3), sa, Vector::Ones(3), sb, S, p) == sa + sb);
  CHECK(fuse_similarity(Vector::Zero(3), sa, Vector::Zero(3), sb, S, p).isZero());
}

TEST_CASE("model_forward: composition and determinism") {
  std::mt19937_64 rng(17);
  const auto inst = testing::random_instance(rng, 16, 6, 4, 3);
  const ModelParams p = testing::random_params(small_shape(), 4);

  const auto f = model_forward(inst.cand, inst.graphs, p, Mode::kTrain, 123);
  const Matrix S = encoder_forward(similarity_matrix(inst.cand), p, Mode::kTrain, 123);
  const Vector ca = confidence_head(gcn_forward(inst.graphs.appearance, S, p.app, p.shape.attention), p.app);
  const Vector cb = confidence_head(gcn_forward(inst.graphs.gait, S, p.gait, p.shape.attention), p.gait);
  const Vector sa = Eigen::Map<const Vector>(inst.cand.s_app.data(), 16);
  const Vector sb = Eigen::Map<const Vector>(inst.cand.s_gait.data(), 16);
  CHECK(f.s == fuse_similarity(ca, sa, cb, sb, S, p));
  CHECK(f.c_app == ca);

  CHECK(model_forward(inst.cand, inst.graphs, p, Mode::kTrain, 123).s == f.s);
  CHECK(model_forward(inst.cand, inst.graphs, p, Mode::kTrain, 124).s != f.s);

  const auto e1 = model_forward(inst.cand, inst.graphs, p, Mode::kEval, 1);
  const auto e2 = model_forward(inst.cand, inst.graphs, p, Mode::kEval, 2);
  CHECK(e1.s == e2.s);

  // running statistics move only on an explicit train-mode update
  ModelParams q = p;
  update_running_stats(q, e1.trace.encoder);
  CHECK(q.encoder.running_mean == p.encoder.running_mean);
  update_running_stats(q, f.trace.encoder);
  CHECK(q.encoder.running_mean != p.encoder.running_mean);
  CHECK((q.encoder.running_var.array() >= 0.0).all());
}

TEST_CASE("branch parameters are disjoint") {
  std::mt19937_64 rng(23);
  const auto inst = testing::random_instance(rng, 16, 6, 4, 3);
  const ModelParams p = testing::random_params(small_shape(), 9);
  const auto base = model_forward(inst.cand, inst.graphs, p, Mode::kEval);

  ModelParams q = p;
  q.app.alpha.array() += 0.5;
  q.app.w.array() *= -1.0;
  q.app.omega.array() += 1.0;
  const auto moved = model_forward(inst.cand, inst.graphs, q, Mode::kEval);
  CHECK(moved.c_gait == base.c_gait);
  CHECK(moved.c_app != base.c_app);

  q = p;
  q.gait.alpha.array() += 0.5;
  q.gait.omega.array() += 1.0;
  const auto moved2 = model_forward(inst.cand, inst.graphs, q, Mode::kEval);
  CHECK(moved2.c_app == base.c_app);
  CHECK(moved2.c_gait != base.c_gait);
}

TEST_CASE("model_backward is linear in the upstream gradient") {
  std::mt19937_64 rng(31);
  const auto inst = testing::random_instance(rng, 16, 6, 4, 3);
  const ModelParams p = testing::random_params(small_shape(), 2);
  const auto f = model_forward(inst.cand, inst.graphs, p, Mode::kTrain, 5);

  const Vector zero = Vector::Zero(16);
  CHECK(all_zero(model_backward(p, inst.graphs, f.trace, {zero, zero, zero})));

  const UpstreamGrads up{testing::random_matrix(rng, 16, 1).col(0), testing::random_matrix(rng, 16, 1).col(0),
                         testing::random_matrix(rng, 16, 1).col(0)};
  const UpstreamGrads up2{2.0 * up.d_s, 2.0 * up.d_c_app, 2.0 * up.d_c_gait};
  const Gradients g1 = model_backward(p, inst.graphs, f.trace, up);
  const Gradients g2 = model_backward(p, inst.graphs, f.trace, up2);
  std::vector<double> a, b;
  g1.for_each_learnable([&](std::string_view, std::span<const double> t) { a.insert(a.end(), t.begin(), t.end()); });
  g2.for_each_learnable([&](std::string_view, std::span<const double> t) { b.insert(b.end(), t.begin(), t.end()); });
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(2.0 * a[i]).epsilon(1e-12));

  const auto other = testing::random_instance(rng, 10, 6, 4, 3);
  CHECK_THROWS_AS(model_backward(p, other.graphs, f.trace, up), std::invalid_argument);
}

TEST_CASE("model_backward matches central finite differences") {
  for (AttentionMode mode : {AttentionMode::kSoftmax, AttentionMode::kRaw, AttentionMode::kLiteral}) {
    CAPTURE(static_cast<int>(mode));
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      std::mt19937_64 rng(1000 + seed);
      const auto inst = testing::random_instance(rng, 16, 6, 4, 3);
      ModelShape s = small_shape();
      s.attention = mode;
      const ModelParams p = testing::random_params(s, seed);
      const Gradients g = testing::instance_gradients(inst, p, 0.2, seed);
      const auto r = testing::check_gradients(
          p, g, [&](const ModelParams& q) { return testing::instance_loss(inst, q, 0.2, seed); });
      CAPTURE(r.worst_name);
      CAPTURE(r.worst_rel);
      CHECK(r.checked == p.num_learnable());
      CHECK(r.failed == 0);
    }
  }
}

TEST_CASE("adam_step") {
  ModelShape s = small_shape();
  ModelParams p = testing::random_params(s, 1);
  AdamState state = AdamState::zeros(s);
  const ModelParams before = p;
  adam_step(p, ModelParams::zeros(s), state, {});
  CHECK(p.app.w == before.app.w);
  CHECK(p.fuse_bias == before.fuse_bias);
  CHECK(all_zero(state.m));
  CHECK(all_zero(state.v));

  SUBCASE("closed-form first step") {
    ModelParams x = ModelParams::zeros(s);
    AdamState st = AdamState::zeros(s);
    Gradients g = ModelParams::zeros(s);
    g.fuse_bias = 1.0;
    adam_step(x, g, st, {0.1, 0.9, 0.999, 1e-8});
    CHECK(x.fuse_bias == doctest::Approx(-0.0999999990).epsilon(1e-12));
    CHECK(std::abs(x.fuse_bias + 0.1 / (1.0 + 1e-8)) < 1e-16);
    CHECK(st.step == 1);
  }

  SUBCASE("descends x^2 monotonically") {
    ModelParams x = ModelParams::zeros(s);
    x.fuse_bias = 1.0;
    AdamState st = AdamState::zeros(s);
    double prev = 1.0;
    for (int i = 0; i < 100; ++i) {
      Gradients g = ModelParams::zeros(s);
      g.fuse_bias = 2.0 * x.fuse_bias;
      adam_step(x, g, st, {0.005, 0.9, 0.999, 1e-8});
      CHECK(std::abs(x.fuse_bias) < prev);
      prev = std::abs(x.fuse_bias);
    }
    CHECK(prev < 0.6);
  }

  SUBCASE("non-finite gradients are rejected by name") {
    Gradients g = ModelParams::zeros(s);
    g.gait.w(1, 2) = std::nan("");
    const ModelParams keep = p;
    try {
      adam_step(p, g, state, {});
      FAIL("expected rejection");
    } catch (const std::domain_error& e) {
      CHECK(std::string(e.what()).find("gait.w") != std::string::npos);
    }
    CHECK(p.app.w == keep.app.w);
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  ModelShape s = small_shape();
  Checkpoint c{testing::random_params(s, 77), AdamState::zeros(s), Hyperparams{}};
  c.adam.step = 12;
  c.adam.m.app.w.setConstant(0.125);
  c.adam.v.fuse_bias = 3.5e-9;
  const auto bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(back.params.shape == s);
  CHECK(back.params.encoder.w1 == c.params.encoder.w1);
  CHECK(back.params.encoder.running_var == c.params.encoder.running_var);
  CHECK(back.adam.step == 12);
  CHECK(back.adam.v.fuse_bias == 3.5e-9);

  const auto dir = testing::temp_dir("checkpoint");
  save_checkpoint(c, dir / "m.ckpt");
  CHECK(read_file_bytes(dir / "m.ckpt") == bytes);
  CHECK(encode_checkpoint(load_checkpoint(dir / "m.ckpt")) == bytes);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS(decode_checkpoint(truncated));
}

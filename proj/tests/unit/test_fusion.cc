#include <doctest.h>

#include <cmath>

#include "recdiff/errors.h"
#include "recdiff/fusion.h"
#include "support.h"

using namespace recdiff;
using testing::check_gradients;
using testing::random_matrix;

namespace {

Mat layer_norm_ref(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mu = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) mu += x(r, c);
    mu /= static_cast<double>(x.cols());
    double var = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= static_cast<double>(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mu) / std::sqrt(var + 1e-5);
  }
  return out;
}

// Row-vector convention: the projection of x is x * W.
Mat cross_attention_ref(const Mat& e_id, const Mat& e_sem, const Mat& wq, const Mat& wk, const Mat& wv) {
  const Eigen::Index d = e_id.cols();
  Mat out(e_id.rows(), d);
  for (Eigen::Index r = 0; r < e_id.rows(); ++r) {
    std::vector<double> q(d, 0.0), k1(d, 0.0), k2(d, 0.0), v1(d, 0.0), v2(d, 0.0);
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = 0; i < d; ++i) {
        q[j] += e_id(r, i) * wq(i, j);
        k1[j] += e_id(r, i) * wk(i, j);
        k2[j] += e_sem(r, i) * wk(i, j);
        v1[j] += e_id(r, i) * wv(i, j);
        v2[j] += e_sem(r, i) * wv(i, j);
      }
    }
    double s1 = 0.0, s2 = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      s1 += q[j] * k1[j];
      s2 += q[j] * k2[j];
    }
    s1 /= std::sqrt(static_cast<double>(d));
    s2 /= std::sqrt(static_cast<double>(d));
    const double m = std::max(s1, s2);
    const double a1 = std::exp(s1 - m), a2 = std::exp(s2 - m);
    for (Eigen::Index j = 0; j < d; ++j) out(r, j) = e_id(r, j) + (a1 * v1[j] + a2 * v2[j]) / (a1 + a2);
  }
  return layer_norm_ref(out);
}

Tensor c(const Mat& m) { return Tensor::constant(m); }

}  // namespace

TEST_CASE("gated fusion special cases") {
  Rng rng(1);
  const Mat a = random_matrix(4, 6, rng), b = random_matrix(4, 6, rng);
  GateParams g = make_gate(6, rng);

  g.bias.mutable_value().setConstant(30.0);
  g.weight.mutable_value().setZero();
  CHECK((fuse_gated(c(a), c(b), g).value() - a).cwiseAbs().maxCoeff() < 1e-6);

  g = make_gate(6, rng);
  CHECK((fuse_gated(c(a), c(a), g).value() - a).cwiseAbs().maxCoeff() < 1e-12);

  g.weight.mutable_value().setZero();
  g.bias.mutable_value().setZero();
  CHECK((gate_vector(c(a), c(b), g).value().array() == 0.5).all());
  CHECK((fuse_gated(c(a), c(b), g).value() - 0.5 * (a + b)).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(fuse_gated(c(a), c(random_matrix(4, 5, rng)), g), ShapeError);
}

TEST_CASE("gated output stays inside the interval hull of its inputs") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat a = random_matrix(3, 5, rng), b = random_matrix(3, 5, rng);
    GateParams g{Tensor::parameter(random_matrix(10, 5, rng, 5.0)), Tensor::parameter(random_matrix(1, 5, rng, 5.0))};
    const Mat gamma = gate_vector(c(a), c(b), g).value();
    CHECK((gamma.array() >= 0.0).all());
    CHECK((gamma.array() <= 1.0).all());
    const Mat out = fuse_gated(c(a), c(b), g).value();
    const Mat lo = a.cwiseMin(b), hi = a.cwiseMax(b);
    CHECK((out.array() >= lo.array() - 1e-12).all());
    CHECK((out.array() <= hi.array() + 1e-12).all());
  }
}

TEST_CASE("weighted fusion") {
  Rng rng(3);
  const Mat a = random_matrix(2, 4, rng), b = random_matrix(2, 4, rng);
  CHECK(fuse_weighted(c(a), c(b), 1.0).value() == a);
  CHECK(fuse_weighted(c(a), c(b), 0.0).value() == b);
  const Mat got = fuse_weighted(c(a), c(b), 0.3).value();
  for (Eigen::Index r = 0; r < 2; ++r) {
    for (Eigen::Index k = 0; k < 4; ++k) CHECK(got(r, k) == doctest::Approx(0.3 * a(r, k) + 0.7 * b(r, k)));
  }
  CHECK_THROWS_AS(fuse_weighted(c(a), c(b), 1.5), ConfigError);
  CHECK_THROWS_AS(fuse_weighted(c(a), c(b), -0.1), ConfigError);

  FusionConfig bad;
  bad.strategy = FusionStrategy::weighted;
  bad.weighted_alpha = 2.0;
  CHECK_THROWS_AS(make_fusion(bad, 4, rng), ConfigError);

  FusionConfig learn;
  learn.strategy = FusionStrategy::weighted;
  learn.weighted_alpha = 0.3;
  FusionParams p = make_fusion(learn, 4, rng);
  CHECK(p.weighted_alpha().item() == doctest::Approx(0.3));
}

TEST_CASE("concat fusion") {
  Rng rng(4);
  const Mat a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng);
  Mat left = Mat::Zero(8, 4), right = Mat::Zero(8, 4);
  left.topRows(4) = Mat::Identity(4, 4);
  right.bottomRows(4) = Mat::Identity(4, 4);
  CHECK(fuse_concat(c(a), c(b), c(left)).value() == a);
  CHECK(fuse_concat(c(a), c(b), c(right)).value() == b);

  const Mat proj = random_matrix(8, 4, rng);
  const Mat got = fuse_concat(c(a), c(b), c(proj)).value();
  for (Eigen::Index r = 0; r < 3; ++r) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < 4; ++i) s += a(r, i) * proj(i, j) + b(r, i) * proj(4 + i, j);
      CHECK(got(r, j) == doctest::Approx(s).epsilon(1e-9));
    }
  }
  CHECK_THROWS_AS(fuse_concat(c(a), c(b), c(random_matrix(4, 4, rng))), ShapeError);
}

TEST_CASE("cross-attention fusion") {
  Rng rng(5);
  const Mat a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng);
  CrossAttentionParams p = make_cross_attention(4, 1, rng);

  // Equal inputs: both keys score the same, so the mix is the value of that vector.
  const Mat same = fuse_cross_attention(c(a), c(a), p).value();
  CHECK((same - layer_norm_ref(a + a * p.value.value())).cwiseAbs().maxCoeff() < 1e-9);

  CrossAttentionParams zero_v = p;
  zero_v.value = Tensor::parameter(Mat::Zero(4, 4));
  CHECK((fuse_cross_attention(c(a), c(b), zero_v).value() - layer_norm_ref(a)).cwiseAbs().maxCoeff() < 1e-9);

  const Mat got = fuse_cross_attention(c(a), c(b), p).value();
  const Mat want = cross_attention_ref(a, b, p.query.value(), p.key.value(), p.value.value());
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-5);

  CHECK_THROWS_AS(make_cross_attention(4, 3, rng), ConfigError);
  CHECK_THROWS_AS(fuse_cross_attention(c(a), c(random_matrix(2, 4, rng)), p), ShapeError);
}

TEST_CASE("every strategy passes a gradient check") {
  Rng rng(6);
  Tensor a = Tensor::parameter(random_matrix(3, 4, rng));
  Tensor b = Tensor::parameter(random_matrix(3, 4, rng));
  const Tensor w = c(random_matrix(3, 4, rng));
  for (FusionStrategy s : {FusionStrategy::gated, FusionStrategy::weighted, FusionStrategy::concat,
                           FusionStrategy::cross_attention}) {
    CAPTURE(to_string(s));
    FusionConfig cfg;
    cfg.strategy = s;
    cfg.ca_heads = 2;
    FusionParams p = make_fusion(cfg, 4, rng);
    ParameterSet ps;
    p.collect("fusion", ps);
    REQUIRE(ps.count() > 0);
    std::vector<Tensor> inputs{a, b};
    for (const auto& [name, t] : ps.items()) inputs.push_back(t);
    auto loss = [&] { return ag::sum(ag::mul(fuse(a, b, p), w)); };
    CHECK(check_gradients(loss, inputs).max_relative_error < 1e-4);
  }
}

TEST_CASE("strategy names parse exhaustively") {
  for (const char* name : {"gated", "weighted", "concat", "cross_attention"}) {
    CHECK(to_string(parse_fusion_strategy(name)) == name);
  }
  CHECK_THROWS_AS(parse_fusion_strategy("magic"), ConfigError);
  CHECK_THROWS_AS(parse_fusion_strategy(""), ConfigError);
}

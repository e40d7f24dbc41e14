#include <doctest.h>

#include <cmath>

#include "recdiff/errors.h"
#include "recdiff/tensor.h"
#include "support.h"

using namespace recdiff;
using testing::check_gradients;
using testing::random_matrix;

namespace {

Tensor param(Eigen::Index r, Eigen::Index c, Rng& rng) { return Tensor::parameter(random_matrix(r, c, rng)); }

}  // namespace

TEST_CASE("elementwise and matrix ops match finite differences") {
  Rng rng(7);
  Tensor a = param(3, 4, rng), b = param(3, 4, rng), c = param(4, 2, rng);
  Tensor row = param(1, 4, rng), col = param(3, 1, rng), s = param(1, 1, rng);
  const Mat wa = random_matrix(3, 4, rng), wb = random_matrix(3, 2, rng);
  auto W = [](const Mat& m) { return Tensor::constant(m); };

  const std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
      {"matmul", [&] { return ag::sum(ag::mul(ag::matmul(a, c), W(wb))); }},
      {"matmul_nt", [&] { return ag::sum(ag::matmul_nt(a, b)); }},
      {"transpose", [&] { return ag::sum(ag::mul(ag::transpose(ag::transpose(a)), W(wa))); }},
      {"add_sub_mul", [&] { return ag::sum(ag::mul(ag::sub(ag::add(a, b), ag::mul(a, b)), W(wa))); }},
      {"scale", [&] { return ag::sum(ag::mul(ag::scale(a, -1.7), W(wa))); }},
      {"mul_scalar", [&] { return ag::sum(ag::mul(ag::mul_scalar(a, s), W(wa))); }},
      {"affine_scalar", [&] { return ag::sum(ag::mul(ag::mul_scalar(a, ag::affine_scalar(s, 0.3, 2.0)), W(wa))); }},
      {"one_minus", [&] { return ag::sum(ag::mul(ag::one_minus(a), W(wa))); }},
      {"square", [&] { return ag::sum(ag::mul(ag::square(a), W(wa))); }},
      {"add_row", [&] { return ag::sum(ag::mul(ag::add_row(a, row), W(wa))); }},
      {"mul_row", [&] { return ag::sum(ag::mul(ag::mul_row(a, row), W(wa))); }},
      {"mul_col", [&] { return ag::sum(ag::mul(ag::mul_col(a, col), W(wa))); }},
      {"sigmoid", [&] { return ag::sum(ag::mul(ag::sigmoid(a), W(wa))); }},
      {"tanh", [&] { return ag::sum(ag::mul(ag::tanh(a), W(wa))); }},
      {"gelu", [&] { return ag::sum(ag::mul(ag::gelu(a), W(wa))); }},
      {"silu", [&] { return ag::sum(ag::mul(ag::silu(a), W(wa))); }},
      {"concat_slice", [&] {
         Tensor x = ag::concat_cols(a, b);
         Tensor y = ag::concat_rows(ag::slice_cols(x, 2, 4), ag::slice_rows(a, 1, 2));
         return ag::sum(ag::square(y));
       }},
      {"mean", [&] { return ag::mean(ag::mul(a, b)); }},
      {"row_dot", [&] { return ag::sum(ag::mul(ag::row_dot(a, b), col)); }},
      {"standardize_rows", [&] { return ag::sum(ag::mul(ag::standardize_rows(a), W(wa))); }},
      {"l2_normalize_rows", [&] { return ag::sum(ag::mul(ag::l2_normalize_rows(a), W(wa))); }},
  };
  for (const auto& [name, fn] : cases) {
    CAPTURE(name);
    const auto r = check_gradients(fn, {a, b, c, row, col, s});
    CHECK(r.max_relative_error < 1e-6);
  }
}

TEST_CASE("relu gradient away from the kink") {
  Rng rng(3);
  Mat v = random_matrix(4, 5, rng);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v.data()[i]) < 0.1) v.data()[i] = 0.5;
  }
  Tensor a = Tensor::parameter(v);
  const Mat w = random_matrix(4, 5, rng);
  CHECK(check_gradients([&] { return ag::sum(ag::mul(ag::relu(a), Tensor::constant(w))); }, {a}).max_relative_error <
        1e-8);
}

TEST_CASE("gather_rows skips padding and accumulates repeated rows") {
  Rng rng(5);
  Tensor table = param(5, 3, rng);
  const std::vector<int> idx = {0, 2, 2, 4, 1};
  Tensor g = ag::gather_rows(table, idx, 4);
  CHECK(g.value().row(3).isZero());
  CHECK(g.value().row(1) == table.value().row(2));
  ag::sum(g).backward();
  CHECK(table.grad().row(4).isZero());
  CHECK(table.grad()(2, 0) == doctest::Approx(2.0));
  CHECK(table.grad().row(3).isZero());
}

TEST_CASE("cross entropy value and gradient") {
  Mat logits(1, 2);
  logits << 1.0, 0.0;
  const std::vector<int> target = {0};
  CHECK(ag::cross_entropy(Tensor::constant(logits), target).item() ==
        doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))).epsilon(1e-14));
  Rng rng(9);
  Tensor l = param(4, 6, rng);
  const std::vector<int> targets = {0, 5, 3, 3};
  CHECK(check_gradients([&] { return ag::cross_entropy(l, targets); }, {l}).max_relative_error < 1e-7);
}

TEST_CASE("causal attention matches an explicit oracle and its gradient") {
  Rng rng(11);
  const int d = 4, heads = 2;
  Tensor q = param(5, d, rng), k = param(5, d, rng), v = param(5, d, rng);
  const std::vector<int> offsets = {0, 3, 5};
  const Mat out = ag::causal_attention(q, k, v, offsets, heads).value();

  const int dh = d / heads;
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    for (int i = offsets[b]; i < offsets[b + 1]; ++i) {
      for (int h = 0; h < heads; ++h) {
        std::vector<double> w;
        double z = 0.0;
        for (int j = offsets[b]; j <= i; ++j) {
          double s = 0.0;
          for (int c = 0; c < dh; ++c) s += q.value()(i, h * dh + c) * k.value()(j, h * dh + c);
          w.push_back(std::exp(s / std::sqrt(dh)));
          z += w.back();
        }
        for (int c = 0; c < dh; ++c) {
          double expect = 0.0;
          for (int j = offsets[b]; j <= i; ++j) expect += w[j - offsets[b]] / z * v.value()(j, h * dh + c);
          CHECK(out(i, h * dh + c) == doctest::Approx(expect).epsilon(1e-12));
        }
      }
    }
  }
  const Mat w = random_matrix(5, d, rng);
  auto loss = [&] { return ag::sum(ag::mul(ag::causal_attention(q, k, v, offsets, heads), Tensor::constant(w))); };
  CHECK(check_gradients(loss, {q, k, v}).max_relative_error < 1e-6);
}

TEST_CASE("dropout") {
  Rng rng(1);
  Tensor a = param(20, 20, rng);
  CHECK(ag::dropout(a, 0.0, rng).value() == a.value());
  const Mat d = ag::dropout(a, 0.5, rng).value();
  int zeros = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d.data()[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(d.data()[i] == doctest::Approx(2.0 * a.value().data()[i]));
    }
  }
  CHECK(zeros > 140);
  CHECK(zeros < 260);
}

TEST_CASE("no-grad guard records no graph") {
  Rng rng(2);
  Tensor a = param(2, 2, rng);
  {
    ag::NoGradGuard guard;
    CHECK_FALSE(ag::grad_enabled());
    CHECK_FALSE(ag::square(a).requires_grad());
  }
  CHECK(ag::grad_enabled());
  CHECK(ag::square(a).requires_grad());
}

TEST_CASE("shape errors") {
  Tensor a = Tensor::constant(Mat::Zero(2, 3));
  Tensor b = Tensor::constant(Mat::Zero(2, 2));
  CHECK_THROWS_AS(ag::matmul(a, b), ShapeError);
  CHECK_THROWS_AS(ag::add(a, b), ShapeError);
  CHECK_THROWS_AS(a.backward(), ShapeError);
}

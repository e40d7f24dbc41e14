#include <doctest.h>

#include <cmath>

#include "recdiff/errors.h"
#include "recdiff/losses.h"
#include "support.h"

using namespace recdiff;
using testing::check_gradients;
using testing::random_matrix;

namespace {

const double kTwoWay = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));

Tensor c(const Mat& m) { return Tensor::constant(m); }

Mat unit_rows(Mat m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r).normalize();
  return m;
}

}  // namespace

TEST_CASE("rec loss examples") {
  Rng rng(1);
  const Mat h = random_matrix(3, 4, rng);
  const std::vector<int> targets{0, 4, 2};
  CHECK(rec_loss(c(h), targets, c(Mat::Zero(7, 4))).item() == doctest::Approx(std::log(7.0)).epsilon(1e-12));

  Mat table = Mat::Zero(5, 2);
  table(3, 0) = 30.0;
  Mat hh = Mat::Zero(1, 2);
  hh(0, 0) = 1.0;
  CHECK(rec_loss(c(hh), std::vector<int>{3}, c(table)).item() < 1e-12);

  Mat two = Mat::Zero(2, 1);
  two(0, 0) = 1.0;
  Mat one = Mat::Ones(1, 1);
  CHECK(rec_loss(c(one), std::vector<int>{0}, c(two)).item() == doctest::Approx(kTwoWay).epsilon(1e-12));
  CHECK(std::abs(kTwoWay - 0.3133) < 1e-4);

  CHECK_THROWS_AS(rec_loss(c(one), std::vector<int>{2}, c(two)), DataError);
  CHECK_THROWS_AS(rec_loss(c(one), std::vector<int>{-1}, c(two)), DataError);
}

TEST_CASE("infonce examples") {
  Mat a(2, 2), b(2, 2);
  a << 1, 0, 0, 1;
  b << 1, 0, 0, 1;
  CHECK(infonce_loss(c(a), c(b), 1.0).item() == doctest::Approx(kTwoWay).epsilon(1e-12));

  Rng rng(2);
  const Mat x = random_matrix(8, 5, rng), y = random_matrix(8, 5, rng);
  const double base = infonce_loss(c(x), c(y), 0.5).item();
  CHECK(infonce_loss(c(5.0 * x), c(5.0 * y), 0.5).item() == doctest::Approx(base).epsilon(1e-12));

  CHECK_THROWS_AS(infonce_loss(c(x.topRows(1)), c(y.topRows(1)), 0.5), ShapeError);
  CHECK_THROWS_AS(infonce_loss(c(x), c(y), 0.0), ConfigError);
}

TEST_CASE("infonce with independent views is close to ln B") {
  double total = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    const Mat a = unit_rows(random_matrix(256, 64, rng)), b = unit_rows(random_matrix(256, 64, rng));
    total += infonce_loss(c(a), c(b), 0.5).item();
  }
  const double mean = total / 20;
  CAPTURE(mean);
  CHECK(std::abs(mean - std::log(256.0)) < 0.1 * std::log(256.0));
}

TEST_CASE("align loss examples") {
  Mat a(3, 2), b(3, 2);
  a << 1, 0, 0, 2, 3, 3;
  CHECK(align_loss(c(a), c(a)).item() == doctest::Approx(0.0).scale(1.0));
  b << 0, 1, 5, 0, -1, 1;
  CHECK(align_loss(c(a), c(b)).item() == doctest::Approx(1.0));
  CHECK(align_loss(c(a), c(-2.0 * a)).item() == doctest::Approx(2.0));
  Mat z = a;
  z.row(1).setZero();
  CHECK_THROWS_AS(align_loss(c(z), c(a)), DataError);
  CHECK_THROWS_AS(align_loss(c(a), c(Mat::Ones(3, 3))), ShapeError);
}

TEST_CASE("loss gradients") {
  Rng rng(3);
  Tensor h = Tensor::parameter(random_matrix(4, 3, rng));
  Tensor g = Tensor::parameter(random_matrix(4, 3, rng));
  Tensor table = Tensor::parameter(random_matrix(6, 3, rng));
  const std::vector<int> targets{1, 5, 0, 3};
  CHECK(check_gradients([&] { return rec_loss(h, targets, table); }, {h, table}).max_relative_error < 1e-6);
  CHECK(check_gradients([&] { return infonce_loss(h, g, 0.5); }, {h, g}).max_relative_error < 1e-6);
  CHECK(check_gradients([&] { return align_loss(h, g); }, {h, g}).max_relative_error < 1e-6);
}

TEST_CASE("total loss arithmetic") {
  LossComponents comp{Tensor::scalar(0.5), Tensor::scalar(0.2), Tensor::scalar(0.3), Tensor::scalar(0.1)};
  CHECK(total_loss(comp, {1, 1, 1, 1}).item() == doctest::Approx(1.1).epsilon(1e-15));
  CHECK(total_loss(comp, {1, 0, 0, 0}).item() == 0.5);
  CHECK(total_loss(comp, {}).item() == doctest::Approx(0.5 + 0.2 + 0.03 + 0.01));

  LossComponents rec_only{Tensor::scalar(0.7), {}, {}, {}};
  CHECK(total_loss(rec_only, {}).item() == 0.7);

  LossComponents bad = comp;
  bad.cl = Tensor::scalar(std::nan(""));
  try {
    total_loss(bad, {});
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()) == "non-finite cl loss");
  }
}

TEST_CASE("total gradient is the weighted sum of component gradients") {
  Rng rng(4);
  Tensor h = Tensor::parameter(random_matrix(4, 3, rng));
  Tensor g = Tensor::parameter(random_matrix(4, 3, rng));
  Tensor table = Tensor::parameter(random_matrix(6, 3, rng));
  const std::vector<int> targets{1, 5, 0, 3};
  const LossWeights w{0.7, 0.0, 0.3, 1.9};
  auto components = [&] {
    return LossComponents{rec_loss(h, targets, table), {}, infonce_loss(h, g, 0.5), align_loss(h, g)};
  };
  std::vector<Tensor> inputs{h, g, table};
  CHECK(check_gradients([&] { return total_loss(components(), w); }, inputs).max_relative_error < 1e-6);

  auto grads_of = [&](const std::function<Tensor()>& fn) {
    for (auto& t : inputs) t.zero_grad();
    fn().backward();
    std::vector<Mat> out;
    for (auto& t : inputs) out.push_back(t.has_grad() ? t.grad() : Mat::Zero(t.rows(), t.cols()));
    return out;
  };
  const auto total = grads_of([&] { return total_loss(components(), w); });
  const auto rec = grads_of([&] { return rec_loss(h, targets, table); });
  const auto cl = grads_of([&] { return infonce_loss(h, g, 0.5); });
  const auto al = grads_of([&] { return align_loss(h, g); });
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Mat expect = w.rec * rec[i] + w.cl * cl[i] + w.align * al[i];
    CHECK((total[i] - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("loss weight validation") {
  CHECK_NOTHROW(LossWeights{}.validate());
  CHECK_THROWS_AS((LossWeights{0, 1, 1, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((LossWeights{1, -1, 1, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((LossWeights{1, 1, -0.5, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((LossWeights{1, 1, 1, -2}.validate()), ConfigError);
}

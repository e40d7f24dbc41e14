#include <doctest.h>

#include <cmath>
#include <string>

#include "recdiff/embeddings.h"
#include "recdiff/errors.h"
#include "recdiff/util.h"
#include "support.h"

using namespace recdiff;
using testing::check_gradients;
using testing::random_matrix;

namespace {

double gelu_ref(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

Mat cast_float(const Mat& m) { return m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); }); }

}  // namespace

TEST_CASE("semantic matrix loads with a zero padding row") {
  const auto dir = testing::temp_dir("emb_load");
  write_file(dir / "sem.csv", "1,2,3,4\n5,6,7,8\n9,10,11,12\n");
  SemanticMatrix m = load_semantic_matrix(dir / "sem.csv", 3);
  REQUIRE(m.values.rows() == 4);
  REQUIRE(m.values.cols() == 4);
  CHECK(m.num_items() == 3);
  CHECK(m.values.row(3).isZero(0.0));
  CHECK(m.values(2, 3) == 12.0);
}

TEST_CASE("semantic matrix row count and width errors") {
  const auto dir = testing::temp_dir("emb_err");
  write_file(dir / "sem.csv", "1,2\n3,4\n5,6\n");
  try {
    load_semantic_matrix(dir / "sem.csv", 5);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()) == "semantic matrix has 3 rows, expected 5");
  }
  write_file(dir / "ragged.csv", "1,2\n3,4,5\n");
  CHECK_THROWS_AS(load_semantic_matrix(dir / "ragged.csv", 2), DataError);
}

TEST_CASE("binary round trip of pseudo embeddings is bit-identical") {
  const auto dir = testing::temp_dir("emb_rt");
  std::vector<PromptRecord> prompts;
  for (int i = 0; i < 7; ++i) prompts.push_back({i, "item number " + std::to_string(i)});
  SemanticMatrix m = pseudo_semantic_matrix(prompts, 16, 3);
  save_semantic_matrix(dir / "sem.bin", m);
  CHECK(std::filesystem::exists(dir / "sem.json"));
  CHECK(std::filesystem::exists(dir / "sem.f32"));
  SemanticMatrix a = load_semantic_matrix(dir / "sem.bin", 7);
  CHECK(a.source_tag == "pseudo");
  CHECK(a.values == cast_float(m.values));
  save_semantic_matrix(dir / "again.bin", a);
  SemanticMatrix b = load_semantic_matrix(dir / "again.bin", 7);
  CHECK(b.values == a.values);
  CHECK(semantic_checksum(a) == semantic_checksum(b));

  save_semantic_matrix(dir / "sem.csv", a);
  SemanticMatrix c = load_semantic_matrix(dir / "sem.csv", 7);
  CHECK(c.values == a.values);
}

TEST_CASE("pseudo embeddings are deterministic and unit norm") {
  const Vec a = pseudo_embed("Title: Heat; Genre: Action", 64, 0);
  const Vec b = pseudo_embed("Title: Heat; Genre: Action", 64, 0);
  CHECK(a == b);
  CHECK(std::abs(a.norm() - 1.0) < 1e-6);
  CHECK(pseudo_embed("Title: Heat; Genre: Action", 64, 1) != a);
  CHECK_THROWS_AS(pseudo_embed("x", 0, 0), ConfigError);
}

TEST_CASE("one-character prompt edits give near-orthogonal vectors") {
  Rng rng(11);
  std::uniform_int_distribution<int> letter('a', 'z');
  double total = 0.0;
  const int pairs = 1000;
  for (int i = 0; i < pairs; ++i) {
    std::string p(12, 'a');
    for (char& c : p) c = static_cast<char>(letter(rng));
    std::string q = p;
    q[static_cast<std::size_t>(i % 12)] = q[static_cast<std::size_t>(i % 12)] == 'z' ? 'a' : q[i % 12] + 1;
    total += std::abs(pseudo_embed(p, 64, 0).dot(pseudo_embed(q, 64, 0)));
  }
  CHECK(total / pairs < 0.2);
}

TEST_CASE("pseudo semantic matrix requires every item exactly once") {
  CHECK_THROWS_AS(pseudo_semantic_matrix({{0, "a"}, {0, "b"}}, 4, 0), DataError);
  CHECK_THROWS_AS(pseudo_semantic_matrix({{0, "a"}, {2, "b"}}, 4, 0), DataError);
}

TEST_CASE("collaborative table has a zero padding row") {
  Rng rng(1);
  CollaborativeTable t = make_collaborative_table(10, 8, rng);
  CHECK(t.table.rows() == 11);
  CHECK(t.table.value().row(10).isZero(0.0));
  CHECK(t.real_rows().rows() == 10);
  CHECK(t.table.requires_grad());
}

TEST_CASE("adapter identity and zero-input cases") {
  Rng rng(2);
  AdapterParams one = make_adapter(5, 5, 1, Activation::gelu, rng);
  one.layers[0].weight.mutable_value() = Mat::Identity(5, 5);
  one.layers[0].bias.mutable_value().setZero();
  const Vec x = random_matrix(5, 1, rng);
  CHECK(adapt(x, one) == x);

  AdapterParams two = make_adapter(6, 4, 2, Activation::gelu, rng);
  two.layers[1].bias.mutable_value() = random_matrix(1, 4, rng);
  const Vec out = adapt(Vec(Vec::Zero(6)), two);
  CHECK((out.transpose() - two.layers[1].bias.value()).norm() == doctest::Approx(0.0));
}

TEST_CASE("adapter matches a hand-rolled matvec oracle") {
  Rng rng(3);
  AdapterParams p = make_adapter(7, 4, 2, Activation::gelu, rng);
  p.layers[0].bias.mutable_value() = random_matrix(1, 4, rng);
  p.layers[1].bias.mutable_value() = random_matrix(1, 4, rng);
  const Vec x = random_matrix(7, 1, rng);
  const Mat& w0 = p.layers[0].weight.value();
  const Mat& w1 = p.layers[1].weight.value();
  std::vector<double> hidden(4), expect(4);
  for (int j = 0; j < 4; ++j) {
    double s = p.layers[0].bias.value()(0, j);
    for (int i = 0; i < 7; ++i) s += x(i) * w0(i, j);
    hidden[j] = gelu_ref(s);
  }
  for (int j = 0; j < 4; ++j) {
    double s = p.layers[1].bias.value()(0, j);
    for (int i = 0; i < 4; ++i) s += hidden[i] * w1(i, j);
    expect[j] = s;
  }
  const Vec got = adapt(x, p);
  for (int j = 0; j < 4; ++j) CHECK(got(j) == doctest::Approx(expect[j]).epsilon(1e-9));
  CHECK_THROWS_AS(adapt(Vec(Vec::Zero(3)), p), ShapeError);
}

TEST_CASE("adapter gradients flow to params only") {
  Rng rng(4);
  AdapterParams p = make_adapter(6, 4, 2, Activation::gelu, rng);
  Tensor sem = Tensor::parameter(random_matrix(5, 6, rng));
  const Tensor w = Tensor::constant(random_matrix(5, 4, rng));
  auto loss = [&] { return ag::sum(ag::mul(adapt(sem, p), w)); };
  std::vector<Tensor> params;
  for (const auto& l : p.layers) {
    params.push_back(l.weight);
    params.push_back(l.bias);
  }
  CHECK(check_gradients(loss, params).max_relative_error < 1e-4);

  Tensor l = loss();
  l.backward();
  CHECK((!sem.has_grad() || sem.grad().isZero(0.0)));
}

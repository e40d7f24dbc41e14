#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "recdiff/errors.h"
#include "recdiff/evaluation.h"
#include "recdiff/training.h"
#include "recdiff/util.h"
#include "support.h"

using namespace recdiff;
using testing::random_matrix;

namespace {

// Sort candidates by score, ties by index, and find the target's position.
int brute_rank(const std::vector<double>& scores, int target, const std::vector<int>& masked = {}) {
  std::vector<int> order;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i) {
    if (i != target && std::find(masked.begin(), masked.end(), i) != masked.end()) continue;
    order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  return static_cast<int>(std::find(order.begin(), order.end(), target) - order.begin()) + 1;
}

double brute_hr(const std::vector<int>& ranks, int k) {
  int hits = 0;
  for (int r : ranks) hits += r <= k ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double brute_ndcg(const std::vector<int>& ranks, int k) {
  double s = 0.0;
  for (int r : ranks) s += r <= k ? 1.0 / std::log2(r + 1.0) : 0.0;
  return s / static_cast<double>(ranks.size());
}

// Power iteration with deflation.
std::vector<double> top_eigenvalues(Mat cov, int count) {
  std::vector<double> out;
  Rng rng(1);
  for (int c = 0; c < count; ++c) {
    Vec v = random_matrix(cov.rows(), 1, rng);
    double lambda = 0.0;
    for (int it = 0; it < 5000; ++it) {
      Vec w = cov * v;
      lambda = v.dot(w);
      v = w / w.norm();
    }
    out.push_back(lambda);
    cov -= lambda * v * v.transpose();
  }
  return out;
}

}  // namespace

TEST_CASE("hit rate and ndcg examples") {
  CHECK(hr_at_k(std::vector<int>{1, 2, 3}, 10) == 1.0);
  CHECK(hr_at_k(std::vector<int>{11, 12}, 10) == 0.0);
  CHECK(hr_at_k(std::vector<int>{1, 5, 10, 11, 20}, 10) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(std::abs(ndcg_at_k(std::vector<int>{1}, 10) - 1.0) < 1e-12);
  CHECK(std::abs(ndcg_at_k(std::vector<int>{3}, 10) - 0.5) < 1e-12);
  CHECK(std::abs(ndcg_at_k(std::vector<int>{1, 3, 100}, 10) - 0.5) < 1e-12);
  CHECK_THROWS_AS(hr_at_k(std::vector<int>{}, 10), DataError);
  CHECK_THROWS_AS(ndcg_at_k(std::vector<int>{}, 10), DataError);
  CHECK_THROWS_AS(hr_at_k(std::vector<int>{1}, 0), ConfigError);
}

TEST_CASE("ranking and metrics match a brute-force oracle") {
  Rng rng(2);
  std::uniform_int_distribution<int> items(2, 20), coarse(0, 3);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = items(rng);
    const int users = 1 + trial % 7;
    std::vector<int> ranks, brute;
    for (int u = 0; u < users; ++u) {
      Eigen::RowVectorXd scores(n);
      std::vector<double> s(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) s[i] = scores[i] = coarse(rng);  // coarse values force ties
      const int target = std::uniform_int_distribution<int>(0, n - 1)(rng);
      std::vector<int> masked;
      if (trial % 2) {
        for (int i = 0; i < n; ++i) {
          if (coarse(rng) == 0) masked.push_back(i);
        }
      }
      ranks.push_back(rank_of_target(scores, target, masked));
      brute.push_back(brute_rank(s, target, masked));
    }
    CHECK(ranks == brute);
    for (int k : {1, 5, 10}) {
      CHECK(hr_at_k(ranks, k) == brute_hr(brute, k));
      CHECK(ndcg_at_k(ranks, k) == brute_ndcg(brute, k));
    }
  }
}

TEST_CASE("metric monotonicity and ndcg bounded by hit rate") {
  Rng rng(3);
  std::uniform_int_distribution<int> r(1, 30);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> ranks(10);
    for (int& x : ranks) x = r(rng);
    for (int k = 1; k < 30; ++k) {
      CHECK(hr_at_k(ranks, k) <= hr_at_k(ranks, k + 1));
      CHECK(ndcg_at_k(ranks, k) <= ndcg_at_k(ranks, k + 1));
      CHECK(ndcg_at_k(ranks, k) <= hr_at_k(ranks, k));
    }
  }
}

TEST_CASE("strata recombine to the overall metric") {
  Rng rng(4);
  std::uniform_int_distribution<int> r(1, 40);
  std::bernoulli_distribution coin(0.3);
  std::vector<RankResult> results(57);
  for (std::size_t i = 0; i < results.size(); ++i) {
    results[i].user = static_cast<int>(i);
    results[i].rank = r(rng);
    results[i].item_stratum = coin(rng) ? ItemStratum::tail : ItemStratum::head;
    results[i].user_stratum = coin(rng) ? UserStratum::cold : UserStratum::hot;
  }
  const EvalReport rep = summarize(results, EvalSplit::test);
  CHECK(rep.overall.users == 57);
  CHECK(rep.tail.users + rep.head.users == 57);
  CHECK(rep.cold.users + rep.hot.users == 57);
  auto mix = [](const MetricCell& a, const MetricCell& b, double MetricCell::*f) {
    return (a.*f * a.users + b.*f * b.users) / static_cast<double>(a.users + b.users);
  };
  for (auto f : {&MetricCell::hr5, &MetricCell::hr10, &MetricCell::ndcg5, &MetricCell::ndcg10}) {
    CHECK(std::abs(mix(rep.tail, rep.head, f) - rep.overall.*f) < 1e-12);
    CHECK(std::abs(mix(rep.cold, rep.hot, f) - rep.overall.*f) < 1e-12);
  }
}

TEST_CASE("single user ranked first fills every applicable cell with one") {
  std::vector<RankResult> one(1);
  one[0].rank = 1;
  one[0].item_stratum = ItemStratum::tail;
  one[0].user_stratum = UserStratum::cold;
  const EvalReport rep = summarize(one, EvalSplit::test);
  for (const MetricCell* c : {&rep.overall, &rep.tail, &rep.cold}) {
    CHECK(c->hr5 == 1.0);
    CHECK(c->hr10 == 1.0);
    CHECK(c->ndcg5 == 1.0);
    CHECK(c->ndcg10 == 1.0);
  }
  CHECK(rep.head.users == 0);
  const auto j = nlohmann::json::parse(report_to_json(rep));
  CHECK(j["head_item"].is_null());
  CHECK(j["hot_user"].is_null());
  CHECK(j["tail_item"]["hr@10"] == 1.0);
  CHECK(j["overall"]["users"] == 1);
  CHECK(report_to_text(rep).find("Tail Item") != std::string::npos);
}

TEST_CASE("model evaluation matches a score-sort-rank oracle") {
  SyntheticConfig sc;
  sc.users = 60;
  sc.items = 40;
  sc.semantic_dim = 8;
  sc.seed = 5;
  const auto setup = testing::synthetic_setup(sc);
  const auto& ds = setup.ds;
  ExperimentConfig cfg = testing::small_config();
  Model m = make_model(cfg, setup.semantic);
  Rng rng(6);
  m.id_table.table.mutable_value().topRows(ds.num_items()) = random_matrix(ds.num_items(), cfg.model.dim, rng);
  const StrataLabels strata = compute_strata(ds, 0.2, 5);

  for (bool mask : {false, true}) {
    CAPTURE(mask);
    EvalOptions opts;
    opts.mask_history = mask;
    opts.silhouette = false;
    const EvalReport rep = evaluate(m, ds, strata, opts);

    const Tensor items = item_representations(m);
    const Mat table = scoring_table(m, items).value();
    std::vector<int> all, tail, cold;
    for (int u = 0; u < ds.num_users(); ++u) {
      std::vector<int> seq = ds.users[u].train;
      seq.push_back(ds.users[u].valid);
      if (static_cast<int>(seq.size()) > cfg.data.max_len) seq.erase(seq.begin(), seq.end() - cfg.data.max_len);
      const Vec h = encode_sequence(seq, ds.pad_index(), items, m.encoder).summary;
      std::vector<double> scores(static_cast<std::size_t>(ds.num_items()));
      for (int i = 0; i < ds.num_items(); ++i) scores[i] = table.row(i).dot(h);
      std::vector<int> masked;
      if (mask) masked = seq;
      const int rank = brute_rank(scores, ds.users[u].test, masked);
      all.push_back(rank);
      if (strata.item[ds.users[u].test] == ItemStratum::tail) tail.push_back(rank);
      if (strata.user[u] == UserStratum::cold) cold.push_back(rank);
    }
    CHECK(rep.overall.users == all.size());
    CHECK(std::abs(rep.overall.hr10 - brute_hr(all, 10)) < 1e-12);
    CHECK(std::abs(rep.overall.ndcg10 - brute_ndcg(all, 10)) < 1e-12);
    CHECK(std::abs(rep.overall.ndcg5 - brute_ndcg(all, 5)) < 1e-12);
    CHECK(rep.tail.users == tail.size());
    if (!tail.empty()) CHECK(std::abs(rep.tail.hr10 - brute_hr(tail, 10)) < 1e-12);
    CHECK(rep.cold.users == cold.size());
    if (!cold.empty()) CHECK(std::abs(rep.cold.ndcg10 - brute_ndcg(cold, 10)) < 1e-12);
  }

  auto other = testing::make_dataset(3, {{0, 1, 2, 0}});
  CHECK_THROWS_AS(evaluate(m, other, compute_strata(other, 0.2, 5)), DataError);
}

TEST_CASE("evaluation reports silhouette once prototypes exist") {
  SyntheticConfig sc;
  sc.users = 60;
  sc.items = 40;
  sc.semantic_dim = 8;
  const auto setup = testing::synthetic_setup(sc);
  ExperimentConfig cfg = testing::small_config();
  cfg.eval.silhouette_max_points = 30;
  Model m = make_model(cfg, setup.semantic);
  const StrataLabels strata = compute_strata(setup.ds, 0.2, 5);
  CHECK_FALSE(evaluate(m, setup.ds, strata).silhouette.has_value());
  Trainer t(m, setup.ds);
  t.refit_prototypes();
  EvalOptions opts;
  opts.silhouette_max_points = 30;
  const EvalReport rep = evaluate(m, setup.ds, strata, opts);
  REQUIRE(rep.silhouette.has_value());
  CHECK(*rep.silhouette >= -1.0);
  CHECK(*rep.silhouette <= 1.0);
  CHECK(rep.silhouette_points == 30);
  CHECK(evaluate(m, setup.ds, strata, opts).silhouette == rep.silhouette);
}

TEST_CASE("projection of 2-D points preserves distances") {
  Rng rng(7);
  const Mat pts = random_matrix(12, 2, rng);
  const Projection p = export_projection(pts, {});
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 12; ++j) {
      CHECK(std::abs((pts.row(i) - pts.row(j)).norm() - (p.coords.row(i) - p.coords.row(j)).norm()) < 1e-9);
    }
  }
  CHECK(p.labels == std::vector<int>(12, -1));
}

TEST_CASE("projection of collinear points has one axis") {
  Mat pts(3, 5);
  Vec dir(5);
  dir << 1, 2, -1, 0.5, 3;
  for (int i = 0; i < 3; ++i) pts.row(i) = (1.0 + 2.0 * i) * dir.transpose();
  const Projection p = export_projection(pts, {0, 1, 0});
  CHECK(p.explained_variance[1] < 1e-9);
  CHECK(p.coords.col(1).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(export_projection(Mat::Ones(4, 3), {}), DataError);
  CHECK_THROWS_AS(export_projection(pts.topRows(2), {}), DataError);
}

TEST_CASE("projection variance matches an eigensolver oracle") {
  Rng rng(8);
  const Mat pts = random_matrix(50, 8, rng);
  const Projection p = export_projection(pts, {});
  const Mat centered = pts.rowwise() - pts.colwise().mean();
  const Mat cov = centered.transpose() * centered / 49.0;
  const auto top = top_eigenvalues(cov, 2);
  CHECK(std::abs(p.explained_variance[0] - top[0]) < 1e-8);
  CHECK(std::abs(p.explained_variance[1] - top[1]) < 1e-8);
  Vec col_var(2);
  for (int c = 0; c < 2; ++c) col_var[c] = p.coords.col(c).squaredNorm() / 49.0;
  CHECK(std::abs(col_var[0] - top[0]) < 1e-8);

  const auto dir = testing::temp_dir("proj");
  write_projection_csv(dir / "p.csv", p);
  const std::string csv = read_file(dir / "p.csv");
  CHECK(csv.rfind("x,y,cluster\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 51);
}

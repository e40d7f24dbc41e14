#include "recdiff/evaluation.h"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "recdiff/errors.h"
#include "recdiff/util.h"

namespace recdiff {

int rank_of_target(const Eigen::Ref<const Eigen::RowVectorXd>& scores, int target, std::span<const int> masked) {
  const Eigen::Index n = scores.size();
  if (target < 0 || target >= n) throw ShapeError("rank_of_target: target out of range");
  const double s = scores[target];
  int rank = 1;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == target) continue;
    if (scores[j] > s || (scores[j] == s && j < target)) ++rank;
  }
  for (int m : masked) {
    if (m == target || m < 0 || m >= n) continue;
    if (scores[m] > s || (scores[m] == s && m < target)) --rank;
  }
  return rank;
}

double hr_at_k(std::span<const int> ranks, int k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (ranks.empty()) throw DataError("hr_at_k: no ranks");
  std::size_t hits = 0;
  for (int r : ranks) hits += r <= k ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double ndcg_at_k(std::span<const int> ranks, int k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (ranks.empty()) throw DataError("ndcg_at_k: no ranks");
  double total = 0.0;
  for (int r : ranks) {
    if (r <= k) total += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  }
  return total / static_cast<double>(ranks.size());
}

MetricCell metric_cell(std::span<const int> ranks) {
  MetricCell c;
  c.users = ranks.size();
  if (ranks.empty()) return c;
  c.hr5 = hr_at_k(ranks, 5);
  c.hr10 = hr_at_k(ranks, 10);
  c.ndcg5 = ndcg_at_k(ranks, 5);
  c.ndcg10 = ndcg_at_k(ranks, 10);
  return c;
}

std::vector<std::vector<int>> split_inputs(const InteractionDataset& ds, EvalSplit split, int max_len) {
  std::vector<std::vector<int>> out;
  out.reserve(ds.users.size());
  for (const auto& u : ds.users) {
    std::vector<int> seq = u.train;
    if (split == EvalSplit::test) seq.push_back(u.valid);
    out.push_back(truncate_recent(seq, max_len));
  }
  return out;
}

std::vector<RankResult> rank_users(const Model& model, const InteractionDataset& ds, const StrataLabels& strata,
                                   const EvalOptions& options) {
  if (ds.num_items() != model.num_items) {
    throw DataError("vocabulary mismatch: model has " + std::to_string(model.num_items) + " items, dataset has " +
                    std::to_string(ds.num_items()));
  }
  if (strata.item.size() != static_cast<std::size_t>(ds.num_items()) ||
      strata.user.size() != static_cast<std::size_t>(ds.num_users())) {
    throw DataError("strata were computed on a different dataset");
  }
  ag::NoGradGuard no_grad;
  const Tensor items = item_representations(model);
  const Mat& table = scoring_table(model, items).value();
  const auto inputs = split_inputs(ds, options.split, model.config.data.max_len);
  const Mat h = encode_summaries(model, items, inputs);

  std::vector<RankResult> results(inputs.size());
  constexpr Eigen::Index kChunk = 256;
  for (Eigen::Index start = 0; start < h.rows(); start += kChunk) {
    const Eigen::Index count = std::min(kChunk, h.rows() - start);
    const Mat scores = h.middleRows(start, count) * table.transpose();
    for (Eigen::Index r = 0; r < count; ++r) {
      const int u = static_cast<int>(start + r);
      const auto& split = ds.users[u];
      RankResult& res = results[u];
      res.user = u;
      res.target = options.split == EvalSplit::test ? split.test : split.valid;
      std::vector<int> history;
      if (options.mask_history) {
        history = split.train;
        if (options.split == EvalSplit::test) history.push_back(split.valid);
        std::sort(history.begin(), history.end());
        history.erase(std::unique(history.begin(), history.end()), history.end());
      }
      res.rank = rank_of_target(scores.row(r), res.target, history);
      res.item_stratum = strata.item[res.target];
      res.user_stratum = strata.user[u];
    }
  }
  return results;
}

EvalReport summarize(const std::vector<RankResult>& ranks, EvalSplit split) {
  std::vector<int> all, tail, head, cold, hot;
  for (const auto& r : ranks) {
    all.push_back(r.rank);
    (r.item_stratum == ItemStratum::tail ? tail : head).push_back(r.rank);
    (r.user_stratum == UserStratum::cold ? cold : hot).push_back(r.rank);
  }
  EvalReport report;
  report.split = split == EvalSplit::test ? "test" : "valid";
  report.overall = metric_cell(all);
  report.tail = metric_cell(tail);
  report.head = metric_cell(head);
  report.cold = metric_cell(cold);
  report.hot = metric_cell(hot);
  return report;
}

std::optional<double> encoding_silhouette(const Mat& encodings, const IntentPrototypes& prototypes, int max_points,
                                          std::uint64_t seed, std::size_t* used) {
  if (used) *used = 0;
  if (!prototypes.fitted() || encodings.rows() < 3) return std::nullopt;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(encodings.rows()));
  std::iota(order.begin(), order.end(), 0);
  if (static_cast<Eigen::Index>(order.size()) > max_points) {
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(static_cast<std::size_t>(max_points));
    std::sort(order.begin(), order.end());
  }
  Mat sample(static_cast<Eigen::Index>(order.size()), encodings.cols());
  for (std::size_t i = 0; i < order.size(); ++i) sample.row(static_cast<Eigen::Index>(i)) = encodings.row(order[i]);
  const std::vector<int> labels = assign_intents(sample, prototypes);
  if (std::adjacent_find(labels.begin(), labels.end(), std::not_equal_to<>()) == labels.end()) return std::nullopt;
  if (used) *used = order.size();
  return silhouette_score(sample, labels);
}

EvalReport evaluate(const Model& model, const InteractionDataset& ds, const StrataLabels& strata,
                    const EvalOptions& options) {
  EvalReport report = summarize(rank_users(model, ds, strata, options), options.split);
  if (options.silhouette && model.prototypes.fitted()) {
    ag::NoGradGuard no_grad;
    const Mat enc = encode_summaries(model, item_representations(model),
                                     split_inputs(ds, options.split, model.config.data.max_len));
    report.silhouette = encoding_silhouette(enc, model.prototypes, options.silhouette_max_points,
                                            options.sample_seed, &report.silhouette_points);
  }
  return report;
}

namespace {

nlohmann::ordered_json cell_json(const MetricCell& c) {
  if (c.users == 0) return nullptr;
  return {{"users", c.users}, {"hr@5", c.hr5}, {"hr@10", c.hr10}, {"ndcg@5", c.ndcg5}, {"ndcg@10", c.ndcg10}};
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["split"] = r.split;
  j["ranking"] = "full";
  j["overall"] = cell_json(r.overall);
  j["tail_item"] = cell_json(r.tail);
  j["head_item"] = cell_json(r.head);
  j["cold_user"] = cell_json(r.cold);
  j["hot_user"] = cell_json(r.hot);
  j["silhouette"] = r.silhouette ? nlohmann::ordered_json(*r.silhouette) : nlohmann::ordered_json(nullptr);
  j["silhouette_points"] = r.silhouette_points;
  return j.dump(2) + "\n";
}

std::string report_to_text(const EvalReport& r) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %7s %8s %8s %8s %8s\n", "subset", "users", "HR@5", "HR@10", "NDCG@5",
                "NDCG@10");
  out << line;
  const std::pair<const char*, const MetricCell*> rows[] = {
      {"Overall", &r.overall}, {"Tail Item", &r.tail}, {"Head Item", &r.head},
      {"Cold User", &r.cold},  {"Hot User", &r.hot}};
  for (const auto& [name, c] : rows) {
    if (c->users == 0) {
      std::snprintf(line, sizeof(line), "%-10s %7zu %8s %8s %8s %8s\n", name, c->users, "-", "-", "-", "-");
    } else {
      std::snprintf(line, sizeof(line), "%-10s %7zu %8s %8s %8s %8s\n", name, c->users, fixed(c->hr5).c_str(),
                    fixed(c->hr10).c_str(), fixed(c->ndcg5).c_str(), fixed(c->ndcg10).c_str());
    }
    out << line;
  }
  out << "silhouette " << (r.silhouette ? fixed(*r.silhouette) : std::string("-")) << "\n";
  return out.str();
}

Projection export_projection(const Mat& encodings, std::vector<int> labels) {
  const Eigen::Index n = encodings.rows();
  if (n < 3) throw DataError("projection needs at least 3 points");
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != n) {
    throw ShapeError("projection: label count mismatch");
  }
  const Eigen::RowVectorXd mean = encodings.colwise().mean();
  const Mat centered = encodings.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::Index d = cov.rows();
  if (solver.eigenvalues()(d - 1) <= 1e-12) throw DataError("projection: degenerate covariance (identical points)");

  Eigen::MatrixXd axes = Eigen::MatrixXd::Zero(d, 2);
  Projection p;
  p.explained_variance = Vec::Zero(2);
  for (int c = 0; c < 2 && c < d; ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    axes.col(c) = v;
    p.explained_variance[c] = std::max(0.0, solver.eigenvalues()(d - 1 - c));
  }
  p.coords = centered * axes;
  p.labels = labels.empty() ? std::vector<int>(static_cast<std::size_t>(n), -1) : std::move(labels);
  return p;
}

void write_projection_csv(const std::filesystem::path& path, const Projection& p) {
  std::ostringstream out;
  out << "x,y,cluster\n";
  char buf[96];
  for (Eigen::Index i = 0; i < p.coords.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", p.coords(i, 0), p.coords(i, 1), p.labels[i]);
    out << buf;
  }
  write_file(path, out.str());
}

}  // namespace recdiff

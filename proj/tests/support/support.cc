#include "support.h"

#include <atomic>
#include <chrono>
#include <cmath>
#include <unistd.h>

namespace testing {

GradReport check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> inputs, double h) {
  for (auto& t : inputs) t.zero_grad();
  Tensor l = loss();
  l.backward();
  std::vector<Mat> analytic;
  for (auto& t : inputs) analytic.push_back(t.grad());
  for (auto& t : inputs) t.zero_grad();

  GradReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Mat& v = inputs[k].mutable_value();
    Mat numeric(v.rows(), v.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      v.data()[i] = orig + h;
      const double up = loss().item();
      v.data()[i] = orig - h;
      const double down = loss().item();
      v.data()[i] = orig;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    const double scale = std::max(analytic[k].norm(), numeric.norm());
    const double err = scale == 0.0 ? 0.0 : (analytic[k] - numeric).norm() / scale;
    if (err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst = std::to_string(k);
    }
  }
  return report;
}

Mat random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double stddev) {
  std::normal_distribution<double> n(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

std::filesystem::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  auto dir = std::filesystem::temp_directory_path() /
             ("recdiff_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(stamp) + "_" +
              std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

recdiff::InteractionDataset make_dataset(int num_items, const std::vector<std::vector<int>>& full_sequences) {
  recdiff::InteractionDataset ds;
  for (int i = 0; i < num_items; ++i) ds.item_ids.push_back(std::to_string(i));
  for (std::size_t u = 0; u < full_sequences.size(); ++u) {
    const auto& s = full_sequences[u];
    ds.user_ids.push_back("u" + std::to_string(u));
    recdiff::UserSplit split;
    split.train.assign(s.begin(), s.end() - 2);
    split.valid = s[s.size() - 2];
    split.test = s.back();
    ds.users.push_back(split);
  }
  return ds;
}

SyntheticSetup synthetic_setup(const recdiff::SyntheticConfig& config) {
  SyntheticSetup out;
  out.raw = recdiff::generate_synthetic(config);
  out.ds = recdiff::build_dataset(out.raw.rows);
  const auto index = recdiff::build_index(out.raw.item_ids);
  Mat rows(out.ds.num_items(), out.raw.item_semantic.cols());
  for (int i = 0; i < out.ds.num_items(); ++i) rows.row(i) = out.raw.item_semantic.row(index.at(out.ds.item_ids[i]));
  out.semantic = recdiff::make_semantic_matrix(rows, "synthetic");
  return out;
}

recdiff::ExperimentConfig small_config() {
  recdiff::ExperimentConfig c;
  c.model.dim = 16;
  c.model.layers = 1;
  c.model.heads = 2;
  c.model.dropout = 0.1;
  c.intent.k = 4;
  c.intent.clustering_interval = 8;
  c.intent.max_fit_points = 500;
  c.diffusion.steps = 10;
  c.diffusion.hidden_width = 32;
  c.diffusion.time_embed_width = 8;
  c.train.batch_size = 64;
  c.train.epochs = 3;
  c.data.max_len = 20;
  return c;
}

}  // namespace testing

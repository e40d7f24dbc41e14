#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "recdiff/config.h"
#include "recdiff/dataio.h"
#include "recdiff/embeddings.h"
#include "recdiff/synthetic.h"
#include "recdiff/tensor.h"

namespace testing {

using recdiff::Mat;
using recdiff::Rng;
using recdiff::Tensor;

struct GradReport {
  double max_relative_error = 0.0;
  std::string worst;  // index of the worst tensor
};

/// Central differences against backprop for every entry of every tensor in
/// `inputs`. Per tensor the error is ||analytic - numeric|| / max(||analytic||, ||numeric||).
GradReport check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> inputs, double h = 1e-6);

Mat random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double stddev = 1.0);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

/// Dataset with the given training prefixes; valid/test items follow each
/// prefix. Items are named by index.
recdiff::InteractionDataset make_dataset(int num_items, const std::vector<std::vector<int>>& full_sequences);

struct SyntheticSetup {
  recdiff::SyntheticData raw;
  recdiff::InteractionDataset ds;
  recdiff::SemanticMatrix semantic;  // rows follow the dataset's item order
};

/// Generated log filtered and split like `prepare`, with its planted semantic vectors.
SyntheticSetup synthetic_setup(const recdiff::SyntheticConfig& config);

/// Small, fast model settings for tests.
recdiff::ExperimentConfig small_config();

}  // namespace testing

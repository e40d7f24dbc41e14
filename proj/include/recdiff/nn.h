#pragma once

#include <string>
#include <utility>
#include <vector>

#include "recdiff/tensor.h"

namespace recdiff {

enum class Activation { identity, relu, tanh, gelu, silu };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);
Tensor activate(const Tensor& x, Activation a);

/// y = x W + b with W stored as (in x out).
struct Linear {
  Tensor weight;
  Tensor bias;  // 1 x out; undefined when the layer has no bias

  Tensor forward(const Tensor& x) const;
  Eigen::Index in_features() const { return weight.rows(); }
  Eigen::Index out_features() const { return weight.cols(); }
};

/// Xavier-uniform weights, zero bias.
Linear make_linear(Eigen::Index in, Eigen::Index out, bool with_bias, Rng& rng);

struct LayerNorm {
  Tensor gain;  // 1 x d, starts at one
  Tensor bias;  // 1 x d, starts at zero

  Tensor forward(const Tensor& x) const;
};

LayerNorm make_layer_norm(Eigen::Index width);

Mat gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

/// Ordered, named collection of trainable tensors.
class ParameterSet {
 public:
  void add(std::string name, Tensor t);
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  Tensor* find(const std::string& name);
  const Tensor* find(const std::string& name) const;
  void zero_grad();
  std::size_t count() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// Applies one update to every parameter using its accumulated gradient.
  /// Parameters without a gradient are treated as having a zero gradient.
  void step(ParameterSet& params);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace recdiff

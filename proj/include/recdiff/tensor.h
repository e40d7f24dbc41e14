#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// float64 matrices. Every model component in this project is expressed in
// terms of the operations declared here.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace recdiff {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Rng = std::mt19937_64;

namespace ag {

struct Node {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
};

/// While alive, operations on this thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Handle to a node in the computation graph. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Mat value, bool requires_grad = false);

  static Tensor constant(Mat value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Mat value) { return Tensor(std::move(value), true); }
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Mat& value() const { return node_->value; }
  /// Direct write access, for optimizers and tests. Does not touch the graph.
  Mat& mutable_value() { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && node_->grad.size() > 0; }
  /// Accumulated gradient; a zero matrix of the value's shape when none.
  Mat grad() const;
  void zero_grad();

  /// Backpropagates from this 1x1 tensor into every reachable leaf.
  void backward() const;

  /// Same value, cut from the graph.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

  static Tensor from_node(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// Multiplies every entry of `a` by the 1x1 tensor `s`.
Tensor mul_scalar(const Tensor& a, const Tensor& s);
/// c0 + c1 * s for a 1x1 tensor `s`.
Tensor affine_scalar(const Tensor& s, double c0, double c1);
Tensor one_minus(const Tensor& a);
Tensor square(const Tensor& a);

// Broadcasting. `row` is 1 x cols(a); `col` is rows(a) x 1.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor mul_row(const Tensor& a, const Tensor& row);
Tensor mul_col(const Tensor& a, const Tensor& col);

// Nonlinearities.
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor silu(const Tensor& a);

// Structure.
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);
/// Row gather. Entries equal to `pad_index` (when >= 0) produce zero rows
/// and receive no gradient.
Tensor gather_rows(const Tensor& a, std::span<const int> index, int pad_index = -1);

// Reductions; all return 1x1.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Per-row dot product, rows(a) x 1.
Tensor row_dot(const Tensor& a, const Tensor& b);

// Normalization.
/// Per-row standardization without affine terms.
Tensor standardize_rows(const Tensor& a, double eps = 1e-5);
/// Divides each row by max(||row||, eps).
Tensor l2_normalize_rows(const Tensor& a, double eps = 1e-12);

/// Mean over rows of -log softmax(logits_row)[target]. 1x1.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

/// Inverted dropout. Identity when p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng);

/// Multi-head causal scaled dot-product attention over a ragged batch.
/// q, k, v are (total_tokens x d); sequence b occupies rows
/// [offsets[b], offsets[b+1]). Position i attends to positions <= i of
/// its own sequence only.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        std::span<const int> offsets, int heads);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace ag

using ag::Tensor;

}  // namespace recdiff

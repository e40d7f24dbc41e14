#include "recdiff/tensor.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "recdiff/errors.h"

namespace recdiff::ag {

namespace {

using NodePtr = std::shared_ptr<Node>;

thread_local bool g_grad_enabled = true;

void accumulate(Node& n, const Mat& g) {
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

template <typename Fn>
Tensor make_result(Mat value, std::vector<NodePtr> inputs, Fn&& backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& p) {
                          return p->requires_grad;
                        });
  if (node->requires_grad) {
    node->inputs = std::move(inputs);
    node->backward = std::forward<Fn>(backward);
  }
  return Tensor::from_node(std::move(node));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

void require_scalar(const Tensor& s, const char* op) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError(std::string(op) + ": expected 1x1 tensor");
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor::Tensor(Mat value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Tensor Tensor::from_node(std::shared_ptr<Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item() requires a 1x1 tensor");
  return node_->value(0, 0);
}

Mat Tensor::grad() const {
  if (has_grad()) return node_->grad;
  return Mat::Zero(rows(), cols());
}

void Tensor::zero_grad() {
  if (node_) node_->grad.resize(0, 0);
}

Tensor Tensor::detach() const { return constant(node_->value); }

void Tensor::backward() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("backward() requires a 1x1 root");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS yields a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  accumulate(*node_, Mat::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() > 0) n->backward(*n);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  }
  return make_result(a.value() * b.value(), {a.shared(), b.shared()}, [](Node& n) {
    Node& x = *n.inputs[0];
    Node& y = *n.inputs[1];
    if (x.requires_grad) accumulate(x, n.grad * y.value.transpose());
    if (y.requires_grad) accumulate(y, x.value.transpose() * n.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: widths differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.cols()) + ")");
  }
  return make_result(a.value() * b.value().transpose(), {a.shared(), b.shared()}, [](Node& n) {
    Node& x = *n.inputs[0];
    Node& y = *n.inputs[1];
    if (x.requires_grad) accumulate(x, n.grad * y.value);
    if (y.requires_grad) accumulate(y, n.grad.transpose() * x.value);
  });
}

Tensor transpose(const Tensor& a) {
  return make_result(a.value().transpose(), {a.shared()},
                     [](Node& n) { accumulate(*n.inputs[0], n.grad.transpose()); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make_result(a.value() + b.value(), {a.shared(), b.shared()}, [](Node& n) {
    accumulate(*n.inputs[0], n.grad);
    accumulate(*n.inputs[1], n.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make_result(a.value() - b.value(), {a.shared(), b.shared()}, [](Node& n) {
    accumulate(*n.inputs[0], n.grad);
    if (n.inputs[1]->requires_grad) accumulate(*n.inputs[1], -n.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return make_result(a.value().cwiseProduct(b.value()), {a.shared(), b.shared()}, [](Node& n) {
    Node& x = *n.inputs[0];
    Node& y = *n.inputs[1];
    if (x.requires_grad) accumulate(x, n.grad.cwiseProduct(y.value));
    if (y.requires_grad) accumulate(y, n.grad.cwiseProduct(x.value));
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_result(a.value() * s, {a.shared()},
                     [s](Node& n) { accumulate(*n.inputs[0], n.grad * s); });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  require_scalar(s, "mul_scalar");
  const double sv = s.item();
  return make_result(a.value() * sv, {a.shared(), s.shared()}, [sv](Node& n) {
    Node& x = *n.inputs[0];
    Node& c = *n.inputs[1];
    if (x.requires_grad) accumulate(x, n.grad * sv);
    if (c.requires_grad) {
      Mat g(1, 1);
      g(0, 0) = n.grad.cwiseProduct(x.value).sum();
      accumulate(c, g);
    }
  });
}

Tensor affine_scalar(const Tensor& s, double c0, double c1) {
  require_scalar(s, "affine_scalar");
  Mat v(1, 1);
  v(0, 0) = c0 + c1 * s.item();
  return make_result(std::move(v), {s.shared()},
                     [c1](Node& n) { accumulate(*n.inputs[0], n.grad * c1); });
}

Tensor one_minus(const Tensor& a) {
  Mat v = (1.0 - a.value().array()).matrix();
  return make_result(std::move(v), {a.shared()},
                     [](Node& n) { accumulate(*n.inputs[0], -n.grad); });
}

Tensor square(const Tensor& a) {
  return make_result(a.value().array().square().matrix(), {a.shared()}, [](Node& n) {
    Node& x = *n.inputs[0];
    accumulate(x, (2.0 * n.grad.array() * x.value.array()).matrix());
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: row width mismatch");
  Mat v = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(v), {a.shared(), row.shared()}, [](Node& n) {
    accumulate(*n.inputs[0], n.grad);
    if (n.inputs[1]->requires_grad) accumulate(*n.inputs[1], n.grad.colwise().sum());
  });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("mul_row: row width mismatch");
  Mat v = a.value().array().rowwise() * row.value().row(0).array();
  return make_result(std::move(v), {a.shared(), row.shared()}, [](Node& n) {
    Node& x = *n.inputs[0];
    Node& r = *n.inputs[1];
    if (x.requires_grad) {
      accumulate(x, (n.grad.array().rowwise() * r.value.row(0).array()).matrix());
    }
    if (r.requires_grad) accumulate(r, n.grad.cwiseProduct(x.value).colwise().sum());
  });
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw ShapeError("mul_col: column height mismatch");
  Mat v = a.value().array().colwise() * col.value().col(0).array();
  return make_result(std::move(v), {a.shared(), col.shared()}, [](Node& n) {
    Node& x = *n.inputs[0];
    Node& c = *n.inputs[1];
    if (x.requires_grad) {
      accumulate(x, (n.grad.array().colwise() * c.value.col(0).array()).matrix());
    }
    if (c.requires_grad) accumulate(c, n.grad.cwiseProduct(x.value).rowwise().sum());
  });
}

Tensor sigmoid(const Tensor& a) {
  Mat v = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return make_result(std::move(v), {a.shared()}, [](Node& n) {
    const auto& y = n.value.array();
    accumulate(*n.inputs[0], (n.grad.array() * y * (1.0 - y)).matrix());
  });
}

Tensor tanh(const Tensor& a) {
  Mat v = a.value().array().tanh().matrix();
  return make_result(std::move(v), {a.shared()}, [](Node& n) {
    const auto& y = n.value.array();
    accumulate(*n.inputs[0], (n.grad.array() * (1.0 - y.square())).matrix());
  });
}

Tensor relu(const Tensor& a) {
  Mat v = a.value().cwiseMax(0.0);
  return make_result(std::move(v), {a.shared()}, [](Node& n) {
    const Mat& x = n.inputs[0]->value;
    accumulate(*n.inputs[0], (x.array() > 0.0).select(n.grad, 0.0));
  });
}

Tensor gelu(const Tensor& a) {
  Mat v = a.value().unaryExpr(
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  return make_result(std::move(v), {a.shared()}, [](Node& n) {
    const Mat& x = n.inputs[0]->value;
    Mat d = x.unaryExpr([](double z) {
      return 0.5 * (1.0 + std::erf(z * kInvSqrt2)) + z * kInvSqrt2Pi * std::exp(-0.5 * z * z);
    });
    accumulate(*n.inputs[0], n.grad.cwiseProduct(d));
  });
}

Tensor silu(const Tensor& a) {
  Mat v = a.value().unaryExpr([](double x) { return x / (1.0 + std::exp(-x)); });
  return make_result(std::move(v), {a.shared()}, [](Node& n) {
    const Mat& x = n.inputs[0]->value;
    Mat d = x.unaryExpr([](double z) {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 + z * (1.0 - s));
    });
    accumulate(*n.inputs[0], n.grad.cwiseProduct(d));
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
  Mat v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const Eigen::Index ca = a.cols();
  const Eigen::Index cb = b.cols();
  return make_result(std::move(v), {a.shared(), b.shared()}, [ca, cb](Node& n) {
    if (n.inputs[0]->requires_grad) accumulate(*n.inputs[0], n.grad.leftCols(ca));
    if (n.inputs[1]->requires_grad) accumulate(*n.inputs[1], n.grad.rightCols(cb));
  });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ShapeError("concat_rows: widths differ");
  Mat v(a.rows() + b.rows(), a.cols());
  v << a.value(), b.value();
  const Eigen::Index ra = a.rows();
  const Eigen::Index rb = b.rows();
  return make_result(std::move(v), {a.shared(), b.shared()}, [ra, rb](Node& n) {
    if (n.inputs[0]->requires_grad) accumulate(*n.inputs[0], n.grad.topRows(ra));
    if (n.inputs[1]->requires_grad) accumulate(*n.inputs[1], n.grad.bottomRows(rb));
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  Mat v = a.value().middleCols(start, count);
  return make_result(std::move(v), {a.shared()}, [start, count](Node& n) {
    Node& x = *n.inputs[0];
    Mat g = Mat::Zero(x.value.rows(), x.value.cols());
    g.middleCols(start, count) = n.grad;
    accumulate(x, g);
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  Mat v = a.value().middleRows(start, count);
  return make_result(std::move(v), {a.shared()}, [start, count](Node& n) {
    Node& x = *n.inputs[0];
    Mat g = Mat::Zero(x.value.rows(), x.value.cols());
    g.middleRows(start, count) = n.grad;
    accumulate(x, g);
  });
}

Tensor gather_rows(const Tensor& a, std::span<const int> index, int pad_index) {
  const Eigen::Index rows = static_cast<Eigen::Index>(index.size());
  Mat v(rows, a.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int i = index[r];
    if (pad_index >= 0 && i == pad_index) {
      v.row(r).setZero();
    } else {
      if (i < 0 || i >= a.rows()) throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range");
      v.row(r) = a.value().row(i);
    }
  }
  std::vector<int> idx(index.begin(), index.end());
  return make_result(std::move(v), {a.shared()}, [idx = std::move(idx), pad_index](Node& n) {
    Node& x = *n.inputs[0];
    Mat g = Mat::Zero(x.value.rows(), x.value.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (pad_index >= 0 && idx[r] == pad_index) continue;
      g.row(idx[r]) += n.grad.row(static_cast<Eigen::Index>(r));
    }
    accumulate(x, g);
  });
}

Tensor sum(const Tensor& a) {
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  return make_result(std::move(v), {a.shared()}, [](Node& n) {
    Node& x = *n.inputs[0];
    accumulate(x, Mat::Constant(x.value.rows(), x.value.cols(), n.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  const double count = static_cast<double>(a.value().size());
  if (count == 0) throw ShapeError("mean: empty tensor");
  Mat v(1, 1);
  v(0, 0) = a.value().sum() / count;
  return make_result(std::move(v), {a.shared()}, [count](Node& n) {
    Node& x = *n.inputs[0];
    accumulate(x, Mat::Constant(x.value.rows(), x.value.cols(), n.grad(0, 0) / count));
  });
}

Tensor row_dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "row_dot");
  Mat v = a.value().cwiseProduct(b.value()).rowwise().sum();
  return make_result(std::move(v), {a.shared(), b.shared()}, [](Node& n) {
    Node& x = *n.inputs[0];
    Node& y = *n.inputs[1];
    if (x.requires_grad) accumulate(x, (y.value.array().colwise() * n.grad.col(0).array()).matrix());
    if (y.requires_grad) accumulate(y, (x.value.array().colwise() * n.grad.col(0).array()).matrix());
  });
}

Tensor standardize_rows(const Tensor& a, double eps) {
  const Mat& x = a.value();
  const Eigen::Index cols = x.cols();
  Vec mu = x.rowwise().mean();
  Mat centered = x.colwise() - mu;
  Vec inv_std = (centered.array().square().rowwise().sum() / static_cast<double>(cols) + eps)
                    .rsqrt()
                    .matrix();
  Mat y = centered.array().colwise() * inv_std.array();
  return make_result(y, {a.shared()}, [inv_std, cols](Node& n) {
    const Mat& yv = n.value;
    const Mat& g = n.grad;
    Vec g_mean = g.rowwise().mean();
    Vec gy_mean = g.cwiseProduct(yv).rowwise().sum() / static_cast<double>(cols);
    Mat dx = g.colwise() - g_mean;
    dx -= (yv.array().colwise() * gy_mean.array()).matrix();
    dx = dx.array().colwise() * inv_std.array();
    accumulate(*n.inputs[0], dx);
  });
}

Tensor l2_normalize_rows(const Tensor& a, double eps) {
  const Mat& x = a.value();
  Vec norms = x.rowwise().norm();
  Vec denom = norms.cwiseMax(eps);
  Mat y = x.array().colwise() / denom.array();
  return make_result(y, {a.shared()}, [norms, denom, eps](Node& n) {
    const Mat& yv = n.value;
    const Mat& g = n.grad;
    Mat dx(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      if (norms(r) > eps) {
        const double proj = g.row(r).dot(yv.row(r));
        dx.row(r) = (g.row(r) - proj * yv.row(r)) / denom(r);
      } else {
        dx.row(r) = g.row(r) / denom(r);
      }
    }
    accumulate(*n.inputs[0], dx);
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  const Mat& z = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != z.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(z.rows()) + " rows");
  }
  if (z.rows() == 0) throw ShapeError("cross_entropy: empty batch");
  Mat probs(z.rows(), z.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int t = targets[r];
    if (t < 0 || t >= z.cols()) throw ShapeError("cross_entropy: target out of range");
    const double m = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - m).exp();
    const double norm = probs.row(r).sum();
    probs.row(r) /= norm;
    total += -(z(r, t) - m - std::log(norm));
  }
  const double batch = static_cast<double>(z.rows());
  Mat v(1, 1);
  v(0, 0) = total / batch;
  std::vector<int> tgt(targets.begin(), targets.end());
  return make_result(std::move(v), {logits.shared()},
                     [probs = std::move(probs), tgt = std::move(tgt), batch](Node& n) {
                       Mat g = probs;
                       for (std::size_t r = 0; r < tgt.size(); ++r) {
                         g(static_cast<Eigen::Index>(r), tgt[r]) -= 1.0;
                       }
                       g *= n.grad(0, 0) / batch;
                       accumulate(*n.inputs[0], g);
                     });
}

Tensor dropout(const Tensor& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw ShapeError("dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  Mat mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : 0.0;
  Mat v = a.value().cwiseProduct(mask);
  return make_result(std::move(v), {a.shared()}, [mask = std::move(mask)](Node& n) {
    accumulate(*n.inputs[0], n.grad.cwiseProduct(mask));
  });
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        std::span<const int> offsets, int heads) {
  require_same_shape(q, k, "causal_attention");
  require_same_shape(q, v, "causal_attention");
  const Eigen::Index d = q.cols();
  if (heads <= 0 || d % heads != 0) throw ShapeError("causal_attention: width not divisible by heads");
  if (offsets.empty() || offsets.back() != q.rows()) throw ShapeError("causal_attention: bad offsets");
  const Eigen::Index dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Mat& Q = q.value();
  const Mat& K = k.value();
  const Mat& V = v.value();
  Mat out = Mat::Zero(Q.rows(), d);
  // probabilities[b * heads + h] is the (len x len) lower-triangular matrix.
  std::vector<Mat> probabilities((offsets.size() - 1) * heads);
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    const Eigen::Index start = offsets[b];
    const Eigen::Index len = offsets[b + 1] - offsets[b];
    for (int h = 0; h < heads; ++h) {
      auto qb = Q.block(start, h * dh, len, dh);
      auto kb = K.block(start, h * dh, len, dh);
      auto vb = V.block(start, h * dh, len, dh);
      Mat p = Mat::Zero(len, len);
      for (Eigen::Index i = 0; i < len; ++i) {
        auto s = (kb.topRows(i + 1) * qb.row(i).transpose() * inv_scale).eval();
        const double m = s.maxCoeff();
        auto e = (s.array() - m).exp().eval();
        p.row(i).head(i + 1) = (e / e.sum()).transpose();
      }
      out.block(start, h * dh, len, dh) = p * vb;
      probabilities[b * heads + h] = std::move(p);
    }
  }
  std::vector<int> offs(offsets.begin(), offsets.end());
  return make_result(
      std::move(out), {q.shared(), k.shared(), v.shared()},
      [probabilities = std::move(probabilities), offs = std::move(offs), heads, dh,
       inv_scale](Node& n) {
        Node& qn = *n.inputs[0];
        Node& kn = *n.inputs[1];
        Node& vn = *n.inputs[2];
        Mat dq = Mat::Zero(qn.value.rows(), qn.value.cols());
        Mat dk = Mat::Zero(dq.rows(), dq.cols());
        Mat dv = Mat::Zero(dq.rows(), dq.cols());
        for (std::size_t b = 0; b + 1 < offs.size(); ++b) {
          const Eigen::Index start = offs[b];
          const Eigen::Index len = offs[b + 1] - offs[b];
          for (int h = 0; h < heads; ++h) {
            const Mat& p = probabilities[b * heads + h];
            auto go = n.grad.block(start, h * dh, len, dh);
            auto qb = qn.value.block(start, h * dh, len, dh);
            auto kb = kn.value.block(start, h * dh, len, dh);
            auto vb = vn.value.block(start, h * dh, len, dh);
            dv.block(start, h * dh, len, dh) += p.transpose() * go;
            Mat dp = go * vb.transpose();
            Vec row_term = dp.cwiseProduct(p).rowwise().sum();
            Mat ds = p.cwiseProduct(dp.colwise() - row_term) * inv_scale;
            dq.block(start, h * dh, len, dh) += ds * kb;
            dk.block(start, h * dh, len, dh) += ds.transpose() * qb;
          }
        }
        accumulate(qn, dq);
        accumulate(kn, dk);
        accumulate(vn, dv);
      });
}

}  // namespace recdiff::ag

#include "recdiff/nn.h"

#include <cmath>

#include "recdiff/errors.h"

namespace recdiff {

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "gelu") return Activation::gelu;
  if (name == "silu") return Activation::silu;
  throw ConfigError("unknown activation '" + name + "' (valid: identity, relu, tanh, gelu, silu)");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::gelu: return "gelu";
    case Activation::silu: return "silu";
  }
  return "identity";
}

Tensor activate(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return ag::relu(x);
    case Activation::tanh: return ag::tanh(x);
    case Activation::gelu: return ag::gelu(x);
    case Activation::silu: return ag::silu(x);
  }
  return x;
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.cols() != weight.rows()) {
    throw ShapeError("linear: input width " + std::to_string(x.cols()) + ", expected " +
                     std::to_string(weight.rows()));
  }
  Tensor y = ag::matmul(x, weight);
  return bias.defined() ? ag::add_row(y, bias) : y;
}

Linear make_linear(Eigen::Index in, Eigen::Index out, bool with_bias, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Mat w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  Linear layer;
  layer.weight = Tensor::parameter(std::move(w));
  if (with_bias) layer.bias = Tensor::parameter(Mat::Zero(1, out));
  return layer;
}

Tensor LayerNorm::forward(const Tensor& x) const {
  return ag::add_row(ag::mul_row(ag::standardize_rows(x), gain), bias);
}

LayerNorm make_layer_norm(Eigen::Index width) {
  return {Tensor::parameter(Mat::Ones(1, width)), Tensor::parameter(Mat::Zero(1, width))};
}

Mat gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void ParameterSet::add(std::string name, Tensor t) {
  if (!t.defined()) return;
  if (find(name)) throw StateError("duplicate parameter name: " + name);
  items_.emplace_back(std::move(name), std::move(t));
}

Tensor* ParameterSet::find(const std::string& name) {
  for (auto& [n, t] : items_) {
    if (n == name) return &t;
  }
  return nullptr;
}

const Tensor* ParameterSet::find(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return &t;
  }
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& [n, t] : items_) t.zero_grad();
}

std::size_t ParameterSet::count() const {
  std::size_t total = 0;
  for (const auto& [n, t] : items_) total += static_cast<std::size_t>(t.value().size());
  return total;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParameterSet& params) {
  auto& items = params.items();
  if (m_.empty()) {
    for (const auto& [name, t] : items) {
      m_.push_back(Mat::Zero(t.rows(), t.cols()));
      v_.push_back(Mat::Zero(t.rows(), t.cols()));
    }
  }
  if (m_.size() != items.size()) throw StateError("Adam: parameter set changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < items.size(); ++i) {
    Tensor& p = items[i].second;
    if (!p.has_grad()) {
      m_[i] *= beta1_;
      v_[i] *= beta2_;
    } else {
      const Mat& g = p.node()->grad;
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    }
    Mat& value = p.mutable_value();
    value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

}  // namespace recdiff

#include "recdiff/diffusion.h"

#include <cmath>

#include "recdiff/errors.h"

namespace recdiff {

NoiseSchedule make_schedule_from_betas(const std::vector<double>& betas) {
  if (betas.empty()) throw ConfigError("diffusion.steps must be >= 1");
  NoiseSchedule s;
  s.steps = static_cast<int>(betas.size());
  s.betas.push_back(0.0);
  s.alphas.push_back(1.0);
  s.alpha_bars.push_back(1.0);
  double prev = 0.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("diffusion betas must lie in (0, 1)");
    if (b < prev) throw ConfigError("diffusion betas must be non-decreasing");
    prev = b;
    s.betas.push_back(b);
    s.alphas.push_back(1.0 - b);
    s.alpha_bars.push_back(s.alpha_bars.back() * (1.0 - b));
  }
  return s;
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("diffusion.steps must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("diffusion betas need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    betas[i] = beta_start + frac * (beta_end - beta_start);
  }
  return make_schedule_from_betas(betas);
}

namespace {

void check_step(int t, const NoiseSchedule& schedule) {
  if (t < 0 || t > schedule.steps) {
    throw ShapeError("diffusion step " + std::to_string(t) + " outside [0, " + std::to_string(schedule.steps) + "]");
  }
}

}  // namespace

Vec q_sample(const Vec& x0, int t, const Vec& eps, const NoiseSchedule& schedule) {
  check_step(t, schedule);
  if (x0.size() != eps.size()) throw ShapeError("q_sample: x0 and eps widths differ");
  const double ab = schedule.alpha_bars[t];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Mat q_sample(const Mat& x0, std::span<const int> t, const Mat& eps, const NoiseSchedule& schedule) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw ShapeError("q_sample: x0 and eps shapes differ");
  if (static_cast<Eigen::Index>(t.size()) != x0.rows()) throw ShapeError("q_sample: one step per row required");
  Mat out(x0.rows(), x0.cols());
  for (Eigen::Index r = 0; r < x0.rows(); ++r) {
    check_step(t[r], schedule);
    const double ab = schedule.alpha_bars[t[r]];
    out.row(r) = std::sqrt(ab) * x0.row(r) + std::sqrt(1.0 - ab) * eps.row(r);
  }
  return out;
}

Mat timestep_embedding(std::span<const int> t, int width) {
  Mat out = Mat::Zero(static_cast<Eigen::Index>(t.size()), width);
  const int half = width / 2;
  for (std::size_t r = 0; r < t.size(); ++r) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / std::max(half, 1));
      out(static_cast<Eigen::Index>(r), i) = std::sin(t[r] * freq);
      out(static_cast<Eigen::Index>(r), half + i) = std::cos(t[r] * freq);
    }
  }
  return out;
}

void DenoiserParams::collect(const std::string& prefix, ParameterSet& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.add(prefix + ".layer" + std::to_string(i) + ".weight", layers[i].weight);
    out.add(prefix + ".layer" + std::to_string(i) + ".bias", layers[i].bias);
  }
}

DenoiserParams make_denoiser(const DenoiserConfig& config, Rng& rng) {
  if (config.dim < 1 || config.hidden < 1 || config.time_width < 0) throw ConfigError("invalid denoiser widths");
  DenoiserParams p;
  p.config = config;
  const int in = 2 * config.dim + config.time_width;
  p.layers.push_back(make_linear(in, config.hidden, true, rng));
  p.layers.push_back(make_linear(config.hidden, config.hidden, true, rng));
  p.layers.push_back(make_linear(config.hidden, config.dim, true, rng));
  return p;
}

Tensor predict_noise(const Tensor& x_t, const Tensor& s, std::span<const int> t, const DenoiserParams& params) {
  const int d = params.config.dim;
  if (x_t.cols() != d || s.cols() != d || x_t.rows() != s.rows()) {
    throw ShapeError("predict_noise: expected x_t and s of width " + std::to_string(d) + " with equal rows");
  }
  if (static_cast<Eigen::Index>(t.size()) != x_t.rows()) throw ShapeError("predict_noise: one step per row required");
  Tensor x = ag::concat_cols(x_t, s);
  if (params.config.time_width > 0) {
    x = ag::concat_cols(x, Tensor::constant(timestep_embedding(t, params.config.time_width)));
  }
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    x = params.layers[i].forward(x);
    if (i + 1 < params.layers.size()) x = activate(x, params.activation);
  }
  return x;
}

NoisePredictor as_predictor(const DenoiserParams& params) {
  return [&params](const Tensor& x_t, const Tensor& s, std::span<const int> t) {
    return predict_noise(x_t, s, t, params);
  };
}

NoiseDraw draw_noise(Eigen::Index batch, Eigen::Index dim, int steps, Rng& rng) {
  NoiseDraw draw;
  std::uniform_int_distribution<int> step(1, steps);
  draw.t.resize(static_cast<std::size_t>(batch));
  for (auto& t : draw.t) t = step(rng);
  draw.eps = gaussian_matrix(batch, dim, 1.0, rng);
  return draw;
}

Tensor diffusion_loss(const Tensor& x0, const Tensor& s, const NoisePredictor& predictor,
                      const NoiseSchedule& schedule, const NoiseDraw& draw) {
  if (x0.rows() == 0) throw ShapeError("diffusion_loss: empty batch");
  Tensor x_t = Tensor::constant(q_sample(x0.detach().value(), draw.t, draw.eps, schedule));
  Tensor eps_hat = predictor(x_t, s, draw.t);
  return ag::mean(ag::square(ag::sub(eps_hat, Tensor::constant(draw.eps))));
}

Tensor diffusion_loss(const Tensor& x0, const Tensor& s, const NoisePredictor& predictor,
                      const NoiseSchedule& schedule, Rng& rng) {
  if (x0.rows() == 0) throw ShapeError("diffusion_loss: empty batch");
  return diffusion_loss(x0, s, predictor, schedule, draw_noise(x0.rows(), x0.cols(), schedule.steps, rng));
}

Mat sample_augmentations(const Mat& x_T, const Mat& s, const NoisePredictor& predictor,
                         const NoiseSchedule& schedule, Rng& rng) {
  if (x_T.rows() != s.rows() || x_T.cols() != s.cols()) throw ShapeError("sample_augmentations: shape mismatch");
  ag::NoGradGuard no_grad;
  Mat x = x_T;
  Tensor cond = Tensor::constant(s);
  std::vector<int> steps(static_cast<std::size_t>(x.rows()));
  for (int t = schedule.steps; t >= 1; --t) {
    std::fill(steps.begin(), steps.end(), t);
    const Mat eps_hat = predictor(Tensor::constant(x), cond, steps).value();
    const double beta = schedule.betas[t];
    const double coef = beta / std::sqrt(1.0 - schedule.alpha_bars[t]);
    x = (x - coef * eps_hat) / std::sqrt(schedule.alphas[t]);
    if (t > 1) x += std::sqrt(beta) * gaussian_matrix(x.rows(), x.cols(), 1.0, rng);
    if (!x.allFinite()) throw DivergenceError("diffusion sampling diverged at step " + std::to_string(t));
  }
  return x;
}

AugmentedView sample_augmentation(const Vec& x_T, const Vec& s, int prototype, int source,
                                  const NoisePredictor& predictor, const NoiseSchedule& schedule, Rng& rng) {
  Mat row = x_T.transpose();
  Mat cond = s.transpose();
  Mat out = sample_augmentations(row, cond, predictor, schedule, rng);
  return {out.row(0).transpose(), prototype, source};
}

}  // namespace recdiff

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "recdiff/nn.h"
#include "recdiff/tensor.h"

namespace recdiff {

/// Index t runs over 0..T; t = 0 is the clean endpoint (beta 0, alpha_bar 1).
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
};

/// Linear beta interpolation from beta_start to beta_end over T steps.
NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);
NoiseSchedule make_schedule_from_betas(const std::vector<double>& betas);

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, for 0 <= t <= T.
Vec q_sample(const Vec& x0, int t, const Vec& eps, const NoiseSchedule& schedule);
/// Row-wise q_sample with one step per row.
Mat q_sample(const Mat& x0, std::span<const int> t, const Mat& eps, const NoiseSchedule& schedule);

/// Sinusoidal embedding of integer steps, (len(t) x width).
Mat timestep_embedding(std::span<const int> t, int width);

struct DenoiserConfig {
  int dim = 64;
  int hidden = 128;
  int time_width = 16;
};

/// MLP over [x_t ; s ; time(t)] predicting the injected noise.
struct DenoiserParams {
  DenoiserConfig config;
  std::vector<Linear> layers;
  Activation activation = Activation::silu;

  void collect(const std::string& prefix, ParameterSet& out) const;
};

DenoiserParams make_denoiser(const DenoiserConfig& config, Rng& rng);

Tensor predict_noise(const Tensor& x_t, const Tensor& s, std::span<const int> t, const DenoiserParams& params);

/// Anything that maps (x_t, s, t) to a noise estimate.
using NoisePredictor = std::function<Tensor(const Tensor& x_t, const Tensor& s, std::span<const int> t)>;

NoisePredictor as_predictor(const DenoiserParams& params);

/// One draw of training noise: a step per row (uniform on 1..T), then the
/// Gaussian noise matrix in row-major order.
struct NoiseDraw {
  std::vector<int> t;
  Mat eps;
};

NoiseDraw draw_noise(Eigen::Index batch, Eigen::Index dim, int steps, Rng& rng);

/// Mean squared error between the drawn noise and its prediction, averaged
/// over rows and dimensions.
Tensor diffusion_loss(const Tensor& x0, const Tensor& s, const NoisePredictor& predictor,
                      const NoiseSchedule& schedule, const NoiseDraw& draw);
Tensor diffusion_loss(const Tensor& x0, const Tensor& s, const NoisePredictor& predictor,
                      const NoiseSchedule& schedule, Rng& rng);

struct AugmentedView {
  Vec x0;
  int prototype = -1;
  int source = -1;
};

/// Ancestral sampling from x_T down to x_0 with sigma_t^2 = beta_t and no
/// noise on the final step. Rows are independent chains. Throws
/// DivergenceError on non-finite intermediates.
Mat sample_augmentations(const Mat& x_T, const Mat& s, const NoisePredictor& predictor,
                         const NoiseSchedule& schedule, Rng& rng);

AugmentedView sample_augmentation(const Vec& x_T, const Vec& s, int prototype, int source,
                                  const NoisePredictor& predictor, const NoiseSchedule& schedule, Rng& rng);

}  // namespace recdiff

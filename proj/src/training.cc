#include "recdiff/training.h"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "recdiff/errors.h"

namespace recdiff {

std::vector<TrainingSample> training_samples(const InteractionDataset& ds) {
  std::vector<TrainingSample> out;
  for (int u = 0; u < ds.num_users(); ++u) {
    const int len = static_cast<int>(ds.users[u].train.size());
    for (int j = 1; j < len; ++j) out.push_back({u, j});
  }
  return out;
}

LossWeights loss_weights(const ExperimentConfig& c) {
  LossWeights w{c.loss.lambda_rec, c.loss.lambda_diff, c.loss.lambda_cl, c.loss.lambda_align};
  w.validate();
  return w;
}

std::string epoch_record_json(const EpochRecord& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["losses"] = {{"rec", r.losses.rec},
                 {"diff", opt(r.losses.diff)},
                 {"cl", opt(r.losses.cl)},
                 {"align", opt(r.losses.align)},
                 {"total", r.losses.total}};
  j["val_hr10"] = r.val_hr10;
  j["val_ndcg10"] = r.val_ndcg10;
  return j.dump();
}

Trainer::Trainer(Model& model, const InteractionDataset& ds, FitOptions options)
    : model_(model),
      ds_(ds),
      options_(std::move(options)),
      weights_(loss_weights(model.config)),
      strata_(compute_strata(ds, model.config.data.tail_fraction, model.config.data.cold_threshold)),
      samples_(training_samples(ds)),
      prefixes_(segment_prefixes(ds, model.config.intent.min_prefix)),
      params_(model.parameters()),
      adam_(model.config.train.lr),
      data_rng_(model.config.seeds.data),
      noise_rng_(model.config.seeds.noise),
      augment_rng_(model.config.seeds.augment),
      clustering_rng_(model.config.seeds.clustering),
      dropout_rng_(model.config.seeds.dropout) {
  if (ds.num_items() != model.num_items) {
    throw DataError("vocabulary mismatch: model has " + std::to_string(model.num_items) + " items, dataset has " +
                    std::to_string(ds.num_items()));
  }
  if (samples_.empty()) throw DataError("no training samples: every training prefix has a single item");
  aug_cache_.resize(samples_.size());
  aug_step_.assign(samples_.size(), -1);
}

void Trainer::refit_prototypes() {
  const auto& cfg = model_.config;
  std::vector<PrefixRef> chosen = prefixes_.prefixes;
  if (static_cast<int>(chosen.size()) > cfg.intent.max_fit_points) {
    std::shuffle(chosen.begin(), chosen.end(), clustering_rng_);
    chosen.resize(static_cast<std::size_t>(cfg.intent.max_fit_points));
  }
  if (static_cast<int>(chosen.size()) < cfg.intent.k) {
    throw DataError("intent clustering needs at least " + std::to_string(cfg.intent.k) + " prefixes, found " +
                    std::to_string(chosen.size()));
  }
  std::vector<std::vector<int>> seqs;
  seqs.reserve(chosen.size());
  for (const auto& p : chosen) seqs.push_back(prefix_items(ds_, p, cfg.data.max_len));
  ag::NoGradGuard no_grad;
  const Mat points = encode_summaries(model_, item_representations(model_), seqs);
  const std::uint64_t seed = clustering_rng_();
  KMeansResult km = kmeans_fit(points, cfg.intent.k, cfg.intent.kmeans_iters, seed);
  model_.prototypes = std::move(km.prototypes);
  model_.prototypes.fit_step = step_;
  refit_steps_.push_back(step_);
}

StepLosses Trainer::step(std::span<const int> batch) {
  const auto& cfg = model_.config;
  if (batch.size() < 2) throw ShapeError("training batch needs at least 2 samples");
  if (step_ % cfg.intent.clustering_interval == 0) refit_prototypes();

  std::vector<std::vector<int>> inputs;
  std::vector<int> targets;
  inputs.reserve(batch.size());
  for (int id : batch) {
    const TrainingSample& s = samples_.at(static_cast<std::size_t>(id));
    inputs.push_back(prefix_items(ds_, {s.user, s.length}, cfg.data.max_len));
    targets.push_back(ds_.users[s.user].train[s.length]);
  }

  const Tensor items = item_representations(model_);
  EncodeOptions enc_opts;
  enc_opts.training = true;
  enc_opts.dropout_rng = &dropout_rng_;
  const BatchEncoding enc = encode_batch(inputs, items, model_.encoder, enc_opts);
  const Tensor& h = enc.summary;

  LossComponents parts;
  parts.rec = rec_loss(h, targets, scoring_table(model_, items));

  const RemovedTerms& removed = options_.removed;
  const NoisePredictor predictor = as_predictor(model_.denoiser);
  if (!removed.diff || !removed.cl) {
    const Mat h0 = h.value();
    const std::vector<int> intent = assign_intents(h0, model_.prototypes);
    Mat cond(h0.rows(), h0.cols());
    for (Eigen::Index r = 0; r < h0.rows(); ++r) cond.row(r) = model_.prototypes.centroids.row(intent[r]);

    if (!removed.diff) {
      parts.diff = diffusion_loss(Tensor::constant(h0), Tensor::constant(cond), predictor, model_.schedule, noise_rng_);
    }
    if (!removed.cl) {
      std::vector<Eigen::Index> stale;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const long gen = aug_step_[batch[i]];
        if (gen < 0 || step_ - gen >= cfg.train.augment_interval) stale.push_back(static_cast<Eigen::Index>(i));
      }
      if (!stale.empty()) {
        const auto n = static_cast<Eigen::Index>(stale.size());
        Mat stale_cond(n, cond.cols());
        for (Eigen::Index r = 0; r < n; ++r) stale_cond.row(r) = cond.row(stale[r]);
        const Mat x_T = gaussian_matrix(n, cond.cols(), 1.0, augment_rng_);
        const Mat fresh = sample_augmentations(x_T, stale_cond, predictor, model_.schedule, augment_rng_);
        for (Eigen::Index r = 0; r < n; ++r) {
          const int id = batch[stale[r]];
          aug_cache_[id] = fresh.row(r).transpose();
          aug_step_[id] = step_;
        }
      }
      Mat aug(h0.rows(), h0.cols());
      for (std::size_t i = 0; i < batch.size(); ++i) aug.row(static_cast<Eigen::Index>(i)) = aug_cache_[batch[i]].transpose();
      parts.cl = infonce_loss(h, Tensor::constant(aug), cfg.loss.temperature);
    }
  }

  if (!removed.align) {
    std::vector<int> unique_items = targets;
    for (const auto& seq : inputs) unique_items.insert(unique_items.end(), seq.begin(), seq.end());
    std::sort(unique_items.begin(), unique_items.end());
    unique_items.erase(std::unique(unique_items.begin(), unique_items.end()), unique_items.end());
    const Tensor e_id = ag::gather_rows(model_.id_table.table, unique_items);
    const Tensor e_sem = ag::gather_rows(adapted_semantics(model_), unique_items);
    parts.align = align_loss(e_id, e_sem);
  }

  Tensor total;
  try {
    total = total_loss(parts, weights_);
  } catch (const DivergenceError& e) {
    throw DivergenceError("step " + std::to_string(step_) + ": " + e.what());
  }
  params_.zero_grad();
  total.backward();
  adam_.step(params_);
  params_.zero_grad();
  ++step_;

  StepLosses out;
  out.rec = parts.rec.item();
  if (parts.diff.defined()) out.diff = parts.diff.item();
  if (parts.cl.defined()) out.cl = parts.cl.item();
  if (parts.align.defined()) out.align = parts.align.item();
  out.total = total.item();
  return out;
}

std::pair<double, double> Trainer::validate() const {
  EvalOptions opts;
  opts.split = EvalSplit::valid;
  opts.mask_history = model_.config.eval.mask_history;
  opts.silhouette = false;
  const EvalReport r = summarize(rank_users(model_, ds_, strata_, opts), EvalSplit::valid);
  return {r.overall.hr10, r.overall.ndcg10};
}

EpochRecord Trainer::run_epoch() {
  std::vector<int> order(samples_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), data_rng_);
  const std::size_t bs = static_cast<std::size_t>(model_.config.train.batch_size);

  EpochRecord rec;
  rec.epoch = ++epoch_;
  double sum_rec = 0, sum_diff = 0, sum_cl = 0, sum_align = 0, sum_total = 0;
  bool has_diff = false, has_cl = false, has_align = false;
  int n = 0;
  for (std::size_t start = 0; start + 2 <= order.size() && !done(); start += bs) {
    const std::size_t end = std::min(order.size(), start + bs);
    if (end - start < 2) break;
    const StepLosses l = step(std::span<const int>(order.data() + start, end - start));
    sum_rec += l.rec;
    sum_total += l.total;
    if (l.diff) sum_diff += *l.diff, has_diff = true;
    if (l.cl) sum_cl += *l.cl, has_cl = true;
    if (l.align) sum_align += *l.align, has_align = true;
    ++n;
  }
  if (n > 0) {
    rec.losses.rec = sum_rec / n;
    rec.losses.total = sum_total / n;
    if (has_diff) rec.losses.diff = sum_diff / n;
    if (has_cl) rec.losses.cl = sum_cl / n;
    if (has_align) rec.losses.align = sum_align / n;
  }
  rec.step = step_;
  std::tie(rec.val_hr10, rec.val_ndcg10) = validate();
  if (options_.on_epoch) options_.on_epoch(rec);
  return rec;
}

FitResult fit(Model& model, const InteractionDataset& ds, const FitOptions& options) {
  Trainer trainer(model, ds, options);
  FitResult result;
  ModelSnapshot best;
  int since_best = 0;
  for (int e = 0; e < model.config.train.epochs && !trainer.done(); ++e) {
    EpochRecord rec = trainer.run_epoch();
    result.log.push_back(rec);
    if (rec.val_ndcg10 > result.best_val_ndcg10) {
      result.best_val_ndcg10 = rec.val_ndcg10;
      result.best_epoch = rec.epoch;
      best = snapshot(model);
      since_best = 0;
    } else if (++since_best >= model.config.train.patience) {
      result.stopped_early = true;
      break;
    }
  }
  if (!best.values.empty()) restore(model, best);
  result.refit_steps = trainer.refit_steps();
  result.steps = trainer.steps();
  return result;
}

}  // namespace recdiff

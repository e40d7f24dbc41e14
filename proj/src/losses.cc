#include "recdiff/losses.h"

#include <cmath>
#include <vector>

#include "recdiff/errors.h"

namespace recdiff {

Tensor rec_loss(const Tensor& h, std::span<const int> targets, const Tensor& item_table) {
  if (h.cols() != item_table.cols()) throw ShapeError("rec_loss: width mismatch");
  if (static_cast<Eigen::Index>(targets.size()) != h.rows()) throw ShapeError("rec_loss: one target per row required");
  for (int t : targets) {
    if (t < 0 || t >= item_table.rows()) {
      throw DataError("rec_loss: target " + std::to_string(t) + " is padding or out of range");
    }
  }
  return ag::cross_entropy(ag::matmul_nt(h, item_table), targets);
}

Tensor infonce_loss(const Tensor& h_orig, const Tensor& h_aug, double temperature) {
  if (h_orig.rows() != h_aug.rows() || h_orig.cols() != h_aug.cols()) {
    throw ShapeError("infonce_loss: view shapes differ");
  }
  if (h_orig.rows() < 2) throw ShapeError("infonce_loss: need a batch of at least 2 for negatives");
  if (!(temperature > 0.0)) throw ConfigError("loss.temperature must be > 0");
  const Tensor a = ag::l2_normalize_rows(h_orig);
  const Tensor b = ag::l2_normalize_rows(h_aug);
  const Tensor sim = ag::scale(ag::matmul_nt(a, b), 1.0 / temperature);
  std::vector<int> diag(static_cast<std::size_t>(h_orig.rows()));
  for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = static_cast<int>(i);
  const Tensor forward = ag::cross_entropy(sim, diag);
  const Tensor backward = ag::cross_entropy(ag::transpose(sim), diag);
  return ag::scale(ag::add(forward, backward), 0.5);
}

Tensor align_loss(const Tensor& e_id, const Tensor& e_sem) {
  if (e_id.rows() != e_sem.rows() || e_id.cols() != e_sem.cols()) throw ShapeError("align_loss: shape mismatch");
  if (e_id.rows() == 0) throw ShapeError("align_loss: empty batch");
  const Vec na = e_id.value().rowwise().norm();
  const Vec nb = e_sem.value().rowwise().norm();
  for (Eigen::Index i = 0; i < na.size(); ++i) {
    if (na[i] == 0.0 || nb[i] == 0.0) throw DataError("align_loss: zero vector in row " + std::to_string(i));
  }
  const Tensor cos = ag::row_dot(ag::l2_normalize_rows(e_id), ag::l2_normalize_rows(e_sem));
  return ag::one_minus(ag::mean(cos));
}

void LossWeights::validate() const {
  if (!(rec > 0.0)) throw ConfigError("loss.lambda_rec must be > 0");
  if (!(diff >= 0.0)) throw ConfigError("loss.lambda_diff must be >= 0");
  if (!(cl >= 0.0)) throw ConfigError("loss.lambda_cl must be >= 0");
  if (!(align >= 0.0)) throw ConfigError("loss.lambda_align must be >= 0");
}

Tensor total_loss(const LossComponents& c, const LossWeights& w) {
  const std::pair<const char*, std::pair<const Tensor*, double>> terms[] = {
      {"rec", {&c.rec, w.rec}}, {"diff", {&c.diff, w.diff}}, {"cl", {&c.cl, w.cl}}, {"align", {&c.align, w.align}}};
  Tensor total;
  for (const auto& [name, term] : terms) {
    const auto& [t, weight] = term;
    if (!t->defined()) continue;
    if (!std::isfinite(t->item())) throw DivergenceError(std::string("non-finite ") + name + " loss");
    const Tensor weighted = ag::scale(*t, weight);
    total = total.defined() ? ag::add(total, weighted) : weighted;
  }
  if (!total.defined()) throw StateError("total_loss: no loss components");
  return total;
}

}  // namespace recdiff

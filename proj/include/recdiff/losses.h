#pragma once

#include <span>
#include <string>

#include "recdiff/tensor.h"

namespace recdiff {

/// Cross-entropy of next-item scores over every row of `item_table`.
/// Targets must index real rows; anything else throws.
Tensor rec_loss(const Tensor& h, std::span<const int> targets, const Tensor& item_table);

/// Symmetric in-batch InfoNCE over cosine similarities scaled by 1/temperature.
Tensor infonce_loss(const Tensor& h_orig, const Tensor& h_aug, double temperature);

/// Mean of 1 - cos(e_id_i, e_sem_i).
Tensor align_loss(const Tensor& e_id, const Tensor& e_sem);

struct LossWeights {
  double rec = 1.0;
  double diff = 1.0;
  double cl = 0.1;
  double align = 0.1;

  /// Throws ConfigError unless rec > 0 and the others are >= 0.
  void validate() const;
};

/// Individual terms. An undefined tensor means the term is absent from the
/// objective altogether.
struct LossComponents {
  Tensor rec;
  Tensor diff;
  Tensor cl;
  Tensor align;
};

/// sum of weight * component over the defined components. Throws
/// DivergenceError naming the first non-finite component.
Tensor total_loss(const LossComponents& components, const LossWeights& weights);

}  // namespace recdiff

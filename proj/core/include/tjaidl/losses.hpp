#pragma once

#include <cstddef>
#include <span>

#include "tjaidl/tensor.hpp"

namespace tjaidl {

struct LossWeights {
  double lambda1 = 10.0;  // reconstruction
  double lambda2 = 10.0;  // identity transfer
};

/// How squared-error losses are normalised.
enum class MseReduction {
  kMean,            // over batch and dimensions
  kPerSampleSum,    // squared norm per sample, averaged over the batch
};

/// Softmax cross-entropy on probabilities: -(1/n) sum_i log p[i, y_i].
/// Labels are zero-based class indices.
Tensor loss_id(const Tensor& probs, std::span<const std::size_t> labels);

/// Sigmoid cross-entropy from logits, summed over attributes and averaged
/// over the batch. Targets may be soft but must lie in [0, 1].
Tensor loss_att(const Tensor& logits, const Tensor& targets);

/// Squared error between identity features and their reconstruction.
Tensor loss_rec(const Tensor& features, const Tensor& reconstruction,
                MseReduction reduction = MseReduction::kMean);

/// Squared error between the IIA embedding and attribute logits. Detach
/// whichever side must not receive gradient at the call site.
Tensor loss_id_transfer(const Tensor& embedding, const Tensor& att_logits,
                        MseReduction reduction = MseReduction::kMean);

/// Sigmoid cross-entropy with the IIA embedding read as attribute logits.
Tensor loss_att_iia(const Tensor& embedding, const Tensor& targets);

struct IiaLossTerms {
  Tensor att_iia;
  Tensor rec;
  Tensor transfer;
};

/// L_attr,IIA + lambda1 * L_rec + lambda2 * L_ID-transfer.
Tensor loss_iia_total(const IiaLossTerms& terms, const LossWeights& weights);

/// L_att + lambda2 * L_ID-transfer.
Tensor loss_att_total(const Tensor& att, const Tensor& transfer, const LossWeights& weights);

}  // namespace tjaidl

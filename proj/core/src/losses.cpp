#include "tjaidl/losses.hpp"

#include <string>

#include "tjaidl/error.hpp"

namespace tjaidl {

namespace {

void check_scalar_nonnegative(const char* name, const Tensor& t) {
  if (t.size() != 1) throw ContractViolation(std::string(name) + " must be a scalar");
  if (t.item() < 0.0) throw ContractViolation(std::string(name) + " is negative");
}

Tensor squared_error(const char* name, const Tensor& a, const Tensor& b, MseReduction reduction) {
  if (a.shape() != b.shape()) {
    throw InvalidShapeError(std::string(name) + ": shape mismatch " + shape_string(a.shape()) +
                            " vs " + shape_string(b.shape()));
  }
  Tensor sq = square(sub(a, b));
  if (reduction == MseReduction::kMean) return mean_all(sq);
  const double batch = static_cast<double>(a.ndim() == 2 ? a.rows() : 1);
  return scale(sum_all(sq), 1.0 / batch);
}

}  // namespace

Tensor loss_id(const Tensor& probs, std::span<const std::size_t> labels) {
  if (probs.ndim() != 2 || labels.size() != probs.rows()) {
    throw InvalidShapeError("loss_id: " + std::to_string(labels.size()) + " labels for probs " +
                            shape_string(probs.shape()));
  }
  for (auto y : labels) {
    if (y >= probs.cols()) {
      throw ContractViolation("loss_id: label " + std::to_string(y) + " out of range [0, " +
                              std::to_string(probs.cols()) + ")");
    }
  }
  Tensor picked = clamp(gather_rows(probs, labels), kProbEps, 1.0 - kProbEps);
  return scale(mean_all(log(picked)), -1.0);
}

Tensor loss_att(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape() || logits.ndim() != 2) {
    throw InvalidShapeError("loss_att: shape mismatch " + shape_string(logits.shape()) + " vs " +
                            shape_string(targets.shape()));
  }
  for (double a : targets.values()) {
    if (!(a >= 0.0 && a <= 1.0)) throw ContractViolation("loss_att: target outside [0, 1]");
  }
  const double batch = static_cast<double>(logits.rows());
  Tensor p = clamp(sigmoid(logits), kProbEps, 1.0 - kProbEps);
  Tensor one_minus_p = add_scalar(scale(p, -1.0), 1.0);
  Tensor one_minus_a = add_scalar(scale(targets, -1.0), 1.0);
  Tensor ll = add(mul(targets, log(p)), mul(one_minus_a, log(one_minus_p)));
  return scale(sum_all(ll), -1.0 / batch);
}

Tensor loss_rec(const Tensor& features, const Tensor& reconstruction, MseReduction reduction) {
  return squared_error("loss_rec", features, reconstruction, reduction);
}

Tensor loss_id_transfer(const Tensor& embedding, const Tensor& att_logits, MseReduction reduction) {
  return squared_error("loss_id_transfer", embedding, att_logits, reduction);
}

Tensor loss_att_iia(const Tensor& embedding, const Tensor& targets) {
  return loss_att(embedding, targets);
}

Tensor loss_iia_total(const IiaLossTerms& terms, const LossWeights& weights) {
  check_scalar_nonnegative("L_attr,IIA", terms.att_iia);
  check_scalar_nonnegative("L_rec", terms.rec);
  check_scalar_nonnegative("L_ID-transfer", terms.transfer);
  return add(add(terms.att_iia, scale(terms.rec, weights.lambda1)),
             scale(terms.transfer, weights.lambda2));
}

Tensor loss_att_total(const Tensor& att, const Tensor& transfer, const LossWeights& weights) {
  return add(att, scale(transfer, weights.lambda2));
}

}  // namespace tjaidl

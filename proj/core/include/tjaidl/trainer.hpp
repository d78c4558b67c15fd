#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tjaidl/adam.hpp"
#include "tjaidl/data.hpp"
#include "tjaidl/losses.hpp"
#include "tjaidl/model.hpp"

namespace tjaidl {

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t pretrain_iterations = 2000;
  std::size_t joint_iterations = 1000;
  std::size_t adapt_iterations = 500;
  LossWeights weights;
  AdamConfig adam;
  std::uint64_t seed = 0;
  Mode mode = Mode::kTjAidl;
  /// Soft labels taken once from the pre-adaptation model instead of per batch.
  bool frozen_soft_labels = false;
  MseReduction mse = MseReduction::kMean;
  std::vector<std::size_t> backbone_dims{128, 64};
  /// Hidden widths of the IIA encoder; the attribute count is appended.
  std::vector<std::size_t> iia_hidden_dims{64, 32};

  void validate() const;
  ModelConfig model_config(std::size_t input_dim, std::size_t num_identities,
                           std::size_t num_attributes) const;
};

enum class UpdateEvent { kIdentity, kIia, kAttribute, kSoftLabel, kShared };
const char* event_name(UpdateEvent e);

/// Saved optimizer moments of one parameter group.
struct AdamSnapshot {
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// Everything needed to resume training or to evaluate.
struct Checkpoint {
  Mode mode = Mode::kTjAidl;
  ModelParams params;
  std::map<std::string, AdamSnapshot> optimizers;  // keyed by group name
};

struct LossTrace {
  std::string name;
  std::vector<double> values;
};

struct TrainReport {
  std::vector<LossTrace> traces;
  Checkpoint checkpoint;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;

  const LossTrace* trace(const std::string& name) const;
};

struct JointLosses {
  double id = 0;
  double att_iia = 0, rec = 0, transfer_iia = 0, iia_total = 0;
  double att = 0, transfer_att = 0, att_total = 0;
};

struct AdaptLosses {
  double att_iia = 0, rec = 0, transfer_iia = 0, iia_total = 0;
  double att = 0, transfer_att = 0, att_total = 0;
};

/// Owns one training run: parameters, one Adam state per parameter group,
/// loss traces and the ordered log of updates.
class Trainer {
 public:
  Trainer(TrainConfig config, const ModelConfig& model_config);
  /// Resumes from a checkpoint; optimizer moments carry over.
  Trainer(TrainConfig config, Checkpoint checkpoint);

  const TrainConfig& config() const noexcept { return config_; }
  const ModelParams& params() const noexcept { return params_; }
  ModelParams& params() noexcept { return params_; }
  const std::vector<UpdateEvent>& events() const noexcept { return events_; }
  const std::vector<LossTrace>& traces() const noexcept { return traces_; }

  // One update each. The batch must match the stage's contract.
  double identity_step(const Batch& batch);
  double attribute_step(const Batch& batch);
  double shared_step(const Batch& batch);
  JointLosses joint_train_step(const Batch& batch);
  /// soft_labels, when given, replace the per-batch evaluation (frozen mode).
  AdaptLosses adapt_step(const Batch& batch, const Tensor* soft_labels = nullptr);

  // Whole stages, each with its own deterministic sampler stream.
  void pretrain_identity(const Dataset& source);
  void joint_train(const Dataset& source);
  /// Step II. Rejects datasets that still carry labels.
  void adapt(const Dataset& target);
  /// Baseline modes: identity pretraining (where the mode has an identity
  /// network), then the mode's joint objective for joint_iterations.
  void train_baseline(const Dataset& source);

  Checkpoint checkpoint() const;

 private:
  void record(const std::string& name, double value);
  void require_clean(const std::vector<Tensor>& group, const char* group_name, const char* step) const;

  TrainConfig config_;
  ModelParams params_;
  std::map<std::string, Adam> optimizers_;
  std::vector<UpdateEvent> events_;
  std::vector<LossTrace> traces_;
  std::map<std::string, std::size_t> trace_index_;
};

/// Runs the mode's full schedule: pretraining, joint learning and, for
/// tj-aidl, unsupervised adaptation on the label-stripped target.
TrainReport run(const TrainConfig& config, const Dataset& source, const Dataset& target);

/// "iter,loss_name,value" lines, one per recorded loss value.
std::string format_metrics_log(const std::vector<LossTrace>& traces);

}  // namespace tjaidl

#include "tjaidl/trainer.hpp"

#include <chrono>
#include <cstdio>

#include "tjaidl/error.hpp"
#include "tjaidl/eval.hpp"

namespace tjaidl {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size", "must be positive");
  if (weights.lambda1 < 0.0) throw ConfigError("train.lambda1", "must be non-negative");
  if (weights.lambda2 < 0.0) throw ConfigError("train.lambda2", "must be non-negative");
  adam.validate();
  if (backbone_dims.empty()) throw ConfigError("model.backbone_dims", "must be non-empty");
}

ModelConfig TrainConfig::model_config(std::size_t input_dim, std::size_t num_identities,
                                      std::size_t num_attributes) const {
  ModelConfig c;
  c.input_dim = input_dim;
  c.backbone_dims = backbone_dims;
  c.num_identities = num_identities;
  c.num_attributes = num_attributes;
  c.iia_encoder_dims = iia_hidden_dims;
  c.iia_encoder_dims.push_back(num_attributes);
  c.validate();
  return c;
}

const char* event_name(UpdateEvent e) {
  switch (e) {
    case UpdateEvent::kIdentity: return "id";
    case UpdateEvent::kIia: return "iia";
    case UpdateEvent::kAttribute: return "att";
    case UpdateEvent::kSoftLabel: return "soft-label";
    case UpdateEvent::kShared: return "shared";
  }
  return "?";
}

const LossTrace* TrainReport::trace(const std::string& name) const {
  for (const auto& t : traces)
    if (t.name == name) return &t;
  return nullptr;
}

namespace {

constexpr const char* kIdentityGroup = "identity";
constexpr const char* kAttributeGroup = "attribute";
constexpr const char* kIiaGroup = "iia";
constexpr const char* kSharedGroup = "shared";

std::vector<Tensor> shared_params(const ModelParams& p) {
  auto out = p.identity_params();
  out.push_back(p.attribute.head.weight);
  out.push_back(p.attribute.head.bias);
  return out;
}

std::vector<Tensor> attribute_backbone_params(const ModelParams& p) {
  std::vector<Tensor> out;
  for (const auto& l : p.attribute.backbone.layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

void require_labelled(const Batch& batch, const char* step) {
  if (!batch.labelled) throw ContractViolation(std::string(step) + " needs a labelled batch");
}

}  // namespace

Trainer::Trainer(TrainConfig config, const ModelConfig& model_config)
    : config_(std::move(config)),
      params_(ModelParams::initialize(model_config, derive_seed(config_.seed, "model"))) {
  config_.validate();
  for (const char* g : {kIdentityGroup, kAttributeGroup, kIiaGroup, kSharedGroup})
    optimizers_.emplace(g, Adam(config_.adam));
}

Trainer::Trainer(TrainConfig config, Checkpoint checkpoint)
    : config_(std::move(config)), params_(std::move(checkpoint.params)) {
  config_.validate();
  config_.mode = checkpoint.mode;
  for (const char* g : {kIdentityGroup, kAttributeGroup, kIiaGroup, kSharedGroup}) {
    Adam adam(config_.adam);
    if (auto it = checkpoint.optimizers.find(g); it != checkpoint.optimizers.end()) {
      adam.restore(it->second.step_count, it->second.m, it->second.v);
    }
    optimizers_.emplace(g, std::move(adam));
  }
}

void Trainer::record(const std::string& name, double value) {
  auto [it, inserted] = trace_index_.emplace(name, traces_.size());
  if (inserted) traces_.push_back({name, {}});
  traces_[it->second].values.push_back(value);
}

void Trainer::require_clean(const std::vector<Tensor>& group, const char* group_name,
                            const char* step) const {
  for (const auto& p : group) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) {
      if (g != 0.0) {
        throw ContractViolation(std::string(step) + ": gradient leaked into the " + group_name +
                                " parameter group");
      }
    }
  }
}

double Trainer::identity_step(const Batch& batch) {
  require_labelled(batch, "identity update");
  auto out = forward_identity(params_, batch.features);
  Tensor loss = loss_id(out.probs, batch.classes);
  backward(loss);
  require_clean(params_.attribute_params(), kAttributeGroup, "identity update");
  require_clean(params_.iia_params(), kIiaGroup, "identity update");
  auto group = params_.identity_params();
  optimizers_.at(kIdentityGroup).step(group);
  events_.push_back(UpdateEvent::kIdentity);
  return loss.item();
}

double Trainer::attribute_step(const Batch& batch) {
  require_labelled(batch, "attribute update");
  auto out = forward_attribute(params_, batch.features);
  Tensor loss = loss_att(out.logits, batch.attributes);
  backward(loss);
  require_clean(params_.identity_params(), kIdentityGroup, "attribute update");
  require_clean(params_.iia_params(), kIiaGroup, "attribute update");
  auto group = params_.attribute_params();
  optimizers_.at(kAttributeGroup).step(group);
  events_.push_back(UpdateEvent::kAttribute);
  return loss.item();
}

double Trainer::shared_step(const Batch& batch) {
  require_labelled(batch, "shared update");
  auto out = forward_shared(params_, batch.features);
  Tensor loss = add(loss_id(out.id_probs, batch.classes), loss_att(out.att_logits, batch.attributes));
  backward(loss);
  require_clean(attribute_backbone_params(params_), kAttributeGroup, "shared update");
  require_clean(params_.iia_params(), kIiaGroup, "shared update");
  auto group = shared_params(params_);
  optimizers_.at(kSharedGroup).step(group);
  events_.push_back(UpdateEvent::kShared);
  return loss.item();
}

JointLosses Trainer::joint_train_step(const Batch& batch) {
  require_labelled(batch, "joint step");
  JointLosses out;
  const auto& w = config_.weights;

  // Both branches are evaluated before any update.
  auto id = forward_identity(params_, batch.features);
  auto att = forward_attribute(params_, batch.features);
  const Tensor id_feature = detach(id.feature);
  const Tensor att_logits = detach(att.logits);

  // (i) identity branch, identity loss alone.
  {
    Tensor loss = loss_id(id.probs, batch.classes);
    backward(loss);
    require_clean(params_.attribute_params(), kAttributeGroup, "identity update");
    require_clean(params_.iia_params(), kIiaGroup, "identity update");
    auto group = params_.identity_params();
    optimizers_.at(kIdentityGroup).step(group);
    events_.push_back(UpdateEvent::kIdentity);
    out.id = loss.item();
  }

  // (ii) IIA encoder-decoder; attribute logits are a fixed alignment target.
  {
    auto iia = forward_iia(params_, id_feature);
    IiaLossTerms terms{loss_att_iia(iia.embedding, batch.attributes),
                       loss_rec(id_feature, iia.reconstruction, config_.mse),
                       loss_id_transfer(iia.embedding, att_logits, config_.mse)};
    Tensor loss = loss_iia_total(terms, w);
    backward(loss);
    require_clean(params_.identity_params(), kIdentityGroup, "IIA update");
    require_clean(params_.attribute_params(), kAttributeGroup, "IIA update");
    auto group = params_.iia_params();
    optimizers_.at(kIiaGroup).step(group);
    events_.push_back(UpdateEvent::kIia);
    out.att_iia = terms.att_iia.item();
    out.rec = terms.rec.item();
    out.transfer_iia = terms.transfer.item();
    out.iia_total = loss.item();
  }

  // (iii) attribute branch; the freshly updated IIA embedding is the target.
  {
    Tensor embedding;
    {
      NoGradGuard no_grad;
      embedding = forward_iia(params_, id_feature).embedding;
    }
    Tensor att_loss = loss_att(att.logits, batch.attributes);
    Tensor transfer = loss_id_transfer(embedding, att.logits, config_.mse);
    Tensor loss = loss_att_total(att_loss, transfer, w);
    backward(loss);
    require_clean(params_.identity_params(), kIdentityGroup, "attribute update");
    require_clean(params_.iia_params(), kIiaGroup, "attribute update");
    auto group = params_.attribute_params();
    optimizers_.at(kAttributeGroup).step(group);
    events_.push_back(UpdateEvent::kAttribute);
    out.att = att_loss.item();
    out.transfer_att = transfer.item();
    out.att_total = loss.item();
  }
  return out;
}

AdaptLosses Trainer::adapt_step(const Batch& batch, const Tensor* soft_labels) {
  if (batch.labelled || !batch.classes.empty() || batch.attributes.defined()) {
    throw LabelLeakError("adaptation batch carries target labels");
  }
  AdaptLosses out;
  const auto& w = config_.weights;

  // (i) soft labels from the attribute branch, fixed for this step.
  auto att = forward_attribute(params_, batch.features);
  const Tensor att_logits = detach(att.logits);
  Tensor targets = soft_labels ? *soft_labels : detach(att.probs);
  if (targets.shape() != att_logits.shape()) {
    throw InvalidShapeError("soft labels " + shape_string(targets.shape()) + " for logits " +
                            shape_string(att_logits.shape()));
  }
  events_.push_back(UpdateEvent::kSoftLabel);

  // The identity branch is frozen: its feature is computed without a graph.
  Tensor id_feature;
  {
    NoGradGuard no_grad;
    id_feature = detach(forward_identity(params_, batch.features).feature);
  }

  // (ii) IIA with soft labels in place of attribute ground truth.
  {
    auto iia = forward_iia(params_, id_feature);
    IiaLossTerms terms{loss_att_iia(iia.embedding, targets),
                       loss_rec(id_feature, iia.reconstruction, config_.mse),
                       loss_id_transfer(iia.embedding, att_logits, config_.mse)};
    Tensor loss = loss_iia_total(terms, w);
    backward(loss);
    require_clean(params_.identity_params(), kIdentityGroup, "adapt IIA update");
    require_clean(params_.attribute_params(), kAttributeGroup, "adapt IIA update");
    auto group = params_.iia_params();
    optimizers_.at(kIiaGroup).step(group);
    events_.push_back(UpdateEvent::kIia);
    out.att_iia = terms.att_iia.item();
    out.rec = terms.rec.item();
    out.transfer_iia = terms.transfer.item();
    out.iia_total = loss.item();
  }

  // (iii) attribute branch against soft labels and the updated embedding.
  {
    Tensor embedding;
    {
      NoGradGuard no_grad;
      embedding = forward_iia(params_, id_feature).embedding;
    }
    Tensor att_loss = loss_att(att.logits, targets);
    Tensor transfer = loss_id_transfer(embedding, att.logits, config_.mse);
    Tensor loss = loss_att_total(att_loss, transfer, w);
    backward(loss);
    require_clean(params_.identity_params(), kIdentityGroup, "adapt attribute update");
    require_clean(params_.iia_params(), kIiaGroup, "adapt attribute update");
    auto group = params_.attribute_params();
    optimizers_.at(kAttributeGroup).step(group);
    events_.push_back(UpdateEvent::kAttribute);
    out.att = att_loss.item();
    out.transfer_att = transfer.item();
    out.att_total = loss.item();
  }
  return out;
}

void Trainer::pretrain_identity(const Dataset& source) {
  if (!source.labelled()) throw ContractViolation("identity pretraining needs labelled source data");
  if (config_.pretrain_iterations == 0) return;
  BatchSampler sampler(source, config_.batch_size, derive_seed(config_.seed, "sampler/pretrain"));
  for (std::size_t it = 0; it < config_.pretrain_iterations; ++it) {
    record("pretrain/id", identity_step(sampler.next()));
  }
}

void Trainer::joint_train(const Dataset& source) {
  if (!source.labelled()) throw ContractViolation("joint learning needs labelled source data");
  if (config_.joint_iterations == 0) return;
  BatchSampler sampler(source, config_.batch_size, derive_seed(config_.seed, "sampler/joint"));
  for (std::size_t it = 0; it < config_.joint_iterations; ++it) {
    const auto l = joint_train_step(sampler.next());
    record("joint/id", l.id);
    record("joint/att_iia", l.att_iia);
    record("joint/rec", l.rec);
    record("joint/transfer_iia", l.transfer_iia);
    record("joint/iia_total", l.iia_total);
    record("joint/att", l.att);
    record("joint/transfer_att", l.transfer_att);
    record("joint/att_total", l.att_total);
  }
}

void Trainer::adapt(const Dataset& target) {
  if (target.labelled()) {
    throw LabelLeakError("adaptation must receive the label-stripped target view");
  }
  if (config_.adapt_iterations == 0) return;
  Tensor frozen;
  if (config_.frozen_soft_labels) {
    NoGradGuard no_grad;
    frozen = detach(forward_attribute(params_, target.feature_matrix()).probs);
  }
  const std::size_t m = params_.config.num_attributes;
  BatchSampler sampler(target, config_.batch_size, derive_seed(config_.seed, "sampler/adapt"));
  for (std::size_t it = 0; it < config_.adapt_iterations; ++it) {
    Batch batch = sampler.next();
    AdaptLosses l;
    if (config_.frozen_soft_labels) {
      std::vector<double> rows;
      const auto fv = frozen.values();
      for (auto i : batch.indices) rows.insert(rows.end(), fv.begin() + i * m, fv.begin() + (i + 1) * m);
      Tensor soft = Tensor::from_values({batch.indices.size(), m}, std::move(rows));
      l = adapt_step(batch, &soft);
    } else {
      l = adapt_step(batch);
    }
    record("adapt/att_iia", l.att_iia);
    record("adapt/rec", l.rec);
    record("adapt/transfer_iia", l.transfer_iia);
    record("adapt/iia_total", l.iia_total);
    record("adapt/att", l.att);
    record("adapt/transfer_att", l.transfer_att);
    record("adapt/att_total", l.att_total);
  }
}

void Trainer::train_baseline(const Dataset& source) {
  if (!source.labelled()) throw ContractViolation("baseline training needs labelled source data");
  const Mode mode = config_.mode;
  if (mode == Mode::kTjAidl) throw ContractViolation("train_baseline called for tj-aidl");

  // Every mode follows the tj-aidl schedule: identity pretraining where an
  // identity network exists, then the mode's own joint objective.
  if (mode != Mode::kAttrOnly) pretrain_identity(source);
  if (config_.joint_iterations == 0) return;
  BatchSampler sampler(source, config_.batch_size, derive_seed(config_.seed, "sampler/joint"));
  for (std::size_t it = 0; it < config_.joint_iterations; ++it) {
    const Batch batch = sampler.next();
    switch (mode) {
      case Mode::kIdOnly:
        record("baseline/id", identity_step(batch));
        break;
      case Mode::kAttrOnly:
        record("baseline/att", attribute_step(batch));
        break;
      case Mode::kIndependent:
        record("baseline/id", identity_step(batch));
        record("baseline/att", attribute_step(batch));
        break;
      case Mode::kJointShared:
        record("baseline/shared", shared_step(batch));
        break;
      case Mode::kTjAidl:
        break;
    }
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.mode = config_.mode;
  c.params = params_.clone();
  for (const auto& [name, adam] : optimizers_) {
    if (adam.step_count() == 0) continue;
    c.optimizers[name] = AdamSnapshot{adam.step_count(), adam.first_moments(), adam.second_moments()};
  }
  return c;
}

TrainReport run(const TrainConfig& config, const Dataset& source, const Dataset& target) {
  config.validate();
  if (!source.labelled()) throw ContractViolation("run: source dataset must be labelled");
  if (source.empty()) throw ContractViolation("run: empty source dataset");
  const auto start = std::chrono::steady_clock::now();

  Trainer trainer(config, config.model_config(source.feature_dim(), source.num_identities(),
                                              source.num_attributes()));
  if (config.mode == Mode::kTjAidl) {
    trainer.pretrain_identity(source);
    trainer.joint_train(source);
    if (config.adapt_iterations > 0) {
      if (target.feature_dim() != source.feature_dim()) {
        throw InvalidShapeError("target feature_dim differs from source");
      }
      trainer.adapt(target.labelled() ? target.strip_labels() : target);
    }
  } else {
    trainer.train_baseline(source);
  }

  TrainReport report;
  report.traces = trainer.traces();
  report.checkpoint = trainer.checkpoint();
  report.seed = config.seed;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string format_metrics_log(const std::vector<LossTrace>& traces) {
  std::string out = "iter,loss_name,value\n";
  char buf[64];
  for (const auto& t : traces) {
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", t.values[i]);
      out += std::to_string(i) + "," + t.name + "," + buf + "\n";
    }
  }
  return out;
}

}  // namespace tjaidl

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "tjaidl/error.hpp"
#include "tjaidl/eval.hpp"
#include "tjaidl/trainer.hpp"

using namespace tjaidl;

namespace {

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const std::vector<Tensor>& group) {
  Snapshot s;
  for (const auto& t : group) s.emplace_back(t.values().begin(), t.values().end());
  return s;
}

double max_change(const Snapshot& a, const Snapshot& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

DatasetPair small_pair(std::uint64_t seed = 3) {
  GenConfig g;
  g.n_identities = 12;
  g.domain_shift = 1.0;
  g.seed = seed;
  return generate_pair(g);
}

TrainConfig small_config() {
  TrainConfig c;
  c.backbone_dims = {32, 16};
  c.iia_hidden_dims = {16};
  c.pretrain_iterations = 5;
  c.joint_iterations = 4;
  c.adapt_iterations = 3;
  c.seed = 11;
  return c;
}

Trainer make_trainer(const TrainConfig& c, const Dataset& source) {
  return Trainer(c, c.model_config(source.feature_dim(), source.num_identities(), source.num_attributes()));
}

Batch first_batch(const Dataset& d, std::size_t size = 8) { return BatchSampler(d, size, 1).next(); }

}  // namespace

TEST(Trainer, EachStepTouchesOnlyItsGroup) {
  auto data = small_pair();
  auto c = small_config();
  const Batch b = first_batch(data.source);

  {
    Trainer t = make_trainer(c, data.source);
    const auto att = snapshot(t.params().attribute_params());
    const auto iia = snapshot(t.params().iia_params());
    const auto id = snapshot(t.params().identity_params());
    t.identity_step(b);
    EXPECT_EQ(snapshot(t.params().attribute_params()), att);
    EXPECT_EQ(snapshot(t.params().iia_params()), iia);
    EXPECT_NE(snapshot(t.params().identity_params()), id);
  }
  {
    Trainer t = make_trainer(c, data.source);
    const auto id = snapshot(t.params().identity_params());
    const auto iia = snapshot(t.params().iia_params());
    t.attribute_step(b);
    EXPECT_EQ(snapshot(t.params().identity_params()), id);
    EXPECT_EQ(snapshot(t.params().iia_params()), iia);
  }
  {
    Trainer t = make_trainer(c, data.source);
    const auto iia = snapshot(t.params().iia_params());
    t.joint_train_step(b);
    EXPECT_NE(snapshot(t.params().iia_params()), iia);
  }
}

TEST(Trainer, AdaptationFreezesIdentityBranch) {
  auto data = small_pair();
  auto c = small_config();
  Trainer t = make_trainer(c, data.source);
  t.pretrain_identity(data.source);
  t.joint_train(data.source);
  const auto id = snapshot(t.params().identity_params());
  const auto att = snapshot(t.params().attribute_params());
  const auto iia = snapshot(t.params().iia_params());
  t.adapt(data.target.strip_labels());
  EXPECT_EQ(snapshot(t.params().identity_params()), id);
  EXPECT_NE(snapshot(t.params().attribute_params()), att);
  EXPECT_NE(snapshot(t.params().iia_params()), iia);
}

TEST(Trainer, EventOrderFollowsSchedule) {
  auto data = small_pair();
  auto c = small_config();
  Trainer t = make_trainer(c, data.source);
  t.pretrain_identity(data.source);
  t.joint_train(data.source);
  t.adapt(data.target.strip_labels());

  std::vector<UpdateEvent> want(c.pretrain_iterations, UpdateEvent::kIdentity);
  for (std::size_t i = 0; i < c.joint_iterations; ++i)
    want.insert(want.end(), {UpdateEvent::kIdentity, UpdateEvent::kIia, UpdateEvent::kAttribute});
  for (std::size_t i = 0; i < c.adapt_iterations; ++i)
    want.insert(want.end(), {UpdateEvent::kSoftLabel, UpdateEvent::kIia, UpdateEvent::kAttribute});
  EXPECT_EQ(t.events(), want);
}

TEST(Trainer, WithoutTransferJointAttributeUpdateIsPlainAttributeStep) {
  auto data = small_pair();
  auto c = small_config();
  c.weights.lambda2 = 0.0;
  const Batch b = first_batch(data.source);
  Trainer joint = make_trainer(c, data.source);
  Trainer plain = make_trainer(c, data.source);
  const auto l = joint.joint_train_step(b);
  const double att = plain.attribute_step(b);
  EXPECT_EQ(l.att, att);
  EXPECT_EQ(l.att_total, att);
  EXPECT_EQ(snapshot(joint.params().attribute_params()), snapshot(plain.params().attribute_params()));
}

TEST(Trainer, IiaTotalRecomposesFromTerms) {
  auto data = small_pair();
  auto c = small_config();
  c.weights = {2.5, 0.75};
  Trainer t = make_trainer(c, data.source);
  const auto l = t.joint_train_step(first_batch(data.source));
  EXPECT_NEAR(l.iia_total, l.att_iia + 2.5 * l.rec + 0.75 * l.transfer_iia, 1e-12);
  EXPECT_NEAR(l.att_total, l.att + 0.75 * l.transfer_att, 1e-12);
  for (double v : {l.id, l.att_iia, l.rec, l.transfer_iia, l.att, l.transfer_att}) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
  }
}

// With soft labels equal to the branch's own predictions the attribute loss
// is at its stationary point, so only the transfer term can move the branch.
// The residual gradient is rounding noise, far below Adam's epsilon.
TEST(Trainer, SoftLabelsAloneDoNotMoveAttributeBranch) {
  auto data = small_pair();
  auto c = small_config();
  const Dataset target = data.target.strip_labels();
  const Batch b = first_batch(target);

  c.weights.lambda2 = 0.0;
  Trainer still = make_trainer(c, data.source);
  const auto before = snapshot(still.params().attribute_params());
  still.adapt_step(b);
  EXPECT_LT(max_change(snapshot(still.params().attribute_params()), before), 1e-9);

  c.weights.lambda2 = 10.0;
  Trainer moved = make_trainer(c, data.source);
  moved.adapt_step(b);
  EXPECT_GT(max_change(snapshot(moved.params().attribute_params()), before), 1e-3);
}

TEST(Trainer, AdaptationRejectsLabels) {
  auto data = small_pair();
  auto c = small_config();
  Trainer t = make_trainer(c, data.source);
  EXPECT_THROW(t.adapt(data.target), LabelLeakError);
  EXPECT_THROW(t.adapt_step(first_batch(data.target)), LabelLeakError);
  EXPECT_TRUE(t.events().empty());
}

TEST(Trainer, SupervisedStepsRejectUnlabelledBatches) {
  auto data = small_pair();
  auto c = small_config();
  Trainer t = make_trainer(c, data.source);
  const Batch b = first_batch(data.source.strip_labels());
  EXPECT_THROW(t.identity_step(b), ContractViolation);
  EXPECT_THROW(t.joint_train_step(b), ContractViolation);
}

TEST(Trainer, IdOnlyNeverUpdatesAttributeOrIia) {
  auto data = small_pair();
  auto c = small_config();
  c.mode = Mode::kIdOnly;
  Trainer t = make_trainer(c, data.source);
  const auto att = snapshot(t.params().attribute_params());
  const auto iia = snapshot(t.params().iia_params());
  t.train_baseline(data.source);
  EXPECT_EQ(snapshot(t.params().attribute_params()), att);
  EXPECT_EQ(snapshot(t.params().iia_params()), iia);
  for (auto e : t.events()) EXPECT_EQ(e, UpdateEvent::kIdentity);
  EXPECT_EQ(t.events().size(), c.pretrain_iterations + c.joint_iterations);
}

TEST(Trainer, AttrOnlySkipsPretraining) {
  auto data = small_pair();
  auto c = small_config();
  c.mode = Mode::kAttrOnly;
  Trainer t = make_trainer(c, data.source);
  t.train_baseline(data.source);
  EXPECT_EQ(t.events(), std::vector<UpdateEvent>(c.joint_iterations, UpdateEvent::kAttribute));
}

TEST(Trainer, ZeroIterationsLeaveParametersAtInitialization) {
  auto data = small_pair();
  auto c = small_config();
  c.pretrain_iterations = c.joint_iterations = c.adapt_iterations = 0;
  const auto report = run(c, data.source, data.target);
  const auto init = ModelParams::initialize(
      c.model_config(data.source.feature_dim(), data.source.num_identities(), data.source.num_attributes()),
      derive_seed(c.seed, "model"));
  const auto got = report.checkpoint.params.named_parameters();
  const auto want = init.named_parameters();
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].first, want[i].first);
    EXPECT_TRUE(std::ranges::equal(got[i].second.values(), want[i].second.values())) << got[i].first;
  }
  EXPECT_TRUE(report.checkpoint.optimizers.empty());
}

TEST(Trainer, RunIsDeterministic) {
  auto data = small_pair();
  auto c = small_config();
  const auto a = run(c, data.source, data.target);
  const auto b = run(c, data.source, data.target);
  EXPECT_EQ(format_metrics_log(a.traces), format_metrics_log(b.traces));
  const auto pa = a.checkpoint.params.named_parameters();
  const auto pb = b.checkpoint.params.named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    EXPECT_TRUE(std::ranges::equal(pa[i].second.values(), pb[i].second.values()));
  c.seed = 12;
  EXPECT_NE(format_metrics_log(run(c, data.source, data.target).traces), format_metrics_log(a.traces));
}

TEST(Trainer, TraceLengthsMatchSchedule) {
  auto data = small_pair();
  auto c = small_config();
  const auto r = run(c, data.source, data.target);
  ASSERT_NE(r.trace("pretrain/id"), nullptr);
  EXPECT_EQ(r.trace("pretrain/id")->values.size(), c.pretrain_iterations);
  for (const char* name : {"joint/id", "joint/iia_total", "joint/att_total", "joint/rec"})
    EXPECT_EQ(r.trace(name)->values.size(), c.joint_iterations) << name;
  for (const char* name : {"adapt/iia_total", "adapt/att_total"})
    EXPECT_EQ(r.trace(name)->values.size(), c.adapt_iterations) << name;
  EXPECT_EQ(r.trace("missing"), nullptr);
  const std::string log = format_metrics_log(r.traces);
  EXPECT_EQ(log.substr(0, log.find('\n')), "iter,loss_name,value");
}

TEST(Trainer, FrozenSoftLabelsDifferFromRecomputed) {
  auto data = small_pair();
  auto c = small_config();
  c.adapt_iterations = 20;
  const auto recomputed = run(c, data.source, data.target);
  c.frozen_soft_labels = true;
  const auto frozen = run(c, data.source, data.target);
  EXPECT_EQ(recomputed.trace("adapt/att")->values.front(), frozen.trace("adapt/att")->values.front());
  EXPECT_NE(format_metrics_log(recomputed.traces), format_metrics_log(frozen.traces));
}

TEST(Trainer, ResumingFromCheckpointMatchesOneShotRun) {
  auto data = small_pair();
  auto c = small_config();
  const auto whole = run(c, data.source, data.target);
  auto first = c;
  first.adapt_iterations = 0;
  const auto part = run(first, data.source, data.target);
  Trainer resumed(c, part.checkpoint);
  resumed.adapt(data.target.strip_labels());
  const auto a = whole.checkpoint.params.named_parameters();
  const auto b = resumed.params().named_parameters();
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_TRUE(std::ranges::equal(a[i].second.values(), b[i].second.values())) << a[i].first;
}

// Longer schedule on the default generator: losses fall and stay finite.
TEST(TrainerConvergence, PretrainLossFallsAndAdaptationTightensConsistency) {
  GenConfig g;
  g.domain_shift = 1.0;
  g.seed = 5;
  auto data = generate_pair(g);
  TrainConfig c;
  c.pretrain_iterations = 1000;
  c.joint_iterations = 400;
  c.adapt_iterations = 0;
  c.seed = 5;
  const auto report = run(c, data.source, data.target);

  const auto& pre = report.trace("pretrain/id")->values;
  std::vector<double> windows;
  for (std::size_t i = 0; i + 100 <= pre.size(); i += 100)
    windows.push_back(std::accumulate(pre.begin() + i, pre.begin() + i + 100, 0.0) / 100.0);
  EXPECT_LT(windows.back(), 0.5 * windows.front());
  for (std::size_t i = 1; i < windows.size(); ++i) EXPECT_LE(windows[i], windows[i - 1] + 0.05) << i;
  for (const auto& t : report.traces)
    for (double v : t.values) ASSERT_TRUE(std::isfinite(v)) << t.name;

  const Dataset target = data.target.strip_labels();
  const double before = attribute_consistency(report.checkpoint.params, target);
  EXPECT_LE(attribute_consistency(report.checkpoint.params, data.source), before);
  c.adapt_iterations = 300;
  Trainer t(c, report.checkpoint);
  t.adapt(target);
  EXPECT_LE(attribute_consistency(t.params(), target), before);
}

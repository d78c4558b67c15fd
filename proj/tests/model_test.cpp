#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "tjaidl/error.hpp"
#include "tjaidl/model.hpp"

using namespace tjaidl;
using test::random_tensor;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.input_dim = 6;
  c.backbone_dims = {8, 5};
  c.num_identities = 7;
  c.num_attributes = 3;
  c.iia_encoder_dims = {4, 3};
  return c;
}

void zero(const Tensor& t) {
  Tensor copy = t;
  for (auto& v : copy.mutable_values()) v = 0.0;
}

}  // namespace

TEST(ModelConfig, DefaultsAndDecoderMirror) {
  ModelConfig c;
  EXPECT_EQ(c.input_dim, 48u);
  EXPECT_EQ(c.feature_dim(), 64u);
  EXPECT_EQ(c.iia_encoder_dims, (std::vector<std::size_t>{64, 32, 12}));
  EXPECT_EQ(c.iia_decoder_dims(), (std::vector<std::size_t>{32, 64, 64}));
  c.iia_encoder_dims = {64, 32, 11};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Model, OutputShapes) {
  ModelConfig c;
  ModelParams p = ModelParams::initialize(c, 1);
  SeededRng rng(2);
  Tensor x = random_tensor({8, c.input_dim}, rng);
  ForwardOutputs out = forward_all(p, x);
  EXPECT_EQ(out.identity.feature.shape(), (Shape{8, 64}));
  EXPECT_EQ(out.identity.probs.shape(), (Shape{8, 100}));
  EXPECT_EQ(out.attribute.feature.shape(), (Shape{8, 64}));
  EXPECT_EQ(out.attribute.logits.shape(), (Shape{8, 12}));
  EXPECT_EQ(out.iia.embedding.shape(), (Shape{8, 12}));
  EXPECT_EQ(out.iia.reconstruction.shape(), (Shape{8, 64}));
  EXPECT_THROW(forward_identity(p, random_tensor({8, 47}, rng)), InvalidShapeError);
  EXPECT_THROW(forward_iia(p, random_tensor({8, 12}, rng)), InvalidShapeError);
}

TEST(Model, GlorotInitBoundsAndZeroBias) {
  ModelParams p = ModelParams::initialize(ModelConfig{}, 3);
  for (const auto& [name, t] : p.named_parameters()) {
    if (name.ends_with(".bias")) {
      for (double v : t.values()) EXPECT_EQ(v, 0.0) << name;
    } else {
      const double limit = std::sqrt(6.0 / static_cast<double>(t.shape()[0] + t.shape()[1]));
      for (double v : t.values()) ASSERT_LE(std::abs(v), limit) << name;
    }
  }
}

TEST(Model, ZeroHeadsGiveUniformOutputs) {
  ModelConfig c = small_config();
  ModelParams p = ModelParams::initialize(c, 4);
  zero(p.identity.head.weight);
  zero(p.attribute.head.weight);
  SeededRng rng(5);
  Tensor x = random_tensor({3, c.input_dim}, rng);
  const Tensor id_probs = forward_identity(p, x).probs;
  const Tensor att_probs = forward_attribute(p, x).probs;
  for (double v : id_probs.values()) EXPECT_NEAR(v, 1.0 / 7.0, 1e-15);
  for (double v : att_probs.values()) EXPECT_EQ(v, 0.5);
}

TEST(Model, ZeroIiaWeightsOutputBiases) {
  ModelConfig c = small_config();
  ModelParams p = ModelParams::initialize(c, 4);
  SeededRng rng(6);
  for (auto& layer : p.iia_encoder.layers) zero(layer.weight);
  for (auto& layer : p.iia_decoder.layers) zero(layer.weight);
  Tensor enc_bias = p.iia_encoder.layers.back().bias;
  Tensor dec_bias = p.iia_decoder.layers.back().bias;
  for (auto& v : enc_bias.mutable_values()) v = rng.uniform(-1, 1);
  for (auto& v : dec_bias.mutable_values()) v = rng.uniform(-1, 1);
  IiaOutputs out = forward_iia(p, random_tensor({2, c.feature_dim()}, rng, 0, 1));
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(out.embedding.at(r, j), enc_bias.values()[j]);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(out.reconstruction.at(r, j), dec_bias.values()[j]);
  }
}

TEST(Model, IdentityInitializedIiaRoundTrips) {
  ModelConfig c = small_config();
  c.num_attributes = 5;  // equal to F so a single square layer can be the identity
  c.iia_encoder_dims = {5};
  ModelParams p = ModelParams::initialize(c, 7);
  for (Mlp* mlp : {&p.iia_encoder, &p.iia_decoder}) {
    ASSERT_EQ(mlp->layers.size(), 1u);
    auto w = mlp->layers[0].weight.mutable_values();
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) w[i * 5 + j] = i == j ? 1.0 : 0.0;
  }
  SeededRng rng(8);
  Tensor x = random_tensor({4, 5}, rng, -3, 3);
  IiaOutputs out = forward_iia(p, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(out.reconstruction.values()[i], x.values()[i], 1e-12);
}

TEST(Model, ForwardInvariantsOverRandomTrials) {
  ModelConfig c = small_config();
  SeededRng rng(10);
  for (int trial = 0; trial < 1000; ++trial) {
    ModelParams p = ModelParams::initialize(c, rng.next_u64());
    Tensor x = random_tensor({2, c.input_dim}, rng, -5, 5);
    ForwardOutputs out = forward_all(p, x);
    for (std::size_t r = 0; r < 2; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < c.num_identities; ++k) s += out.identity.probs.at(r, k);
      ASSERT_NEAR(s, 1.0, 1e-9);
    }
    for (std::size_t i = 0; i < out.attribute.probs.size(); ++i) {
      const double pa = out.attribute.probs.values()[i];
      const double pi = out.iia.probs.values()[i];
      ASSERT_GT(pa, 0.0);
      ASSERT_LT(pa, 1.0);
      ASSERT_GT(pi, 0.0);
      ASSERT_LT(pi, 1.0);
      ASSERT_NEAR(pa, 1.0 / (1.0 + std::exp(-out.attribute.logits.values()[i])), 1e-15);
      ASSERT_NEAR(pi, 1.0 / (1.0 + std::exp(-out.iia.embedding.values()[i])), 1e-15);
    }
    for (double v : out.identity.feature.values()) ASSERT_GE(v, 0.0);
  }
}

TEST(Model, InitializationAndForwardAreDeterministic) {
  ModelConfig c = small_config();
  SeededRng rng(11);
  Tensor x = random_tensor({3, c.input_dim}, rng);
  Tensor a = forward_identity(ModelParams::initialize(c, 99), x).feature;
  Tensor b = forward_identity(ModelParams::initialize(c, 99), x).feature;
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST(Model, BranchesShareArchitectureButNotParameters) {
  ModelParams p = ModelParams::initialize(small_config(), 12);
  auto id = p.identity_params();
  auto att = p.attribute_params();
  ASSERT_EQ(id.size(), att.size());
  for (std::size_t i = 0; i + 2 < id.size(); ++i) {  // backbone layers
    EXPECT_EQ(id[i].shape(), att[i].shape());
    EXPECT_FALSE(id[i].same_node(att[i]));
  }
}

TEST(Model, AttributeInitializationDoesNotAffectIdentityBranch) {
  ModelConfig c = small_config();
  ModelParams p = ModelParams::initialize(c, 13);
  SeededRng rng(14);
  Tensor x = random_tensor({3, c.input_dim}, rng);
  Tensor before = forward_identity(p, x).probs.clone(false);
  for (auto& t : p.attribute_params())
    for (auto& v : Tensor(t).mutable_values()) v = rng.uniform(-1, 1);
  Tensor after = forward_identity(p, x).probs;
  EXPECT_TRUE(std::equal(before.values().begin(), before.values().end(), after.values().begin()));
}

TEST(Model, DeploymentFeatureWidths) {
  ModelConfig c = small_config();
  ModelParams p = ModelParams::initialize(c, 15);
  SeededRng rng(16);
  Tensor x = random_tensor({4, c.input_dim}, rng);
  for (Mode m : {Mode::kTjAidl, Mode::kAttrOnly, Mode::kIdOnly, Mode::kJointShared})
    EXPECT_EQ(deployment_features(p, m, x).cols(), c.feature_dim()) << mode_name(m);
  EXPECT_EQ(deployment_features(p, Mode::kIndependent, x).cols(), 2 * c.feature_dim());
  // tj-aidl deploys the attribute branch.
  Tensor att = forward_attribute(p, x).feature;
  Tensor dep = deployment_features(p, Mode::kTjAidl, x);
  EXPECT_TRUE(std::equal(att.values().begin(), att.values().end(), dep.values().begin()));
}

TEST(Model, ModeNamesRoundTrip) {
  for (Mode m : {Mode::kTjAidl, Mode::kIndependent, Mode::kJointShared, Mode::kIdOnly, Mode::kAttrOnly})
    EXPECT_EQ(parse_mode(mode_name(m)), m);
  EXPECT_THROW(parse_mode("both"), ConfigError);
}

TEST(Model, CloneIsDeep) {
  ModelParams p = ModelParams::initialize(small_config(), 17);
  ModelParams q = p.clone();
  Tensor w = q.identity.head.weight;
  w.mutable_values()[0] += 1.0;
  EXPECT_NE(p.identity.head.weight.values()[0], q.identity.head.weight.values()[0]);
}

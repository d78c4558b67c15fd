#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tjaidl/rng.hpp"
#include "tjaidl/tensor.hpp"

namespace tjaidl {

struct ModelConfig {
  std::size_t input_dim = 48;
  /// Hidden widths of each branch backbone; the last entry is the feature dim.
  std::vector<std::size_t> backbone_dims{128, 64};
  std::size_t num_identities = 100;
  std::size_t num_attributes = 12;
  /// IIA encoder output widths; the last entry must equal num_attributes.
  std::vector<std::size_t> iia_encoder_dims{64, 32, 12};

  std::size_t feature_dim() const { return backbone_dims.back(); }
  /// Mirror of the encoder, ending at feature_dim().
  std::vector<std::size_t> iia_decoder_dims() const;
  void validate() const;
};

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // {out}

  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }
};

/// Stack of linear layers with ReLU between them.
struct Mlp {
  std::vector<Linear> layers;

  /// Applies every layer; the last one is followed by ReLU only if asked.
  Tensor forward(const Tensor& x, bool relu_last) const;
};

struct Branch {
  Mlp backbone;  // ReLU on every layer, output is the branch feature
  Linear head;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Learnable state of both branches and the IIA encoder-decoder. The two
/// branches share a layout but never share storage.
struct ModelParams {
  ModelConfig config;
  Branch identity;
  Branch attribute;
  Mlp iia_encoder;
  Mlp iia_decoder;

  /// Glorot-uniform weights, zero biases. Each group draws from its own
  /// sub-stream of the seed so groups are independent of each other.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

  std::vector<Tensor> identity_params() const;
  std::vector<Tensor> attribute_params() const;
  std::vector<Tensor> iia_params() const;

  /// Stable "group.part.index.kind" names for every parameter.
  NamedTensors named_parameters() const;

  /// Deep copy with fresh storage.
  ModelParams clone() const;
};

struct IdentityOutputs {
  Tensor feature;  // x_id, batch x F
  Tensor logits;   // batch x N_id
  Tensor probs;    // softmax of logits
};

struct AttributeOutputs {
  Tensor feature;  // deployment representation, batch x F
  Tensor logits;   // batch x m
  Tensor probs;    // sigmoid of logits
};

struct IiaOutputs {
  Tensor embedding;       // e_IIA, batch x m, pre-sigmoid
  Tensor reconstruction;  // batch x F
  Tensor probs;           // sigmoid of embedding
};

/// Everything one batch produces, with the IIA fed from detached x_id.
struct ForwardOutputs {
  IdentityOutputs identity;
  AttributeOutputs attribute;
  IiaOutputs iia;
};

IdentityOutputs forward_identity(const ModelParams& params, const Tensor& batch);
AttributeOutputs forward_attribute(const ModelParams& params, const Tensor& batch);
/// The caller passes detach(x_id); the identity branch must not see IIA gradients.
IiaOutputs forward_iia(const ModelParams& params, const Tensor& identity_feature);
ForwardOutputs forward_all(const ModelParams& params, const Tensor& batch);

/// Single-backbone baseline: identity backbone shared by both heads.
struct SharedOutputs {
  Tensor feature;
  Tensor id_probs;
  Tensor att_logits;
};
SharedOutputs forward_shared(const ModelParams& params, const Tensor& batch);

/// Which training regime produced a set of parameters; decides the
/// deployment representation.
enum class Mode {
  kTjAidl,       // full method, attribute-branch feature
  kIndependent,  // separately trained branches, concatenated features
  kJointShared,  // one backbone under both supervisions
  kIdOnly,       // identity branch alone
  kAttrOnly,     // attribute branch alone
};

const char* mode_name(Mode mode);
/// Accepts "tj-aidl", "independent", "joint-shared", "id-only", "attr-only".
Mode parse_mode(const std::string& name);

/// Feature used for re-id retrieval under the given mode.
Tensor deployment_features(const ModelParams& params, Mode mode, const Tensor& batch);
/// Attribute logits as seen by the given mode.
Tensor attribute_logits(const ModelParams& params, Mode mode, const Tensor& batch);

}  // namespace tjaidl

#include "tjaidl/model.hpp"

#include <cmath>

#include "tjaidl/error.hpp"

namespace tjaidl {

namespace {

Linear make_linear(std::size_t in, std::size_t out, SeededRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out);
  for (auto& v : w) v = rng.uniform(-limit, limit);
  return Linear{Tensor::from_values({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

Mlp make_mlp(std::size_t in, const std::vector<std::size_t>& dims, SeededRng& rng) {
  Mlp mlp;
  for (auto out : dims) {
    mlp.layers.push_back(make_linear(in, out, rng));
    in = out;
  }
  return mlp;
}

Branch make_branch(const ModelConfig& c, std::size_t head_width, SeededRng rng) {
  Branch b;
  b.backbone = make_mlp(c.input_dim, c.backbone_dims, rng);
  b.head = make_linear(c.feature_dim(), head_width, rng);
  return b;
}

void append(std::vector<Tensor>& out, const Linear& l) {
  out.push_back(l.weight);
  out.push_back(l.bias);
}

void append(std::vector<Tensor>& out, const Mlp& m) {
  for (const auto& l : m.layers) append(out, l);
}

void append_named(NamedTensors& out, const std::string& prefix, const Linear& l) {
  out.emplace_back(prefix + ".weight", l.weight);
  out.emplace_back(prefix + ".bias", l.bias);
}

void append_named(NamedTensors& out, const std::string& prefix, const Mlp& m) {
  for (std::size_t i = 0; i < m.layers.size(); ++i)
    append_named(out, prefix + "." + std::to_string(i), m.layers[i]);
}

Linear clone(const Linear& l) { return Linear{l.weight.clone(true), l.bias.clone(true)}; }

Mlp clone(const Mlp& m) {
  Mlp out;
  for (const auto& l : m.layers) out.layers.push_back(clone(l));
  return out;
}

void check_input(const ModelConfig& c, const Tensor& batch) {
  if (batch.ndim() != 2 || batch.cols() != c.input_dim) {
    throw InvalidShapeError("model input " + shape_string(batch.shape()) + " does not match input_dim " +
                            std::to_string(c.input_dim));
  }
}

}  // namespace

std::vector<std::size_t> ModelConfig::iia_decoder_dims() const {
  std::vector<std::size_t> dims;
  for (std::size_t i = iia_encoder_dims.size(); i-- > 1;) dims.push_back(iia_encoder_dims[i - 1]);
  dims.push_back(feature_dim());
  return dims;
}

void ModelConfig::validate() const {
  if (input_dim == 0) throw ConfigError("model.input_dim", "must be positive");
  if (backbone_dims.empty()) throw ConfigError("model.backbone_dims", "must be non-empty");
  for (auto d : backbone_dims)
    if (d == 0) throw ConfigError("model.backbone_dims", "widths must be positive");
  if (num_identities == 0) throw ConfigError("model.num_identities", "must be positive");
  if (num_attributes == 0) throw ConfigError("model.num_attributes", "must be positive");
  if (iia_encoder_dims.empty() || iia_encoder_dims.back() != num_attributes) {
    throw ConfigError("model.iia_encoder_dims", "last width must equal num_attributes");
  }
  for (auto d : iia_encoder_dims)
    if (d == 0) throw ConfigError("model.iia_encoder_dims", "widths must be positive");
}

Tensor Mlp::forward(const Tensor& x, bool relu_last) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size() || relu_last) h = relu(h);
  }
  return h;
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  SeededRng root(seed);
  ModelParams p;
  p.config = config;
  p.identity = make_branch(config, config.num_identities, root.fork("init/identity"));
  p.attribute = make_branch(config, config.num_attributes, root.fork("init/attribute"));
  SeededRng iia = root.fork("init/iia");
  p.iia_encoder = make_mlp(config.feature_dim(), config.iia_encoder_dims, iia);
  p.iia_decoder = make_mlp(config.num_attributes, config.iia_decoder_dims(), iia);
  return p;
}

std::vector<Tensor> ModelParams::identity_params() const {
  std::vector<Tensor> out;
  append(out, identity.backbone);
  append(out, identity.head);
  return out;
}

std::vector<Tensor> ModelParams::attribute_params() const {
  std::vector<Tensor> out;
  append(out, attribute.backbone);
  append(out, attribute.head);
  return out;
}

std::vector<Tensor> ModelParams::iia_params() const {
  std::vector<Tensor> out;
  append(out, iia_encoder);
  append(out, iia_decoder);
  return out;
}

NamedTensors ModelParams::named_parameters() const {
  NamedTensors out;
  append_named(out, "identity.backbone", identity.backbone);
  append_named(out, "identity.head", identity.head);
  append_named(out, "attribute.backbone", attribute.backbone);
  append_named(out, "attribute.head", attribute.head);
  append_named(out, "iia.encoder", iia_encoder);
  append_named(out, "iia.decoder", iia_decoder);
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams p;
  p.config = config;
  p.identity = Branch{tjaidl::clone(identity.backbone), tjaidl::clone(identity.head)};
  p.attribute = Branch{tjaidl::clone(attribute.backbone), tjaidl::clone(attribute.head)};
  p.iia_encoder = tjaidl::clone(iia_encoder);
  p.iia_decoder = tjaidl::clone(iia_decoder);
  return p;
}

IdentityOutputs forward_identity(const ModelParams& params, const Tensor& batch) {
  check_input(params.config, batch);
  IdentityOutputs out;
  out.feature = params.identity.backbone.forward(batch, true);
  out.logits = params.identity.head(out.feature);
  out.probs = softmax_rows(out.logits);
  return out;
}

AttributeOutputs forward_attribute(const ModelParams& params, const Tensor& batch) {
  check_input(params.config, batch);
  AttributeOutputs out;
  out.feature = params.attribute.backbone.forward(batch, true);
  out.logits = params.attribute.head(out.feature);
  out.probs = sigmoid(out.logits);
  return out;
}

IiaOutputs forward_iia(const ModelParams& params, const Tensor& identity_feature) {
  if (identity_feature.ndim() != 2 || identity_feature.cols() != params.config.feature_dim()) {
    throw InvalidShapeError("IIA input " + shape_string(identity_feature.shape()) +
                            " does not match feature_dim " +
                            std::to_string(params.config.feature_dim()));
  }
  IiaOutputs out;
  out.embedding = params.iia_encoder.forward(identity_feature, false);
  out.reconstruction = params.iia_decoder.forward(out.embedding, false);
  out.probs = sigmoid(out.embedding);
  return out;
}

ForwardOutputs forward_all(const ModelParams& params, const Tensor& batch) {
  ForwardOutputs out;
  out.identity = forward_identity(params, batch);
  out.attribute = forward_attribute(params, batch);
  out.iia = forward_iia(params, detach(out.identity.feature));
  return out;
}

SharedOutputs forward_shared(const ModelParams& params, const Tensor& batch) {
  check_input(params.config, batch);
  SharedOutputs out;
  out.feature = params.identity.backbone.forward(batch, true);
  out.id_probs = softmax_rows(params.identity.head(out.feature));
  out.att_logits = params.attribute.head(out.feature);
  return out;
}

const char* mode_name(Mode mode) {
  switch (mode) {
    case Mode::kTjAidl: return "tj-aidl";
    case Mode::kIndependent: return "independent";
    case Mode::kJointShared: return "joint-shared";
    case Mode::kIdOnly: return "id-only";
    case Mode::kAttrOnly: return "attr-only";
  }
  return "?";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::kTjAidl, Mode::kIndependent, Mode::kJointShared, Mode::kIdOnly, Mode::kAttrOnly}) {
    if (name == mode_name(m)) return m;
  }
  throw ConfigError("mode", "unknown mode '" + name + "'");
}

Tensor deployment_features(const ModelParams& params, Mode mode, const Tensor& batch) {
  switch (mode) {
    case Mode::kIdOnly:
    case Mode::kJointShared:
      return forward_identity(params, batch).feature;
    case Mode::kIndependent:
      return concat({forward_attribute(params, batch).feature, forward_identity(params, batch).feature});
    case Mode::kTjAidl:
    case Mode::kAttrOnly:
      break;
  }
  return forward_attribute(params, batch).feature;
}

Tensor attribute_logits(const ModelParams& params, Mode mode, const Tensor& batch) {
  if (mode == Mode::kJointShared) return forward_shared(params, batch).att_logits;
  return forward_attribute(params, batch).logits;
}

}  // namespace tjaidl

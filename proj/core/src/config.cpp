#include "tjaidl/config.hpp"

#include <fstream>
#include <sstream>

#include "tjaidl/error.hpp"

namespace tjaidl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T, typename F>
std::optional<T> convert(const KeyValueConfig& kv, const std::string& key, F f) {
  auto v = kv.get(key);
  if (!v) return std::nullopt;
  try {
    std::size_t used = 0;
    T out = f(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key, "cannot parse '" + *v + "'");
  }
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig kv;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", n);
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", n);
    if (!kv.entries_.emplace(key, trim(line.substr(eq + 1))).second) {
      throw ConfigError(key, "duplicate key at line " + std::to_string(n));
    }
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> KeyValueConfig::get_size(const std::string& key) const {
  auto v = get(key);
  if (v && !v->empty() && (*v)[0] == '-') throw ConfigError(key, "must be non-negative");
  return convert<std::size_t>(*this, key, [](const std::string& s, std::size_t* used) {
    return static_cast<std::size_t>(std::stoull(s, used));
  });
}

std::optional<std::uint64_t> KeyValueConfig::get_u64(const std::string& key) const {
  auto v = get(key);
  if (v && !v->empty() && (*v)[0] == '-') throw ConfigError(key, "must be non-negative");
  return convert<std::uint64_t>(*this, key, [](const std::string& s, std::size_t* used) {
    return static_cast<std::uint64_t>(std::stoull(s, used));
  });
}

std::optional<double> KeyValueConfig::get_double(const std::string& key) const {
  return convert<double>(*this, key, [](const std::string& s, std::size_t* used) { return std::stod(s, used); });
}

std::optional<bool> KeyValueConfig::get_bool(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + *v + "'");
}

std::optional<std::vector<std::size_t>> KeyValueConfig::get_size_list(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  std::vector<std::size_t> out;
  for (const auto& item : split_csv(*v)) {
    try {
      std::size_t used = 0;
      if (item[0] == '-') throw std::invalid_argument("negative");
      out.push_back(static_cast<std::size_t>(std::stoull(item, &used)));
      if (used != item.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError(key, "cannot parse list item '" + item + "'");
    }
  }
  return out;
}

std::optional<std::vector<std::string>> KeyValueConfig::get_string_list(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  return split_csv(*v);
}

void KeyValueConfig::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [key, value] : entries_) {
    if (!known.count(key)) throw ConfigError(key, "unknown key");
  }
}

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys{
      "gen.n_identities",     "gen.images_per_camera", "gen.n_cameras",       "gen.num_attributes",
      "gen.input_dim",        "gen.prototype_scale",   "gen.attribute_strength", "gen.camera_noise",
      "gen.sample_noise",     "gen.domain_shift",      "gen.seed",
      "train.batch_size",     "train.pretrain_iterations", "train.joint_iterations",
      "train.adapt_iterations", "train.lambda1",       "train.lambda2",       "train.seed",
      "train.mode",           "train.frozen_soft_labels", "train.mse",
      "adam.lr",              "adam.beta1",            "adam.beta2",          "adam.epsilon",
      "model.backbone_dims",  "model.iia_hidden_dims",
      "eval.max_rank",
      "data.source",          "data.target",
      "compare.modes",        "compare.seeds",
  };
  return keys;
}

GenConfig gen_config_from(const KeyValueConfig& kv, GenConfig c) {
  if (auto v = kv.get_size("gen.n_identities")) c.n_identities = *v;
  if (auto v = kv.get_size("gen.images_per_camera")) c.images_per_camera = *v;
  if (auto v = kv.get_size("gen.n_cameras")) c.n_cameras = *v;
  if (auto v = kv.get_size("gen.num_attributes")) c.num_attributes = *v;
  if (auto v = kv.get_size("gen.input_dim")) c.input_dim = *v;
  if (auto v = kv.get_double("gen.prototype_scale")) c.prototype_scale = *v;
  if (auto v = kv.get_double("gen.attribute_strength")) c.attribute_strength = *v;
  if (auto v = kv.get_double("gen.camera_noise")) c.camera_noise = *v;
  if (auto v = kv.get_double("gen.sample_noise")) c.sample_noise = *v;
  if (auto v = kv.get_double("gen.domain_shift")) c.domain_shift = *v;
  if (auto v = kv.get_u64("gen.seed")) c.seed = *v;
  c.validate();
  return c;
}

TrainConfig train_config_from(const KeyValueConfig& kv, TrainConfig c) {
  if (auto v = kv.get_size("train.batch_size")) c.batch_size = *v;
  if (auto v = kv.get_size("train.pretrain_iterations")) c.pretrain_iterations = *v;
  if (auto v = kv.get_size("train.joint_iterations")) c.joint_iterations = *v;
  if (auto v = kv.get_size("train.adapt_iterations")) c.adapt_iterations = *v;
  if (auto v = kv.get_double("train.lambda1")) c.weights.lambda1 = *v;
  if (auto v = kv.get_double("train.lambda2")) c.weights.lambda2 = *v;
  if (auto v = kv.get_u64("train.seed")) c.seed = *v;
  if (auto v = kv.get("train.mode")) {
    try {
      c.mode = parse_mode(*v);
    } catch (const ConfigError&) {
      throw ConfigError("train.mode", "unknown mode '" + *v + "'");
    }
  }
  if (auto v = kv.get_bool("train.frozen_soft_labels")) c.frozen_soft_labels = *v;
  if (auto v = kv.get("train.mse")) {
    if (*v == "mean") {
      c.mse = MseReduction::kMean;
    } else if (*v == "per-sample-sum") {
      c.mse = MseReduction::kPerSampleSum;
    } else {
      throw ConfigError("train.mse", "expected 'mean' or 'per-sample-sum'");
    }
  }
  if (auto v = kv.get_double("adam.lr")) c.adam.learning_rate = *v;
  if (auto v = kv.get_double("adam.beta1")) c.adam.beta1 = *v;
  if (auto v = kv.get_double("adam.beta2")) c.adam.beta2 = *v;
  if (auto v = kv.get_double("adam.epsilon")) c.adam.epsilon = *v;
  if (auto v = kv.get_size_list("model.backbone_dims")) c.backbone_dims = *v;
  if (auto v = kv.get_size_list("model.iia_hidden_dims")) c.iia_hidden_dims = *v;
  c.validate();
  return c;
}

Protocol protocol_from(const KeyValueConfig& kv) {
  Protocol p;
  if (auto v = kv.get_size("eval.max_rank")) p.max_rank = *v;
  return p;
}

std::vector<Mode> parse_mode_list(const std::string& csv) {
  std::vector<Mode> out;
  for (const auto& name : split_csv(csv)) out.push_back(parse_mode(name));
  if (out.empty()) throw ConfigError("modes", "at least one mode is required");
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_csv(csv)) {
    try {
      std::size_t used = 0;
      if (item[0] == '-') throw std::invalid_argument("negative");
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("seeds", "cannot parse seed '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("seeds", "at least one seed is required");
  return out;
}

void ExperimentSpec::validate() const {
  if (modes.empty()) throw ConfigError("compare.modes", "at least one mode is required");
  if (seeds.empty()) throw ConfigError("compare.seeds", "at least one seed is required");
  if (source_path.has_value() != target_path.has_value()) {
    throw ConfigError(source_path ? "data.target" : "data.source", "source and target must be given together");
  }
  gen.validate();
  train.validate();
}

ExperimentSpec experiment_from(const KeyValueConfig& kv) {
  kv.reject_unknown(known_config_keys());
  ExperimentSpec spec;
  spec.gen = gen_config_from(kv);
  spec.train = train_config_from(kv);
  spec.protocol = protocol_from(kv);
  if (auto v = kv.get("data.source")) spec.source_path = *v;
  if (auto v = kv.get("data.target")) spec.target_path = *v;
  if (auto v = kv.get("compare.modes")) {
    try {
      spec.modes = parse_mode_list(*v);
    } catch (const ConfigError& e) {
      throw ConfigError("compare.modes", e.what());
    }
  }
  if (auto v = kv.get("compare.seeds")) {
    try {
      spec.seeds = parse_seed_list(*v);
    } catch (const ConfigError& e) {
      throw ConfigError("compare.seeds", e.what());
    }
  }
  spec.validate();
  return spec;
}

}  // namespace tjaidl

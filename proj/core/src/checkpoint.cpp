#include "tjaidl/checkpoint.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "tjaidl/error.hpp"

namespace tjaidl {

namespace {

constexpr const char* kMagic = "tjaidl-checkpoint";
constexpr int kVersion = 1;

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::size_t> split_dims(const std::string& s, std::size_t line) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw ParseError("bad dimension list '" + s + "'", line);
    }
  }
  return out;
}

void write_tensor(std::string& out, const std::string& name, const Shape& shape,
                  std::span<const double> values) {
  out += "tensor " + name + " " + std::to_string(shape.size());
  for (auto d : shape) out += " " + std::to_string(d);
  char buf[32];
  for (double v : values) {
    std::snprintf(buf, sizeof buf, " %.17g", v);
    out += buf;
  }
  out += '\n';
}

double parse_double(const std::string& token, std::size_t line) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  // Underflow to subnormal is fine (decayed optimizer moments); overflow is not.
  if (end == token.c_str() || *end != '\0' || (errno == ERANGE && std::isinf(v))) {
    throw ParseError("bad number '" + token + "'", line);
  }
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  const auto& cfg = c.params.config;
  std::string out = std::string(kMagic) + " " + std::to_string(kVersion) + "\n";
  out += "meta mode " + std::string(mode_name(c.mode)) + "\n";
  out += "meta input_dim " + std::to_string(cfg.input_dim) + "\n";
  out += "meta backbone_dims " + join(cfg.backbone_dims) + "\n";
  out += "meta num_identities " + std::to_string(cfg.num_identities) + "\n";
  out += "meta num_attributes " + std::to_string(cfg.num_attributes) + "\n";
  out += "meta iia_encoder_dims " + join(cfg.iia_encoder_dims) + "\n";
  for (const auto& [name, t] : c.params.named_parameters()) write_tensor(out, name, t.shape(), t.values());
  for (const auto& [group, snap] : c.optimizers) {
    out += "adam " + group + " " + std::to_string(snap.step_count) + "\n";
    for (std::size_t k = 0; k < snap.m.size(); ++k) {
      write_tensor(out, "adam." + group + ".m." + std::to_string(k), {snap.m[k].size()}, snap.m[k]);
      write_tensor(out, "adam." + group + ".v." + std::to_string(k), {snap.v[k].size()}, snap.v[k]);
    }
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw ParseError("empty checkpoint", 1);
  ++line_no;
  {
    std::istringstream header(line);
    std::string magic;
    int version = 0;
    header >> magic >> version;
    if (magic != kMagic) throw ParseError("not a checkpoint file", line_no);
    if (version != kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version), line_no);
  }

  std::map<std::string, std::string> meta;
  std::map<std::string, std::pair<Shape, std::vector<double>>> tensors;
  std::map<std::string, std::uint64_t> adam_steps;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind, name;
    ls >> kind >> name;
    if (kind == "meta") {
      std::string value;
      ls >> value;
      meta[name] = value;
    } else if (kind == "adam") {
      std::uint64_t steps = 0;
      if (!(ls >> steps)) throw ParseError("bad adam record", line_no);
      adam_steps[name] = steps;
    } else if (kind == "tensor") {
      std::size_t ndim = 0;
      if (!(ls >> ndim) || ndim == 0) throw ParseError("bad tensor rank for " + name, line_no);
      Shape shape(ndim);
      for (auto& d : shape)
        if (!(ls >> d)) throw ParseError("bad tensor shape for " + name, line_no);
      std::vector<double> values;
      std::string tok;
      while (ls >> tok) values.push_back(parse_double(tok, line_no));
      if (values.size() != shape_size(shape)) {
        throw ParseError("tensor " + name + " has " + std::to_string(values.size()) + " values for shape " +
                             shape_string(shape),
                         line_no);
      }
      tensors[name] = {std::move(shape), std::move(values)};
    } else {
      throw ParseError("unknown record '" + kind + "'", line_no);
    }
  }

  auto need = [&](const char* key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw ParseError(std::string("missing meta '") + key + "'", line_no);
    return it->second;
  };
  ModelConfig cfg;
  try {
    cfg.input_dim = std::stoul(need("input_dim"));
    cfg.backbone_dims = split_dims(need("backbone_dims"), line_no);
    cfg.num_identities = std::stoul(need("num_identities"));
    cfg.num_attributes = std::stoul(need("num_attributes"));
    cfg.iia_encoder_dims = split_dims(need("iia_encoder_dims"), line_no);
  } catch (const std::logic_error&) {
    throw ParseError("bad model metadata", line_no);
  }

  Checkpoint c;
  c.mode = parse_mode(need("mode"));
  c.params = ModelParams::initialize(cfg, 0);
  for (auto& [name, t] : c.params.named_parameters()) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ParseError("missing tensor " + name, line_no);
    if (it->second.first != t.shape()) {
      throw ParseError("tensor " + name + " has shape " + shape_string(it->second.first) + ", expected " +
                           shape_string(t.shape()),
                       line_no);
    }
    auto dst = t.mutable_values();
    std::copy(it->second.second.begin(), it->second.second.end(), dst.begin());
  }
  for (const auto& [group, steps] : adam_steps) {
    AdamSnapshot snap;
    snap.step_count = steps;
    for (std::size_t k = 0;; ++k) {
      auto m = tensors.find("adam." + group + ".m." + std::to_string(k));
      auto v = tensors.find("adam." + group + ".v." + std::to_string(k));
      if (m == tensors.end() || v == tensors.end()) break;
      snap.m.push_back(m->second.second);
      snap.v.push_back(v->second.second);
    }
    c.optimizers[group] = std::move(snap);
  }
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << serialize_checkpoint(checkpoint);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingCheckpointError("checkpoint not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingCheckpointError("cannot read checkpoint: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace tjaidl

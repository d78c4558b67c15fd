#include "tjaidl/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tjaidl/error.hpp"

namespace tjaidl {

const char* domain_name(Domain d) { return d == Domain::kSource ? "source" : "target"; }

Domain parse_domain(const std::string& name) {
  if (name == "source") return Domain::kSource;
  if (name == "target") return Domain::kTarget;
  throw Error("unknown domain '" + name + "'");
}

// ---- Dataset -------------------------------------------------------------

Dataset::Dataset(std::vector<Sample> samples, std::size_t num_attributes, std::size_t feature_dim,
                 bool labelled)
    : samples_(std::move(samples)),
      num_attributes_(num_attributes),
      feature_dim_(feature_dim),
      labelled_(labelled) {
  for (const auto& s : samples_) {
    if (s.features.size() != feature_dim_) throw ContractViolation("sample feature length != feature_dim");
    if (labelled_ && s.attributes.size() != num_attributes_)
      throw ContractViolation("sample attribute length != num_attributes");
  }
}

std::vector<int> Dataset::identities() const {
  if (!labelled_) throw LabelLeakError("identity labels requested from a label-stripped dataset");
  std::set<int> ids;
  for (const auto& s : samples_) ids.insert(s.identity);
  return {ids.begin(), ids.end()};
}

std::vector<std::size_t> Dataset::class_indices() const {
  const auto ids = identities();
  std::vector<std::size_t> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) {
    out.push_back(static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), s.identity) - ids.begin()));
  }
  return out;
}

Dataset Dataset::strip_labels() const {
  std::vector<Sample> stripped = samples_;
  for (auto& s : stripped) {
    s.identity = 0;
    s.attributes.clear();
  }
  return Dataset(std::move(stripped), num_attributes_, feature_dim_, false);
}

Tensor Dataset::feature_matrix() const {
  std::vector<std::size_t> rows(samples_.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return feature_matrix(rows);
}

Tensor Dataset::feature_matrix(std::span<const std::size_t> rows) const {
  std::vector<double> values;
  values.reserve(rows.size() * feature_dim_);
  for (auto r : rows) values.insert(values.end(), samples_[r].features.begin(), samples_[r].features.end());
  return Tensor::from_values({rows.size(), feature_dim_}, std::move(values));
}

Tensor Dataset::attribute_matrix(std::span<const std::size_t> rows) const {
  if (!labelled_) throw LabelLeakError("attribute labels requested from a label-stripped dataset");
  std::vector<double> values;
  values.reserve(rows.size() * num_attributes_);
  for (auto r : rows) values.insert(values.end(), samples_[r].attributes.begin(), samples_[r].attributes.end());
  return Tensor::from_values({rows.size(), num_attributes_}, std::move(values));
}

// ---- generation ----------------------------------------------------------

void GenConfig::validate() const {
  if (n_identities == 0) throw ConfigError("gen.n_identities", "must be positive");
  if (images_per_camera == 0) throw ConfigError("gen.images_per_camera", "must be positive");
  if (n_cameras < 2) {
    throw ConfigError("gen.n_cameras", "needs at least 2 cameras so every identity has cross-view pairs");
  }
  if (num_attributes == 0) throw ConfigError("gen.num_attributes", "must be positive");
  if (input_dim == 0) throw ConfigError("gen.input_dim", "must be positive");
  auto finite_nonneg = [](const char* field, double v) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError(field, "must be finite and non-negative");
  };
  finite_nonneg("gen.prototype_scale", prototype_scale);
  finite_nonneg("gen.attribute_strength", attribute_strength);
  finite_nonneg("gen.camera_noise", camera_noise);
  finite_nonneg("gen.sample_noise", sample_noise);
  finite_nonneg("gen.domain_shift", domain_shift);
}

namespace {

using Matrix = std::vector<std::vector<double>>;

struct Affine {
  Matrix a;
  std::vector<double> b;

  std::vector<double> apply(const std::vector<double>& x) const {
    std::vector<double> y(b);
    for (std::size_t i = 0; i < y.size(); ++i)
      for (std::size_t j = 0; j < x.size(); ++j) y[i] += a[i][j] * x[j];
    return y;
  }
};

// I + scale * G / sqrt(D), bias scale * N(0, 1).
Affine random_affine(std::size_t dim, double scale, SeededRng& rng) {
  Affine t;
  t.a.assign(dim, std::vector<double>(dim, 0.0));
  const double s = scale / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) t.a[i][j] = (i == j ? 1.0 : 0.0) + s * rng.normal();
  t.b.resize(dim);
  for (auto& v : t.b) v = scale * rng.normal();
  return t;
}

// Attribute j lives on its own contiguous block of coordinates.
Matrix attribute_offsets(const GenConfig& c, SeededRng& rng) {
  Matrix offsets(c.num_attributes, std::vector<double>(c.input_dim, 0.0));
  const std::size_t block = std::max<std::size_t>(1, c.input_dim / c.num_attributes);
  for (std::size_t j = 0; j < c.num_attributes; ++j) {
    const std::size_t begin = (j * block) % c.input_dim;
    for (std::size_t k = 0; k < block && begin + k < c.input_dim; ++k) {
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      offsets[j][begin + k] = sign * c.attribute_strength * rng.uniform(0.5, 1.5);
    }
  }
  return offsets;
}

std::vector<Sample> generate_domain(const GenConfig& c, Domain domain, int first_id,
                                    const Matrix& offsets, SeededRng rng) {
  std::vector<Affine> cameras;
  for (std::size_t k = 0; k < c.n_cameras; ++k) cameras.push_back(random_affine(c.input_dim, c.camera_noise, rng));

  std::vector<Sample> samples;
  samples.reserve(c.n_identities * c.n_cameras * c.images_per_camera);
  for (std::size_t id = 0; id < c.n_identities; ++id) {
    std::vector<double> prototype(c.input_dim);
    for (auto& v : prototype) v = c.prototype_scale * rng.normal();
    std::vector<double> attrs(c.num_attributes);
    for (auto& a : attrs) a = rng.bernoulli(0.5) ? 1.0 : 0.0;

    for (std::size_t cam = 0; cam < c.n_cameras; ++cam) {
      const auto viewed = cameras[cam].apply(prototype);
      for (std::size_t img = 0; img < c.images_per_camera; ++img) {
        Sample s;
        s.features = viewed;
        for (std::size_t j = 0; j < c.num_attributes; ++j) {
          const double sign = attrs[j] > 0.5 ? 1.0 : -1.0;
          for (std::size_t d = 0; d < c.input_dim; ++d) s.features[d] += sign * offsets[j][d];
        }
        for (auto& v : s.features) v += c.sample_noise * rng.normal();
        s.identity = first_id + static_cast<int>(id);
        s.attributes = attrs;
        s.camera = static_cast<int>(cam);
        s.domain = domain;
        samples.push_back(std::move(s));
      }
    }
  }
  return samples;
}

}  // namespace

DatasetPair generate_pair(const GenConfig& config) {
  config.validate();
  SeededRng root(config.seed);
  SeededRng world = root.fork("world");
  const Matrix offsets = attribute_offsets(config, world);

  const int n = static_cast<int>(config.n_identities);
  auto source = generate_domain(config, Domain::kSource, 1, offsets, root.fork("domain/source"));
  auto target = generate_domain(config, Domain::kTarget, n + 1, offsets, root.fork("domain/target"));

  // The perturbation is drawn independently of its magnitude, so target
  // samples move along fixed directions as domain_shift grows.
  SeededRng shift_rng = root.fork("shift");
  Affine shift = random_affine(config.input_dim, 1.0, shift_rng);
  if (config.domain_shift > 0.0) {
    for (auto& s : target) {
      std::vector<double> moved = s.features;
      for (std::size_t i = 0; i < moved.size(); ++i) {
        double delta = shift.b[i];
        for (std::size_t j = 0; j < moved.size(); ++j)
          delta += (shift.a[i][j] - (i == j ? 1.0 : 0.0)) * s.features[j];
        moved[i] += config.domain_shift * delta;
      }
      s.features = std::move(moved);
    }
  }
  return {Dataset(std::move(source), config.num_attributes, config.input_dim),
          Dataset(std::move(target), config.num_attributes, config.input_dim)};
}

double domain_gap(const Dataset& a, const Dataset& b) {
  if (a.empty() || b.empty() || a.feature_dim() != b.feature_dim())
    throw ContractViolation("domain_gap: datasets must be non-empty with equal feature_dim");
  std::vector<double> ca(a.feature_dim(), 0.0), cb(b.feature_dim(), 0.0);
  for (const auto& s : a.samples())
    for (std::size_t i = 0; i < ca.size(); ++i) ca[i] += s.features[i];
  for (const auto& s : b.samples())
    for (std::size_t i = 0; i < cb.size(); ++i) cb[i] += s.features[i];
  double d = 0.0;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    const double diff = ca[i] / static_cast<double>(a.size()) - cb[i] / static_cast<double>(b.size());
    d += diff * diff;
  }
  return std::sqrt(d);
}

// ---- file I/O ------------------------------------------------------------

namespace {

bool is_gzip(const std::filesystem::path& path) { return path.extension() == ".gz"; }

void append_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::string content;
  if (is_gzip(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw Error("cannot open " + path.string());
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(f, buf, sizeof buf)) > 0) content.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw Error("gzip read failed: " + path.string());
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    content = ss.str();
  }
  std::vector<std::string> lines;
  std::istringstream is(content);
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (is_gzip(path)) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw Error("cannot write " + path.string());
    const int written = text.empty() ? 0 : gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
    gzclose(f);
    if (written != static_cast<int>(text.size())) throw Error("gzip write failed: " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string format_sample(const Sample& s) {
  std::string out = "{\"id\":" + std::to_string(s.identity) + ",\"cam\":" + std::to_string(s.camera) +
                    ",\"domain\":\"" + domain_name(s.domain) + "\",\"attrs\":[";
  for (std::size_t j = 0; j < s.attributes.size(); ++j) {
    if (j) out += ',';
    out += s.attributes[j] > 0.5 ? '1' : '0';
  }
  out += "],\"feat\":[";
  for (std::size_t j = 0; j < s.features.size(); ++j) {
    if (j) out += ',';
    append_double(out, s.features[j]);
  }
  out += "]}";
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  if (!dataset.labelled()) throw ContractViolation("label-stripped datasets are not serialisable");
  std::string text;
  for (const auto& s : dataset.samples()) {
    text += format_sample(s);
    text += '\n';
  }
  write_text(path, text);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  std::vector<Sample> samples;
  std::size_t m = 0, dim = 0;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    const auto& line = lines[n];
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    Sample s;
    try {
      s.identity = j.at("id").get<int>();
      s.camera = j.at("cam").get<int>();
      s.domain = parse_domain(j.at("domain").get<std::string>());
      for (const auto& a : j.at("attrs")) {
        const int bit = a.get<int>();
        if (bit != 0 && bit != 1) throw SchemaError("attribute values must be 0 or 1", line_no);
        s.attributes.push_back(bit);
      }
      s.features = j.at("feat").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("bad record: ") + e.what(), line_no);
    } catch (const SchemaError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no);
    }
    if (samples.empty()) {
      m = s.attributes.size();
      dim = s.features.size();
      if (dim == 0) throw SchemaError("empty feature vector", line_no);
    } else if (s.attributes.size() != m) {
      throw SchemaError("attrs has " + std::to_string(s.attributes.size()) + " entries, expected " +
                            std::to_string(m),
                        line_no);
    } else if (s.features.size() != dim) {
      throw SchemaError("feat has " + std::to_string(s.features.size()) + " entries, expected " +
                            std::to_string(dim),
                        line_no);
    }
    samples.push_back(std::move(s));
  }
  return Dataset(std::move(samples), m, dim);
}

// ---- sampling ------------------------------------------------------------

BatchSampler::BatchSampler(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size), rng_(seed) {
  if (dataset.empty()) throw ContractViolation("batch sampler: empty dataset");
  if (batch_size == 0 || batch_size > dataset.size())
    throw ContractViolation("batch sampler: batch size must lie in [1, dataset size]");
  if (dataset.labelled()) classes_ = dataset.class_indices();
  order_.resize(dataset.size());
  reshuffle();
}

void BatchSampler::reshuffle() {
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  rng_.shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
}

std::size_t BatchSampler::batches_per_epoch() const noexcept {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

Batch BatchSampler::next() {
  if (cursor_ >= order_.size()) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  Batch b;
  b.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                   order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  b.features = dataset_->feature_matrix(b.indices);
  b.labelled = dataset_->labelled();
  if (b.labelled) {
    for (auto i : b.indices) b.classes.push_back(classes_[i]);
    b.attributes = dataset_->attribute_matrix(b.indices);
  }
  return b;
}

}  // namespace tjaidl

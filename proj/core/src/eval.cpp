#include "tjaidl/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <utility>

#include <nlohmann/json.hpp>

#include "tjaidl/error.hpp"

namespace tjaidl {

double RetrievalReport::rank(std::size_t k) const {
  if (cmc.empty() || k == 0) return 0.0;
  return cmc[std::min(k, cmc.size()) - 1];
}

FeatureMatrix to_feature_matrix(const Tensor& t) {
  FeatureMatrix m;
  m.rows = t.rows();
  m.cols = t.cols();
  m.values.assign(t.values().begin(), t.values().end());
  return m;
}

FeatureMatrix extract_features(const ModelParams& params, Mode mode, const Dataset& dataset) {
  NoGradGuard no_grad;
  constexpr std::size_t kChunk = 256;
  FeatureMatrix out;
  out.cols = params.config.feature_dim() * (mode == Mode::kIndependent ? 2 : 1);
  for (std::size_t begin = 0; begin < dataset.size(); begin += kChunk) {
    std::vector<std::size_t> rows;
    for (std::size_t i = begin; i < std::min(dataset.size(), begin + kChunk); ++i) rows.push_back(i);
    Tensor f = deployment_features(params, mode, dataset.feature_matrix(rows));
    if (f.cols() != out.cols) throw InvalidShapeError("unexpected deployment feature width");
    out.values.insert(out.values.end(), f.values().begin(), f.values().end());
    out.rows += rows.size();
  }
  return out;
}

RetrievalReport evaluate_retrieval(const RetrievalSet& query, const RetrievalSet& gallery,
                                   const Protocol& protocol) {
  const auto& qf = query.features;
  const auto& gf = gallery.features;
  if (qf.rows != query.identities.size() || qf.rows != query.cameras.size() ||
      gf.rows != gallery.identities.size() || gf.rows != gallery.cameras.size()) {
    throw InvalidShapeError("retrieval set: label count does not match feature rows");
  }
  if (qf.rows > 0 && gf.rows > 0 && qf.cols != gf.cols) {
    throw InvalidShapeError("retrieval set: query width " + std::to_string(qf.cols) +
                            " vs gallery width " + std::to_string(gf.cols));
  }

  const std::size_t curve = protocol.max_rank ? protocol.max_rank : gf.rows;
  std::vector<double> hits(curve, 0.0);
  RetrievalReport report;
  double ap_sum = 0.0;

  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t q = 0; q < qf.rows; ++q) {
    ranked.clear();
    const auto qrow = qf.row(q);
    for (std::size_t g = 0; g < gf.rows; ++g) {
      const bool same_id = gallery.identities[g] == query.identities[q];
      if (same_id && gallery.cameras[g] == query.cameras[q]) continue;
      const auto grow = gf.row(g);
      double d = 0.0;
      for (std::size_t c = 0; c < qf.cols; ++c) {
        const double diff = qrow[c] - grow[c];
        d += diff * diff;
      }
      ranked.emplace_back(d, g);
    }
    std::sort(ranked.begin(), ranked.end());

    std::size_t n_relevant = 0;
    std::size_t first_hit = 0;
    double precision_sum = 0.0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (gallery.identities[ranked[r].second] != query.identities[q]) continue;
      ++n_relevant;
      if (n_relevant == 1) first_hit = r + 1;
      precision_sum += static_cast<double>(n_relevant) / static_cast<double>(r + 1);
    }
    if (n_relevant == 0) {
      ++report.n_skipped;
      continue;
    }
    ++report.n_queries;
    ap_sum += precision_sum / static_cast<double>(n_relevant);
    if (first_hit <= curve) hits[first_hit - 1] += 1.0;
  }

  report.cmc.assign(curve, 0.0);
  if (report.n_queries > 0) {
    const double n = static_cast<double>(report.n_queries);
    double cumulative = 0.0;
    for (std::size_t k = 0; k < curve; ++k) {
      cumulative += hits[k];
      report.cmc[k] = cumulative / n;
    }
    report.map = ap_sum / n;
  }
  return report;
}

RetrievalReport evaluate(const FeatureMatrix& features, const Dataset& dataset, const Protocol& protocol) {
  if (!dataset.labelled()) throw LabelLeakError("evaluation needs identity labels");
  if (features.rows != dataset.size()) {
    throw InvalidShapeError("evaluate: " + std::to_string(features.rows) + " feature rows for " +
                            std::to_string(dataset.size()) + " samples");
  }
  RetrievalSet query, gallery;
  query.features.cols = gallery.features.cols = features.cols;
  std::map<std::pair<int, int>, bool> seen;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    const bool is_query = seen.emplace(std::make_pair(s.identity, s.camera), true).second;
    RetrievalSet& dst = is_query ? query : gallery;
    const auto row = features.row(i);
    dst.features.values.insert(dst.features.values.end(), row.begin(), row.end());
    ++dst.features.rows;
    dst.identities.push_back(s.identity);
    dst.cameras.push_back(s.camera);
  }
  return evaluate_retrieval(query, gallery, protocol);
}

double consistency_score(const Tensor& iia_probs, const Tensor& att_probs) {
  if (iia_probs.shape() != att_probs.shape() || iia_probs.ndim() != 2) {
    throw InvalidShapeError("consistency: shape mismatch " + shape_string(iia_probs.shape()) + " vs " +
                            shape_string(att_probs.shape()));
  }
  const auto a = iia_probs.values();
  const auto b = att_probs.values();
  const std::size_t n = iia_probs.rows(), m = iia_probs.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double d = a[i * m + j] - b[i * m + j];
      row += d * d;
    }
    total += row / static_cast<double>(m);
  }
  return total / static_cast<double>(n);
}

double attribute_consistency(const ModelParams& params, const Dataset& dataset) {
  if (dataset.empty()) return 0.0;
  NoGradGuard no_grad;
  Tensor x = dataset.feature_matrix();
  auto att = forward_attribute(params, x);
  auto id = forward_identity(params, x);
  auto iia = forward_iia(params, detach(id.feature));
  return consistency_score(iia.probs, att.probs);
}

double attribute_accuracy_score(const Tensor& att_probs, const Tensor& labels) {
  if (att_probs.shape() != labels.shape()) {
    throw InvalidShapeError("attribute accuracy: shape mismatch " + shape_string(att_probs.shape()) +
                            " vs " + shape_string(labels.shape()));
  }
  const auto p = att_probs.values();
  const auto a = labels.values();
  std::size_t agree = 0;
  for (std::size_t i = 0; i < p.size(); ++i) agree += ((p[i] > 0.5) == (a[i] > 0.5)) ? 1 : 0;
  return static_cast<double>(agree) / static_cast<double>(p.size());
}

double attribute_accuracy(const ModelParams& params, Mode mode, const Dataset& dataset) {
  if (!dataset.labelled()) throw ContractViolation("attribute accuracy needs labelled data");
  if (dataset.empty()) throw ContractViolation("attribute accuracy on an empty dataset");
  NoGradGuard no_grad;
  std::vector<std::size_t> rows(dataset.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  Tensor probs = sigmoid(attribute_logits(params, mode, dataset.feature_matrix(rows)));
  return attribute_accuracy_score(probs, dataset.attribute_matrix(rows));
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string format_report_table(const RetrievalReport& r) {
  std::string out = "metric, value\n";
  for (std::size_t k : {1, 5, 10, 20}) out += "rank" + std::to_string(k) + ", " + fixed(r.rank(k)) + "\n";
  out += "mAP, " + fixed(r.map) + "\n";
  out += "queries, " + std::to_string(r.n_queries) + "\n";
  out += "skipped_queries, " + std::to_string(r.n_skipped) + "\n";
  if (r.consistency) out += "consistency, " + fixed(*r.consistency) + "\n";
  if (r.attribute_accuracy) out += "attribute_accuracy, " + fixed(*r.attribute_accuracy) + "\n";
  return out;
}

std::string format_report_json(const RetrievalReport& r) {
  nlohmann::ordered_json j;
  j["rank1"] = r.rank(1);
  j["rank5"] = r.rank(5);
  j["rank10"] = r.rank(10);
  j["rank20"] = r.rank(20);
  j["map"] = r.map;
  j["queries"] = r.n_queries;
  j["skipped_queries"] = r.n_skipped;
  if (r.consistency) j["consistency"] = *r.consistency;
  if (r.attribute_accuracy) j["attribute_accuracy"] = *r.attribute_accuracy;
  j["cmc"] = r.cmc;
  return j.dump();
}

std::string format_cmc_curve(const RetrievalReport& r) {
  std::string out = "rank,value\n";
  for (std::size_t k = 0; k < r.cmc.size(); ++k) out += std::to_string(k + 1) + "," + fixed(r.cmc[k]) + "\n";
  return out;
}

}  // namespace tjaidl

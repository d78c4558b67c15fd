#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tjaidl/data.hpp"
#include "tjaidl/model.hpp"

namespace tjaidl {

/// Dense row-major feature rows, detached from any graph.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

struct RetrievalReport {
  /// cmc[k - 1] is the rank-k matching rate.
  std::vector<double> cmc;
  double map = 0.0;
  std::size_t n_queries = 0;
  /// Queries without any relevant gallery item; excluded from both metrics.
  std::size_t n_skipped = 0;
  std::optional<double> consistency;
  std::optional<double> attribute_accuracy;

  /// Rank-k rate; ranks past the curve return its last value.
  double rank(std::size_t k) const;
};

/// One side of a retrieval problem.
struct RetrievalSet {
  FeatureMatrix features;
  std::vector<int> identities;
  std::vector<int> cameras;
};

/// Single-query protocol: the first image of each (identity, camera) pair,
/// in dataset order, is a query; every other image forms the gallery.
struct Protocol {
  /// Length of the reported CMC curve; 0 keeps the full gallery length.
  std::size_t max_rank = 0;
};

FeatureMatrix to_feature_matrix(const Tensor& t);

/// Deployment features of every sample, in dataset order.
FeatureMatrix extract_features(const ModelParams& params, Mode mode, const Dataset& dataset);

/// Ranks the gallery by ascending squared L2 distance per query, ties broken
/// by gallery index. Gallery items sharing the query's identity and camera
/// are dropped; relevant items share the identity only.
RetrievalReport evaluate_retrieval(const RetrievalSet& query, const RetrievalSet& gallery,
                                   const Protocol& protocol = {});

/// Splits a labelled dataset per Protocol and evaluates its features.
RetrievalReport evaluate(const FeatureMatrix& features, const Dataset& dataset,
                         const Protocol& protocol = {});

/// Mean over samples of the mean squared gap between the two attribute
/// views. Lower means the model fits the data better.
double consistency_score(const Tensor& iia_probs, const Tensor& att_probs);
double attribute_consistency(const ModelParams& params, const Dataset& dataset);

/// Fraction of (sample, attribute) pairs where p > 0.5 agrees with the label.
double attribute_accuracy_score(const Tensor& att_probs, const Tensor& labels);
double attribute_accuracy(const ModelParams& params, Mode mode, const Dataset& dataset);

/// "metric, value" lines: rank1/5/10/20, mAP, queries and optional scores.
std::string format_report_table(const RetrievalReport& report);
/// One-line JSON record.
std::string format_report_json(const RetrievalReport& report);
/// "rank,value" lines for plotting.
std::string format_cmc_curve(const RetrievalReport& report);

}  // namespace tjaidl

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tjaidl/config.hpp"
#include "tjaidl/eval.hpp"

namespace tjaidl {

struct CellResult {
  Mode mode = Mode::kTjAidl;
  std::uint64_t seed = 0;
  RetrievalReport target;
};

struct ComparisonResult {
  std::vector<Mode> modes;
  std::vector<std::uint64_t> seeds;
  /// Mode-major, then seed, regardless of completion order.
  std::vector<CellResult> cells;

  const CellResult& cell(Mode mode, std::uint64_t seed) const;
};

/// Datasets for one seed: loaded from the experiment's paths, or generated with
/// its GenConfig reseeded to `seed`.
DatasetPair experiment_data(const ExperimentSpec& spec, std::uint64_t seed);

/// Retrieval metrics on a labelled dataset, plus the attribute consistency
/// (tj-aidl) and attribute accuracy (modes with an attribute head).
RetrievalReport evaluate_model(const ModelParams& params, Mode mode, const Dataset& dataset,
                               const Protocol& protocol = {});

/// Trains `mode` with the training seed set to `seed` and evaluates on the
/// labelled target.
CellResult run_cell(const ExperimentSpec& spec, const DatasetPair& data, Mode mode, std::uint64_t seed);

/// Every (mode, seed) cell, using up to `threads` workers (0 = hardware).
ComparisonResult run_comparison(const ExperimentSpec& spec, std::size_t threads = 0);

/// Per-mode means across seeds: mode, Rank1, Rank5, Rank10, Rank20, mAP.
std::string format_comparison_table(const ComparisonResult& result);
/// One JSON object per cell.
std::string format_comparison_records(const ComparisonResult& result);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace tjaidl

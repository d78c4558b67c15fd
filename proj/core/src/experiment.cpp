#include "tjaidl/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "tjaidl/error.hpp"

namespace tjaidl {

const CellResult& ComparisonResult::cell(Mode mode, std::uint64_t seed) const {
  for (const auto& c : cells)
    if (c.mode == mode && c.seed == seed) return c;
  throw ContractViolation(std::string("no cell for mode ") + mode_name(mode) + " seed " + std::to_string(seed));
}

DatasetPair experiment_data(const ExperimentSpec& spec, std::uint64_t seed) {
  if (spec.source_path && spec.target_path) {
    return {load_dataset(*spec.source_path), load_dataset(*spec.target_path)};
  }
  GenConfig gen = spec.gen;
  gen.seed = seed;
  return generate_pair(gen);
}

RetrievalReport evaluate_model(const ModelParams& params, Mode mode, const Dataset& dataset,
                               const Protocol& protocol) {
  RetrievalReport report = evaluate(extract_features(params, mode, dataset), dataset, protocol);
  if (mode == Mode::kTjAidl) report.consistency = attribute_consistency(params, dataset.strip_labels());
  if (mode != Mode::kIdOnly) report.attribute_accuracy = attribute_accuracy(params, mode, dataset);
  return report;
}

CellResult run_cell(const ExperimentSpec& spec, const DatasetPair& data, Mode mode, std::uint64_t seed) {
  TrainConfig cfg = spec.train;
  cfg.mode = mode;
  cfg.seed = seed;
  TrainReport report = run(cfg, data.source, data.target);

  CellResult cell;
  cell.mode = mode;
  cell.seed = seed;
  cell.target = evaluate_model(report.checkpoint.params, mode, data.target, spec.protocol);
  return cell;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

ComparisonResult run_comparison(const ExperimentSpec& spec, std::size_t threads) {
  spec.validate();
  ComparisonResult result;
  result.modes = spec.modes;
  result.seeds = spec.seeds;

  std::vector<DatasetPair> data(spec.seeds.size());
  parallel_for(spec.seeds.size(), threads, [&](std::size_t i) { data[i] = experiment_data(spec, spec.seeds[i]); });

  const std::size_t n_seeds = spec.seeds.size();
  result.cells.resize(spec.modes.size() * n_seeds);
  parallel_for(result.cells.size(), threads, [&](std::size_t i) {
    const Mode mode = spec.modes[i / n_seeds];
    const std::size_t s = i % n_seeds;
    result.cells[i] = run_cell(spec, data[s], mode, spec.seeds[s]);
  });
  return result;
}

std::string format_comparison_table(const ComparisonResult& result) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %8s %8s %8s %8s %8s\n", "mode", "Rank1", "Rank5", "Rank10", "Rank20", "mAP");
  out += buf;
  for (Mode mode : result.modes) {
    double r1 = 0, r5 = 0, r10 = 0, r20 = 0, map = 0;
    for (auto seed : result.seeds) {
      const auto& r = result.cell(mode, seed).target;
      r1 += r.rank(1);
      r5 += r.rank(5);
      r10 += r.rank(10);
      r20 += r.rank(20);
      map += r.map;
    }
    const double n = static_cast<double>(result.seeds.size());
    std::snprintf(buf, sizeof buf, "%-14s %8.2f %8.2f %8.2f %8.2f %8.2f\n", mode_name(mode), 100 * r1 / n,
                  100 * r5 / n, 100 * r10 / n, 100 * r20 / n, 100 * map / n);
    out += buf;
  }
  return out;
}

std::string format_comparison_records(const ComparisonResult& result) {
  std::string out;
  for (const auto& c : result.cells) {
    nlohmann::ordered_json j;
    j["mode"] = mode_name(c.mode);
    j["seed"] = c.seed;
    j["report"] = nlohmann::ordered_json::parse(format_report_json(c.target));
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace tjaidl

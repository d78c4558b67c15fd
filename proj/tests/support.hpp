#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <unistd.h>

#include "tjaidl/eval.hpp"
#include "tjaidl/rng.hpp"
#include "tjaidl/tensor.hpp"

namespace tjaidl::test {

inline Tensor random_tensor(Shape shape, SeededRng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

// Norm-wise relative error between the analytic gradient of every tensor
// in `params` and a central finite difference of `loss`, with step
// h * max(1, |theta|).
inline double gradient_error(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                             double h = 1e-6) {
  for (auto& p : params) p.zero_grad();
  backward(loss());
  double diff2 = 0.0, norm_a = 0.0, norm_n = 0.0;
  for (auto& p : params) {
    std::vector<double> analytic(p.size(), 0.0);
    if (p.has_grad()) analytic.assign(p.grad().begin(), p.grad().end());
    auto values = p.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      const double step = h * std::max(1.0, std::abs(saved));
      double plus, minus;
      {
        NoGradGuard g;
        values[i] = saved + step;
        plus = loss().item();
        values[i] = saved - step;
        minus = loss().item();
      }
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      norm_a += analytic[i] * analytic[i];
      norm_n += numeric * numeric;
    }
    p.zero_grad();
  }
  const double denom = std::sqrt(norm_a) + std::sqrt(norm_n);
  return denom < 1e-12 ? std::sqrt(diff2) : std::sqrt(diff2) / denom;
}

// Brute-force retrieval metrics. Each gallery item's rank is counted
// directly (items closer, or equally close with a lower index, come first)
// instead of sorting.
struct OracleResult {
  std::vector<double> cmc;
  double map = 0.0;
  std::size_t n_queries = 0;
  std::size_t n_skipped = 0;
};

inline OracleResult retrieval_oracle(const RetrievalSet& q, const RetrievalSet& g, std::size_t curve) {
  OracleResult r;
  std::vector<double> first_hits(curve, 0.0);
  double ap_total = 0.0;
  for (std::size_t i = 0; i < q.features.rows; ++i) {
    std::vector<std::size_t> kept;
    std::vector<double> dist;
    for (std::size_t j = 0; j < g.features.rows; ++j) {
      if (g.identities[j] == q.identities[i] && g.cameras[j] == q.cameras[i]) continue;
      double d = 0.0;
      for (std::size_t c = 0; c < q.features.cols; ++c) {
        const double t = q.features.values[i * q.features.cols + c] - g.features.values[j * g.features.cols + c];
        d += t * t;
      }
      kept.push_back(j);
      dist.push_back(d);
    }
    std::map<std::size_t, bool> relevant_at_rank;
    for (std::size_t a = 0; a < kept.size(); ++a) {
      std::size_t rank = 1;
      for (std::size_t b = 0; b < kept.size(); ++b) {
        if (dist[b] < dist[a] || (dist[b] == dist[a] && kept[b] < kept[a])) ++rank;
      }
      relevant_at_rank[rank] = g.identities[kept[a]] == q.identities[i];
    }
    std::size_t hits = 0;
    double ap = 0.0;
    std::size_t first = 0;
    for (const auto& [rank, rel] : relevant_at_rank) {
      if (!rel) continue;
      ++hits;
      if (first == 0) first = rank;
      ap += static_cast<double>(hits) / static_cast<double>(rank);
    }
    if (hits == 0) {
      ++r.n_skipped;
      continue;
    }
    ++r.n_queries;
    ap_total += ap / static_cast<double>(hits);
    if (first <= curve) first_hits[first - 1] += 1.0;
  }
  r.cmc.assign(curve, 0.0);
  if (r.n_queries == 0) return r;
  double acc = 0.0;
  for (std::size_t k = 0; k < curve; ++k) {
    acc += first_hits[k];
    r.cmc[k] = acc / static_cast<double>(r.n_queries);
  }
  r.map = ap_total / static_cast<double>(r.n_queries);
  return r;
}

inline RetrievalSet random_retrieval_set(std::size_t rows, std::size_t cols, int n_ids, int n_cams,
                                         SeededRng& rng, bool quantize = false) {
  RetrievalSet s;
  s.features.rows = rows;
  s.features.cols = cols;
  for (std::size_t i = 0; i < rows * cols; ++i) {
    double v = rng.uniform(-1.0, 1.0);
    // Coarse values make exact distance ties common.
    if (quantize) v = std::round(v * 2.0);
    s.features.values.push_back(v);
  }
  for (std::size_t i = 0; i < rows; ++i) {
    s.identities.push_back(static_cast<int>(rng.index(static_cast<std::uint64_t>(n_ids))));
    s.cameras.push_back(static_cast<int>(rng.index(static_cast<std::uint64_t>(n_cams))));
  }
  return s;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("tjaidl-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  static std::size_t& counter() {
    static std::size_t c = 0;
    return c;
  }
  std::filesystem::path path_;
};

}  // namespace tjaidl::test

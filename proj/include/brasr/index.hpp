#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace brasr {

// Exact flat inner-product index over pre-normalized embeddings.
// Row-major contiguous so a query is one cache-friendly pass.
struct RetrievalIndex {
  int dim = 0;
  std::vector<std::int64_t> ids;  // ascending
  std::vector<float> matrix;      // ids.size() x dim, row-major

  std::size_t size() const { return ids.size(); }
  const float* row(std::size_t i) const { return matrix.data() + i * dim; }
};

struct ScoredId {
  std::int64_t id;
  float score;
};

// Scores non-increasing; ties broken by ascending id; length min(K, n).
using QueryResult = std::vector<ScoredId>;

// Rows are L2-normalized at build time; zero vectors are rejected and
// dimensions must agree. Row order is ascending id.
RetrievalIndex build_index(
    const std::vector<std::pair<std::int64_t, Eigen::VectorXd>>& embeddings);

QueryResult query(const RetrievalIndex& index, const float* q, int k);
QueryResult query(const RetrievalIndex& index, const Eigen::VectorXd& q, int k);

std::vector<QueryResult> batch_query(const RetrievalIndex& index,
                                     const std::vector<std::vector<float>>& queries,
                                     int k);

// Index file: magic 'BRIX', u32 version, u64 n, u32 d, ids as i64 LE,
// matrix as f32 LE row-major. Round-trip is bit exact.
void save_index(const RetrievalIndex& index, const std::string& path);
RetrievalIndex load_index(const std::string& path);

struct BenchStats {
  std::size_t n = 0;
  int dim = 0;
  int k = 0;
  int threads = 1;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double mean_ms = 0.0;
  double qps = 0.0;
};

// Wall clock over `repetitions` passes of the query list; the first pass is
// warmup and is not counted.
BenchStats bench(const RetrievalIndex& index,
                 const std::vector<std::vector<float>>& queries, int k,
                 int repetitions);

// 100 * (1 - K / n_total).
double pruning_rate(std::int64_t k, std::int64_t n_total);

}  // namespace brasr

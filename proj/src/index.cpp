#include "brasr/index.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include "brasr/errors.hpp"

namespace brasr {

namespace {

// Unrolled with independent accumulators so the compiler can vectorize the
// reduction without -ffast-math.
float dot_f32(const float* a, const float* b, int dim) {
  float acc0 = 0.f, acc1 = 0.f, acc2 = 0.f, acc3 = 0.f;
  float acc4 = 0.f, acc5 = 0.f, acc6 = 0.f, acc7 = 0.f;
  int i = 0;
  for (; i + 8 <= dim; i += 8) {
    acc0 += a[i + 0] * b[i + 0];
    acc1 += a[i + 1] * b[i + 1];
    acc2 += a[i + 2] * b[i + 2];
    acc3 += a[i + 3] * b[i + 3];
    acc4 += a[i + 4] * b[i + 4];
    acc5 += a[i + 5] * b[i + 5];
    acc6 += a[i + 6] * b[i + 6];
    acc7 += a[i + 7] * b[i + 7];
  }
  float acc = ((acc0 + acc1) + (acc2 + acc3)) + ((acc4 + acc5) + (acc6 + acc7));
  for (; i < dim; ++i) acc += a[i] * b[i];
  return acc;
}

// Total order: higher score first, then smaller id.
bool better(const ScoredId& a, const ScoredId& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

}  // namespace

RetrievalIndex build_index(
    const std::vector<std::pair<std::int64_t, Eigen::VectorXd>>& embeddings) {
  if (embeddings.empty()) throw InvalidInputError("build_index: no embeddings");
  std::vector<std::size_t> order(embeddings.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return embeddings[a].first < embeddings[b].first;
  });

  RetrievalIndex index;
  index.dim = static_cast<int>(embeddings.front().second.size());
  index.ids.reserve(embeddings.size());
  index.matrix.resize(embeddings.size() * index.dim);

  std::int64_t prev_id = -1;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& [id, emb] = embeddings[order[r]];
    if (id == prev_id)
      throw InvalidInputError("build_index: duplicate id " + std::to_string(id));
    prev_id = id;
    if (static_cast<int>(emb.size()) != index.dim)
      throw InvalidInputError("build_index: embedding dimension mismatch");
    double norm = emb.norm();
    if (!(norm > 1e-12))
      throw DegenerateInputError("build_index: zero embedding for id " +
                                 std::to_string(id));
    index.ids.push_back(id);
    float* row = index.matrix.data() + r * index.dim;
    for (int j = 0; j < index.dim; ++j)
      row[j] = static_cast<float>(emb[j] / norm);
  }
  return index;
}

QueryResult query(const RetrievalIndex& index, const float* q, int k) {
  if (index.size() == 0) throw InvalidInputError("query: empty index");
  if (k < 1) throw InvalidInputError("query: K must be >= 1");
  const std::size_t n = index.size();
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), n);

  // Bounded heap ordered so the worst kept element is on top.
  QueryResult heap;
  heap.reserve(keep + 1);
  auto worse_on_top = [](const ScoredId& a, const ScoredId& b) {
    return better(a, b);  // max-heap under "worse" == min-heap under "better"
  };
  for (std::size_t i = 0; i < n; ++i) {
    ScoredId cand{index.ids[i], dot_f32(q, index.row(i), index.dim)};
    if (heap.size() < keep) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end(), worse_on_top);
    } else if (better(cand, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), worse_on_top);
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end(), worse_on_top);
    }
  }
  std::sort(heap.begin(), heap.end(), better);
  return heap;
}

QueryResult query(const RetrievalIndex& index, const Eigen::VectorXd& q, int k) {
  std::vector<float> qf(q.size());
  for (int i = 0; i < q.size(); ++i) qf[i] = static_cast<float>(q[i]);
  return query(index, qf.data(), k);
}

std::vector<QueryResult> batch_query(
    const RetrievalIndex& index, const std::vector<std::vector<float>>& queries,
    int k) {
  std::vector<QueryResult> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i)
    out[i] = query(index, queries[i].data(), k);
  return out;
}

void save_index(const RetrievalIndex& index, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  const char magic[4] = {'B', 'R', 'I', 'X'};
  std::uint32_t version = 1;
  std::uint64_t n = index.size();
  std::uint32_t d = static_cast<std::uint32_t>(index.dim);
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(&d), 4);
  out.write(reinterpret_cast<const char*>(index.ids.data()),
            static_cast<std::streamsize>(n * 8));
  out.write(reinterpret_cast<const char*>(index.matrix.data()),
            static_cast<std::streamsize>(n * d * 4));
  if (!out) throw IoError("write failed: " + path);
}

RetrievalIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  std::uint32_t version = 0, d = 0;
  std::uint64_t n = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&n), 8);
  in.read(reinterpret_cast<char*>(&d), 4);
  if (!in || std::memcmp(magic, "BRIX", 4) != 0 || version != 1)
    throw IoError("bad index file: " + path);
  RetrievalIndex index;
  index.dim = static_cast<int>(d);
  index.ids.resize(n);
  index.matrix.resize(n * d);
  in.read(reinterpret_cast<char*>(index.ids.data()),
          static_cast<std::streamsize>(n * 8));
  in.read(reinterpret_cast<char*>(index.matrix.data()),
          static_cast<std::streamsize>(n * d * 4));
  if (!in) throw IoError("truncated index file: " + path);
  return index;
}

BenchStats bench(const RetrievalIndex& index,
                 const std::vector<std::vector<float>>& queries, int k,
                 int repetitions) {
  if (queries.empty()) throw InvalidInputError("bench: empty query list");
  if (repetitions < 1) throw InvalidInputError("bench: repetitions must be >= 1");

  using Clock = std::chrono::steady_clock;
  // Warmup pass, not timed.
  for (const auto& q : queries) (void)query(index, q.data(), k);

  std::vector<double> per_query_ms;
  per_query_ms.reserve(queries.size() * repetitions);
  for (int rep = 0; rep < repetitions; ++rep) {
    for (const auto& q : queries) {
      auto t0 = Clock::now();
      (void)query(index, q.data(), k);
      auto t1 = Clock::now();
      per_query_ms.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }
  std::sort(per_query_ms.begin(), per_query_ms.end());

  BenchStats stats;
  stats.n = index.size();
  stats.dim = index.dim;
  stats.k = k;
  stats.threads = 1;
  auto quantile = [&](double q) {
    double pos = q * (per_query_ms.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, per_query_ms.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return per_query_ms[lo] * (1.0 - frac) + per_query_ms[hi] * frac;
  };
  stats.p50_ms = quantile(0.50);
  stats.p95_ms = quantile(0.95);
  double sum = 0.0;
  for (double v : per_query_ms) sum += v;
  stats.mean_ms = sum / static_cast<double>(per_query_ms.size());
  stats.qps = stats.mean_ms > 0.0 ? 1000.0 / stats.mean_ms : 0.0;
  return stats;
}

double pruning_rate(std::int64_t k, std::int64_t n_total) {
  if (k < 1 || n_total < 1)
    throw InvalidInputError("pruning_rate: K and n_total must be >= 1");
  // Multiply before dividing: this ordering lands on the round-decimal
  // doubles (99.995, 99.975) that the reported percentages are compared to.
  return 100.0 * static_cast<double>(n_total - k) /
         static_cast<double>(n_total);
}

}  // namespace brasr

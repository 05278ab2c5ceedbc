#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "brasr/errors.hpp"
#include "brasr/index.hpp"
#include "brasr/rng.hpp"
#include "doctest.h"

using namespace brasr;

namespace {

std::vector<std::pair<std::int64_t, Eigen::VectorXd>> random_embeddings(
    int n, int dim, std::uint64_t seed, std::int64_t id_stride = 1) {
  Rng rng(seed);
  std::vector<std::pair<std::int64_t, Eigen::VectorXd>> out;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd v(dim);
    for (int d = 0; d < dim; ++d) v[d] = rng.gaussian();
    out.emplace_back(static_cast<std::int64_t>(i) * id_stride, v);
  }
  return out;
}

// The scoring contract: 8 independent accumulators over strided lanes,
// combined pairwise, remainder sequential. Reimplemented here so the oracle
// reproduces the documented float summation bit for bit.
float dot_oracle(const float* a, const float* b, int dim) {
  float lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= dim; i += 8)
    for (int l = 0; l < 8; ++l) lanes[l] += a[i + l] * b[i + l];
  float acc = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
              ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
  for (; i < dim; ++i) acc += a[i] * b[i];
  return acc;
}

// Brute-force reference: full scored list, sorted by (score desc, id asc).
QueryResult brute_force(const RetrievalIndex& index, const float* q, int k) {
  std::vector<ScoredId> all;
  for (std::size_t i = 0; i < index.size(); ++i)
    all.push_back({index.ids[i], dot_oracle(index.row(i), q, index.dim)});
  std::stable_sort(all.begin(), all.end(), [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (static_cast<int>(all.size()) > k) all.resize(k);
  return all;
}

bool same_result(const QueryResult& a, const QueryResult& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].id != b[i].id || a[i].score != b[i].score) return false;
  return true;
}

}  // namespace

TEST_SUITE_BEGIN("index");

TEST_CASE("build_index normalizes rows and sorts ids") {
  auto embs = random_embeddings(20, 8, 1, 3);
  std::reverse(embs.begin(), embs.end());  // out of order on purpose
  RetrievalIndex index = build_index(embs);
  REQUIRE(index.size() == 20);
  CHECK(index.dim == 8);
  for (std::size_t i = 0; i + 1 < index.size(); ++i)
    CHECK(index.ids[i] < index.ids[i + 1]);
  for (std::size_t i = 0; i < index.size(); ++i) {
    double norm = 0.0;
    for (int d = 0; d < 8; ++d)
      norm += static_cast<double>(index.row(i)[d]) * index.row(i)[d];
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-5);
  }
}

TEST_CASE("build_index rejects bad input") {
  auto embs = random_embeddings(4, 8, 2);
  embs.push_back({0, Eigen::VectorXd::Ones(8)});  // duplicate id
  CHECK_THROWS_AS(build_index(embs), InvalidInputError);

  embs = random_embeddings(4, 8, 2);
  embs.push_back({99, Eigen::VectorXd::Zero(8)});  // zero vector
  CHECK_THROWS_AS(build_index(embs), DegenerateInputError);

  embs = random_embeddings(4, 8, 2);
  embs.push_back({99, Eigen::VectorXd::Ones(5)});  // dim mismatch
  CHECK_THROWS_AS(build_index(embs), InvalidInputError);

  CHECK_THROWS_AS(build_index({}), InvalidInputError);
}

TEST_CASE("querying a stored row returns that row first") {
  RetrievalIndex index = build_index(random_embeddings(50, 16, 3));
  for (std::size_t i : {std::size_t{0}, std::size_t{17}, std::size_t{49}}) {
    QueryResult r = query(index, index.row(i), 1);
    REQUIRE(r.size() == 1);
    CHECK(r[0].id == index.ids[i]);
    CHECK(r[0].score == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("k at least n returns the whole index, fully ordered") {
  RetrievalIndex index = build_index(random_embeddings(30, 8, 4));
  Rng rng(5);
  std::vector<float> q(8);
  for (auto& v : q) v = static_cast<float>(rng.gaussian());
  QueryResult r = query(index, q.data(), 100);
  REQUIRE(r.size() == 30);
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    CHECK(r[i].score >= r[i + 1].score);
    if (r[i].score == r[i + 1].score) CHECK(r[i].id < r[i + 1].id);
  }
}

TEST_CASE("query matches the brute-force oracle") {
  RetrievalIndex index = build_index(random_embeddings(200, 24, 6));
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> q(24);
    for (auto& v : q) v = static_cast<float>(rng.gaussian());
    for (int k : {1, 5, 37, 200}) {
      QueryResult got = query(index, q.data(), k);
      QueryResult expected = brute_force(index, q.data(), k);
      CHECK(same_result(got, expected));
    }
  }
}

TEST_CASE("exact duplicate rows tie-break by ascending id") {
  Eigen::VectorXd v(4);
  v << 1.0, 2.0, 3.0, 4.0;
  std::vector<std::pair<std::int64_t, Eigen::VectorXd>> embs = {
      {70, v}, {10, v}, {40, v}, {5, 2.0 * v}};  // same direction after norm
  RetrievalIndex index = build_index(embs);
  QueryResult r = query(index, v, 4);
  REQUIRE(r.size() == 4);
  std::vector<std::int64_t> order;
  for (const auto& s : r) order.push_back(s.id);
  CHECK(order == std::vector<std::int64_t>{5, 10, 40, 70});
}

TEST_CASE("eigen query overload agrees with the raw-pointer one") {
  RetrievalIndex index = build_index(random_embeddings(40, 8, 8));
  Rng rng(9);
  Eigen::VectorXd q(8);
  for (int d = 0; d < 8; ++d) q[d] = rng.gaussian();
  std::vector<float> qf(8);
  for (int d = 0; d < 8; ++d) qf[d] = static_cast<float>(q[d]);
  CHECK(same_result(query(index, q, 7), query(index, qf.data(), 7)));
}

TEST_CASE("batch_query equals independent queries") {
  RetrievalIndex index = build_index(random_embeddings(60, 12, 10));
  Rng rng(11);
  std::vector<std::vector<float>> queries(8, std::vector<float>(12));
  for (auto& q : queries)
    for (auto& v : q) v = static_cast<float>(rng.gaussian());
  auto batched = batch_query(index, queries, 9);
  REQUIRE(batched.size() == queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i)
    CHECK(same_result(batched[i], query(index, queries[i].data(), 9)));
}

TEST_CASE("query rejects bad k") {
  RetrievalIndex index = build_index(random_embeddings(10, 4, 12));
  std::vector<float> q(4, 1.0f);
  CHECK_THROWS_AS(query(index, q.data(), 0), InvalidInputError);
  CHECK_THROWS_AS(query(index, q.data(), -3), InvalidInputError);
}

TEST_CASE("index files round-trip bit exactly") {
  RetrievalIndex index = build_index(random_embeddings(25, 16, 13, 7));
  auto path = std::filesystem::temp_directory_path() / "brasr_index_test.bin";
  save_index(index, path.string());
  RetrievalIndex loaded = load_index(path.string());
  CHECK(loaded.dim == index.dim);
  CHECK(loaded.ids == index.ids);
  CHECK(loaded.matrix == index.matrix);

  auto path2 = std::filesystem::temp_directory_path() / "brasr_index_test2.bin";
  save_index(loaded, path2.string());
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {});
  std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(!sa.empty());
  CHECK(sa == sb);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);

  CHECK_THROWS_AS(load_index("/nonexistent/brasr.bin"), IoError);
}

TEST_CASE("bench reports sane statistics") {
  RetrievalIndex index = build_index(random_embeddings(500, 32, 14));
  Rng rng(15);
  std::vector<std::vector<float>> queries(20, std::vector<float>(32));
  for (auto& q : queries)
    for (auto& v : q) v = static_cast<float>(rng.gaussian());
  BenchStats stats = bench(index, queries, 10, 3);
  CHECK(stats.n == 500);
  CHECK(stats.dim == 32);
  CHECK(stats.k == 10);
  CHECK(stats.mean_ms > 0.0);
  CHECK(stats.p50_ms <= stats.p95_ms);
  CHECK(stats.qps > 0.0);
  CHECK(stats.qps == doctest::Approx(1000.0 / stats.mean_ms).epsilon(1e-6));

  CHECK_THROWS_AS(bench(index, {}, 10, 2), InvalidInputError);
  CHECK_THROWS_AS(bench(index, queries, 10, 0), InvalidInputError);
}

TEST_CASE("pruning_rate golden values") {
  CHECK(pruning_rate(10, 200000) == doctest::Approx(99.995).epsilon(1e-12));
  CHECK(pruning_rate(50, 200000) == doctest::Approx(99.975).epsilon(1e-12));
  CHECK(pruning_rate(100, 100) == 0.0);
  CHECK_THROWS_AS(pruning_rate(0, 100), InvalidInputError);
  CHECK_THROWS_AS(pruning_rate(10, 0), InvalidInputError);
}

TEST_SUITE_END();

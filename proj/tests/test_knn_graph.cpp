#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "flowlab/knn_graph.hpp"
#include "flowlab/rng.hpp"

using namespace flowlab;

namespace {

// O(N^2) reference: for every node the k nearest others, ties to the smaller
// index, results sorted ascending per row.
std::vector<std::vector<int64_t>> knn_oracle(const Tensor& pts, int k) {
  int64_t n = pts.rows(), dim = pts.cols();
  std::vector<std::vector<int64_t>> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, int64_t>> all;
    for (int64_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (int64_t c = 0; c < dim; ++c) {
        double d = static_cast<double>(pts(i, c)) - pts(j, c);
        d2 += d * d;
      }
      all.emplace_back(d2, j);
    }
    std::sort(all.begin(), all.end());
    for (int kk = 0; kk < k; ++kk) out[static_cast<size_t>(i)].push_back(all[static_cast<size_t>(kk)].second);
    std::sort(out[static_cast<size_t>(i)].begin(), out[static_cast<size_t>(i)].end());
  }
  return out;
}

Tensor pad_points(const std::vector<double>& xs) {
  Tensor t = Tensor::zeros({static_cast<int64_t>(xs.size()), 8});
  for (size_t i = 0; i < xs.size(); ++i) t(static_cast<int64_t>(i), 0) = static_cast<float>(xs[i]);
  return t;
}

// dense normalized adjacency for the coefficient oracle
std::vector<double> dense_norm_adjacency(const Graph& g) {
  std::vector<double> a(static_cast<size_t>(g.n * g.n), 0.0);
  std::vector<double> deg(static_cast<size_t>(g.n), 0.0);
  for (int64_t i = 0; i < g.n; ++i)
    for (int64_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e)
      a[static_cast<size_t>(i * g.n + g.cols[e])] = 1.0;
  for (int64_t i = 0; i < g.n; ++i)
    for (int64_t j = 0; j < g.n; ++j) deg[static_cast<size_t>(i)] += a[static_cast<size_t>(i * g.n + j)];
  std::vector<double> out(static_cast<size_t>(g.n * g.n), 0.0);
  for (int64_t i = 0; i < g.n; ++i)
    for (int64_t j = 0; j < g.n; ++j)
      if (a[static_cast<size_t>(i * g.n + j)] != 0.0)
        out[static_cast<size_t>(i * g.n + j)] =
            1.0 / std::sqrt(deg[static_cast<size_t>(i)] * deg[static_cast<size_t>(j)]);
  return out;
}

Graph random_knn_graph(int64_t n, int k, uint64_t seed) {
  Rng rng(seed);
  Tensor pts = Tensor::zeros({n, 8});
  for (auto& v : pts.data) v = rng.normal_f();
  return gcn_coefficients(add_self_loops(symmetrize(build_knn(pts, k))));
}

}  // namespace

TEST_CASE("collinear points pick their obvious neighbors", "[knn]") {
  Graph g = build_knn(pad_points({0, 1, 3, 10}), 1);
  CHECK(g.cols == std::vector<int64_t>{1, 0, 1, 2});  // 0->1, 1->0, 3->1, 10->3
  CHECK(g.edges() == 4);
}

TEST_CASE("identical points fall back to index order", "[knn]") {
  Tensor pts = Tensor::zeros({5, 8});
  Graph g = build_knn(pts, 3);
  for (int64_t i = 0; i < 5; ++i) {
    std::vector<int64_t> expect;
    for (int64_t j = 0; j < 5 && static_cast<int>(expect.size()) < 3; ++j)
      if (j != i) expect.push_back(j);
    std::vector<int64_t> row(g.cols.begin() + g.offsets[i], g.cols.begin() + g.offsets[i + 1]);
    CHECK(row == expect);
  }
}

TEST_CASE("every node has out-degree exactly k", "[knn]") {
  Rng rng(2);
  Tensor pts = Tensor::zeros({50, 8});
  for (auto& v : pts.data) v = rng.normal_f();
  Graph g = build_knn(pts, 3);
  g.validate();
  CHECK(g.edges() == 150);
  for (int64_t i = 0; i < 50; ++i) CHECK(g.degree(i) == 3);
}

TEST_CASE("kNN equals the quadratic oracle on random point sets", "[knn]") {
  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    int64_t n = 20 + static_cast<int64_t>(rng.uniform_int(180));
    Tensor pts = Tensor::zeros({n, 8});
    for (auto& v : pts.data) v = rng.normal_f();
    // duplicated points exercise the tie-break
    if (rep % 2 == 0)
      std::copy_n(pts.data.begin(), 8 * 3, pts.data.begin() + 8 * (n - 3));
    Graph g = build_knn(pts, 3);
    auto oracle = knn_oracle(pts, 3);
    for (int64_t i = 0; i < n; ++i) {
      std::vector<int64_t> row(g.cols.begin() + g.offsets[i], g.cols.begin() + g.offsets[i + 1]);
      REQUIRE(row == oracle[static_cast<size_t>(i)]);
    }
  }
}

TEST_CASE("too few points cannot be indexed", "[knn]") {
  CHECK_THROWS_AS(build_knn(Tensor::zeros({3, 8}), 3), DataError);
}

TEST_CASE("symmetrize unions reversed edges and is idempotent", "[knn]") {
  Graph g = build_knn(pad_points({0, 1, 3, 10, 11}), 1);
  Graph s = symmetrize(g);
  s.validate();
  CHECK(s.symmetrized);
  for (int64_t i = 0; i < s.n; ++i)
    for (int64_t e = s.offsets[i]; e < s.offsets[i + 1]; ++e)
      CHECK(s.has_edge(s.cols[e], i));

  Graph s2 = symmetrize(s);
  CHECK(s2.offsets == s.offsets);
  CHECK(s2.cols == s.cols);
}

TEST_CASE("self-loops appear exactly once per node", "[knn]") {
  Graph g = symmetrize(build_knn(pad_points({0, 1, 3, 10, 11}), 2));
  Graph l = add_self_loops(g);
  l.validate();
  CHECK(l.self_loops);
  for (int64_t i = 0; i < l.n; ++i) CHECK(l.has_edge(i, i));
  CHECK(l.edges() == g.edges() + l.n);  // kNN output has no self edges

  Graph l2 = add_self_loops(l);
  CHECK(l2.cols == l.cols);  // already present, kept once
}

TEST_CASE("single self-looped node has coefficient one", "[knn]") {
  Graph g;
  g.n = 1;
  g.offsets = {0, 1};
  g.cols = {0};
  g.symmetrized = true;
  g.self_loops = true;
  Graph c = gcn_coefficients(g);
  CHECK(c.coeff[0] == 1.0f);
}

TEST_CASE("two-node path with self-loops has all coefficients 1/2", "[knn]") {
  Graph g;
  g.n = 2;
  g.offsets = {0, 2, 4};
  g.cols = {0, 1, 0, 1};
  g.symmetrized = true;
  g.self_loops = true;
  Graph c = gcn_coefficients(g);
  // dense oracle: D^{-1/2}(A+I)D^{-1/2} with both degrees 2
  for (float v : c.coeff) CHECK(v == Catch::Approx(0.5).margin(1e-7));
}

TEST_CASE("coefficients match the dense oracle and are symmetric", "[knn]") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    Graph g = random_knn_graph(30, 3, seed);
    auto dense = dense_norm_adjacency(g);
    for (int64_t i = 0; i < g.n; ++i)
      for (int64_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
        int64_t j = g.cols[e];
        REQUIRE(g.coeff[static_cast<size_t>(e)] ==
                Catch::Approx(dense[static_cast<size_t>(i * g.n + j)]).margin(1e-6));
        REQUIRE(dense[static_cast<size_t>(i * g.n + j)] ==
                Catch::Approx(dense[static_cast<size_t>(j * g.n + i)]).margin(0.0));
      }
  }
}

TEST_CASE("transductive assembly keeps train nodes first", "[knn]") {
  Rng rng(8);
  Tensor train = Tensor::zeros({80, 8});
  Tensor test = Tensor::zeros({20, 8});
  for (auto& v : train.data) v = rng.normal_f();
  for (auto& v : test.data) v = rng.normal_f();
  TransductiveGraph tg = assemble_transductive(train, test, 3);
  CHECK(tg.graph.n == 100);
  CHECK(tg.n_train == 80);
  CHECK(tg.train_nodes().size() == 80);
  CHECK(tg.test_nodes().size() == 20);
  // masks partition [0, N)
  std::set<int64_t> all;
  for (int64_t v : tg.train_nodes()) all.insert(v);
  for (int64_t v : tg.test_nodes()) all.insert(v);
  CHECK(all.size() == 100);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 99);
  tg.graph.validate();
  CHECK(tg.graph.symmetrized);
  CHECK(tg.graph.self_loops);
  CHECK_FALSE(tg.graph.coeff.empty());
}

TEST_CASE("graph files round-trip", "[knn]") {
  Graph g = random_knn_graph(40, 3, 77);
  std::string path = "graph_roundtrip_test.nbgr";
  save_graph(path, g);
  Graph back = load_graph(path);
  CHECK(back.offsets == g.offsets);
  CHECK(back.cols == g.cols);
  CHECK(back.coeff == g.coeff);
  CHECK(back.symmetrized == g.symmetrized);
  CHECK(back.self_loops == g.self_loops);
  std::filesystem::remove(path);
}

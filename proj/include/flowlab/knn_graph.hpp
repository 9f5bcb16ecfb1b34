#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "flowlab/autodiff.hpp"  // parallel_rows
#include "flowlab/io.hpp"
#include "flowlab/tensor.hpp"

namespace flowlab {

// CSR adjacency over latent embeddings. Neighbor lists are sorted ascending
// with no duplicate (i, j). coeff, when materialized, holds the symmetric
// normalization 1/sqrt(deg_i * deg_j) per edge.
struct Graph {
  int64_t n = 0;
  std::vector<int64_t> offsets;  // n + 1
  std::vector<int64_t> cols;     // E
  std::vector<float> coeff;      // empty or E
  bool symmetrized = false;
  bool self_loops = false;
  // edge id of (j, i) for edge (i, j); valid on symmetrized graphs, filled
  // on demand by ensure_reverse_index()
  std::vector<int64_t> reverse_edge;

  int64_t edges() const { return static_cast<int64_t>(cols.size()); }
  int64_t degree(int64_t i) const { return offsets[i + 1] - offsets[i]; }

  bool has_edge(int64_t i, int64_t j) const {
    auto b = cols.begin() + offsets[i], e = cols.begin() + offsets[i + 1];
    return std::binary_search(b, e, j);
  }

  int64_t edge_id(int64_t i, int64_t j) const {
    auto b = cols.begin() + offsets[i], e = cols.begin() + offsets[i + 1];
    auto it = std::lower_bound(b, e, j);
    if (it == e || *it != j) fail("BadGraph", "edge (", i, ",", j, ") not present");
    return it - cols.begin();
  }

  void ensure_reverse_index() {
    if (!reverse_edge.empty()) return;
    if (!symmetrized) fail("BadGraph", "reverse index needs a symmetrized graph");
    reverse_edge.resize(cols.size());
    for (int64_t i = 0; i < n; ++i)
      for (int64_t e = offsets[i]; e < offsets[i + 1]; ++e)
        reverse_edge[static_cast<size_t>(e)] = edge_id(cols[e], i);
  }

  // sorted rows, no duplicates, consistent offsets; throws on violation
  void validate() const {
    if (static_cast<int64_t>(offsets.size()) != n + 1)
      fail("BadGraph", "offsets size ", offsets.size(), " for ", n, " nodes");
    if (offsets[0] != 0 || offsets[static_cast<size_t>(n)] != edges())
      fail("BadGraph", "offsets do not span the edge list");
    for (int64_t i = 0; i < n; ++i) {
      if (offsets[i] > offsets[i + 1]) fail("BadGraph", "offsets decrease at row ", i);
      for (int64_t e = offsets[i]; e < offsets[i + 1]; ++e) {
        if (cols[e] < 0 || cols[e] >= n) fail("BadGraph", "column ", cols[e], " out of range");
        if (e > offsets[i] && cols[e] <= cols[e - 1])
          fail("BadGraph", "row ", i, " is not sorted/deduplicated");
      }
    }
    if (!coeff.empty() && static_cast<int64_t>(coeff.size()) != edges())
      fail("BadGraph", "coefficient count ", coeff.size(), " != edge count ", edges());
  }
};

// Exact k nearest neighbors under Euclidean distance, ties broken toward the
// smaller node index; a node never selects itself. Brute force with f64
// accumulation; each query row is independent, so the search parallelizes
// without affecting results.
inline Graph build_knn(const Tensor& embeddings, int k) {
  int64_t n = embeddings.rows();
  int64_t dim = embeddings.cols();
  if (n <= k) fail("TooFewRows", "kNN needs more than k=", k, " points, got ", n);

  std::vector<int64_t> neighbors(static_cast<size_t>(n) * k);
  const float* pts = embeddings.data.data();

  detail::parallel_rows(n, 64, [&](int64_t q0, int64_t q1) {
    // (distance^2, index) heap-free selection over a small k
    std::vector<std::pair<double, int64_t>> best(static_cast<size_t>(k));
    for (int64_t i = q0; i < q1; ++i) {
      const float* a = pts + i * dim;
      int filled = 0;
      auto worst = [&] { return best[static_cast<size_t>(filled - 1)]; };
      for (int64_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const float* b = pts + j * dim;
        double d2 = 0.0;
        for (int64_t c = 0; c < dim; ++c) {
          double diff = static_cast<double>(a[c]) - b[c];
          d2 += diff * diff;
        }
        std::pair<double, int64_t> cand{d2, j};
        if (filled < k) {
          best[static_cast<size_t>(filled++)] = cand;
          std::sort(best.begin(), best.begin() + filled);
        } else if (cand < worst()) {
          best[static_cast<size_t>(k - 1)] = cand;
          std::sort(best.begin(), best.end());
        }
      }
      std::vector<int64_t> row(static_cast<size_t>(k));
      for (int kk = 0; kk < k; ++kk) row[static_cast<size_t>(kk)] = best[static_cast<size_t>(kk)].second;
      std::sort(row.begin(), row.end());
      std::copy(row.begin(), row.end(), neighbors.begin() + i * k);
    }
  });

  Graph g;
  g.n = n;
  g.offsets.resize(static_cast<size_t>(n) + 1);
  for (int64_t i = 0; i <= n; ++i) g.offsets[static_cast<size_t>(i)] = i * k;
  g.cols = std::move(neighbors);
  return g;
}

// Edge-set union with all reversed edges.
inline Graph symmetrize(const Graph& g) {
  std::vector<int64_t> deg(static_cast<size_t>(g.n), 0);
  auto count_or_place = [&](std::vector<int64_t>* cols, const std::vector<int64_t>& offsets) {
    for (int64_t i = 0; i < g.n; ++i) {
      for (int64_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
        int64_t j = g.cols[e];
        if (cols) (*cols)[offsets[i] + deg[i]] = j;
        deg[i]++;
        if (!g.has_edge(j, i)) {
          if (cols) (*cols)[offsets[j] + deg[j]] = i;
          deg[j]++;
        }
      }
    }
  };
  count_or_place(nullptr, {});
  Graph out;
  out.n = g.n;
  out.symmetrized = true;
  out.self_loops = g.self_loops;
  out.offsets.assign(static_cast<size_t>(g.n) + 1, 0);
  for (int64_t i = 0; i < g.n; ++i) out.offsets[i + 1] = out.offsets[i] + deg[i];
  out.cols.resize(static_cast<size_t>(out.offsets[static_cast<size_t>(g.n)]));
  std::fill(deg.begin(), deg.end(), 0);
  count_or_place(&out.cols, out.offsets);
  for (int64_t i = 0; i < g.n; ++i)
    std::sort(out.cols.begin() + out.offsets[i], out.cols.begin() + out.offsets[i + 1]);
  return out;
}

inline Graph add_self_loops(const Graph& g) {
  Graph out;
  out.n = g.n;
  out.symmetrized = g.symmetrized;
  out.self_loops = true;
  out.offsets.assign(static_cast<size_t>(g.n) + 1, 0);
  out.cols.reserve(g.cols.size() + static_cast<size_t>(g.n));
  for (int64_t i = 0; i < g.n; ++i) {
    bool placed = false;
    for (int64_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
      if (!placed && g.cols[e] > i) {
        out.cols.push_back(i);
        placed = true;
      }
      if (g.cols[e] == i) placed = true;  // already present, keep once
      out.cols.push_back(g.cols[e]);
    }
    if (!placed) out.cols.push_back(i);
    out.offsets[i + 1] = static_cast<int64_t>(out.cols.size());
  }
  return out;
}

// c_ij = 1/sqrt(deg_i * deg_j), degrees counted after self-loop insertion.
inline Graph gcn_coefficients(Graph g) {
  g.coeff.resize(g.cols.size());
  for (int64_t i = 0; i < g.n; ++i) {
    double di = static_cast<double>(g.degree(i));
    for (int64_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
      double dj = static_cast<double>(g.degree(g.cols[e]));
      g.coeff[static_cast<size_t>(e)] = static_cast<float>(1.0 / std::sqrt(di * dj));
    }
  }
  return g;
}

// One graph over train embeddings followed by test embeddings. Node order is
// train rows (nodes 0..n_train-1) then test rows; masks index that order.
struct TransductiveGraph {
  Graph graph;
  int64_t n_train = 0;
  std::vector<int64_t> train_nodes() const {
    std::vector<int64_t> v(static_cast<size_t>(n_train));
    for (int64_t i = 0; i < n_train; ++i) v[static_cast<size_t>(i)] = i;
    return v;
  }
  std::vector<int64_t> test_nodes() const {
    std::vector<int64_t> v(static_cast<size_t>(graph.n - n_train));
    for (int64_t i = n_train; i < graph.n; ++i) v[static_cast<size_t>(i - n_train)] = i;
    return v;
  }
};

inline TransductiveGraph assemble_transductive(const Tensor& train_emb, const Tensor& test_emb,
                                               int k) {
  if (train_emb.cols() != test_emb.cols())
    fail("ShapeMismatch", "embedding dims differ: ", train_emb.shape_str(), " vs ",
         test_emb.shape_str());
  Tensor all = Tensor::zeros({train_emb.rows() + test_emb.rows(), train_emb.cols()});
  std::copy(train_emb.data.begin(), train_emb.data.end(), all.data.begin());
  std::copy(test_emb.data.begin(), test_emb.data.end(),
            all.data.begin() + train_emb.data.size());
  TransductiveGraph out;
  out.n_train = train_emb.rows();
  out.graph = gcn_coefficients(add_self_loops(symmetrize(build_knn(all, k))));
  return out;
}

// NBGR1 graph file: magic, u64 N, u64 E, flags byte (bit0 symmetrized,
// bit1 self loops, bit2 coefficients present), offsets, columns, then
// optional f32 coefficients; everything little-endian.
inline void save_graph(const std::string& path, const Graph& g) {
  auto os = io::open_write(path);
  io::put_magic(os, "NBGR1");
  io::put_u64(os, static_cast<uint64_t>(g.n));
  io::put_u64(os, static_cast<uint64_t>(g.edges()));
  uint8_t flags = (g.symmetrized ? 1 : 0) | (g.self_loops ? 2 : 0) | (!g.coeff.empty() ? 4 : 0);
  os.put(static_cast<char>(flags));
  for (int64_t v : g.offsets) io::put_u64(os, static_cast<uint64_t>(v));
  for (int64_t v : g.cols) io::put_u64(os, static_cast<uint64_t>(v));
  if (!g.coeff.empty()) io::put_f32_array(os, g.coeff.data(), g.coeff.size());
  if (!os) fail("FileWrite", "short write to ", path);
}

inline Graph load_graph(const std::string& path) {
  auto is = io::open_read(path);
  io::expect_magic(is, "NBGR1", path);
  Graph g;
  g.n = static_cast<int64_t>(io::get_u64(is));
  int64_t e = static_cast<int64_t>(io::get_u64(is));
  int flags = is.get();
  g.symmetrized = (flags & 1) != 0;
  g.self_loops = (flags & 2) != 0;
  g.offsets.resize(static_cast<size_t>(g.n) + 1);
  for (auto& v : g.offsets) v = static_cast<int64_t>(io::get_u64(is));
  g.cols.resize(static_cast<size_t>(e));
  for (auto& v : g.cols) v = static_cast<int64_t>(io::get_u64(is));
  if (flags & 4) {
    g.coeff.resize(static_cast<size_t>(e));
    io::get_f32_array(is, g.coeff.data(), g.coeff.size());
  }
  if (!is) fail("FileRead", path, ": truncated graph");
  g.validate();
  return g;
}

}  // namespace flowlab

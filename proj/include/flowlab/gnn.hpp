#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "flowlab/autodiff.hpp"
#include "flowlab/knn_graph.hpp"
#include "flowlab/mlp.hpp"
#include "flowlab/optim.hpp"

namespace flowlab {

struct GcnConfig {
  int64_t hidden = 16;
  int64_t classes = 10;
};

struct GatConfig {
  int64_t heads = 2;
  int64_t head_dim = 8;  // per-head output size of the hidden layer
  int64_t classes = 10;
  double leaky_slope = 0.2;
};

// out_i = sum over j in N(i) (self-loop included as an explicit edge) of
// c_ij * h_j. The graph must be symmetrized with self-loops and materialized
// coefficients; symmetry makes the backward pass the same propagation
// applied to the output gradient.
inline Tape::Var graph_propagate(Tape& tape, const Graph& g, Tape::Var h) {
  const Tensor& H = tape.val(h);
  if (!g.symmetrized || !g.self_loops || g.coeff.empty())
    fail("BadGraph", "graph_propagate needs a symmetrized, self-looped graph with coefficients");
  if (H.rows() != g.n)
    fail("ShapeMismatch", "graph_propagate: ", H.shape_str(), " rows vs ", g.n, " nodes");
  int64_t dim = H.cols();

  auto propagate = [&g, dim](const Tensor& in, Tensor& out) {
    detail::parallel_rows(g.n, 256, [&](int64_t r0, int64_t r1) {
      std::vector<double> acc(static_cast<size_t>(dim));
      for (int64_t i = r0; i < r1; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int64_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
          double c = g.coeff[static_cast<size_t>(e)];
          const float* row = in.data.data() + g.cols[e] * dim;
          for (int64_t x = 0; x < dim; ++x) acc[static_cast<size_t>(x)] += c * row[x];
        }
        float* orow = out.data.data() + i * dim;
        for (int64_t x = 0; x < dim; ++x)
          orow[x] += static_cast<float>(acc[static_cast<size_t>(x)]);
      }
    });
  };

  Tensor out = Tensor::zeros({g.n, dim});
  propagate(H, out);
  return tape.custom(std::move(out), [h, propagate](Tape& t, int32_t id) {
    propagate(t.grad(Tape::Var{id}), t.grad(h));
  }, "graph_propagate");
}

inline Tape::Var gcn_layer(Tape& tape, const Graph& g, Tape::Var x, Tape::Var w) {
  return graph_propagate(tape, g, tape.matmul(x, w));
}

// One attention head. wh = X W (N x K); attn is the 2K scoring vector split
// into source and neighbor halves. Per edge (i <- j):
//   e_ij = LeakyReLU(a_src . wh_i + a_dst . wh_j)
//   alpha_ij = softmax_j over N(i) of e_ij
//   out_i = sum_j alpha_ij wh_j
// The graph must be symmetrized with self-loops (coefficients unused).
// `alpha_out`, when given, receives the per-edge attention weights.
inline Tape::Var gat_head(Tape& tape, const Graph& g, Tape::Var wh, Tape::Var attn,
                          double leaky_slope, std::shared_ptr<std::vector<float>>* alpha_out =
                              nullptr) {
  const Tensor& WH = tape.val(wh);
  const Tensor& A = tape.val(attn);
  if (!g.symmetrized || !g.self_loops)
    fail("BadGraph", "gat_head needs a symmetrized graph with self-loops");
  int64_t k = WH.cols();
  if (A.numel() != 2 * k)
    fail("ShapeMismatch", "gat_head: attention vector ", A.shape_str(), " for head dim ", k);
  if (WH.rows() != g.n)
    fail("ShapeMismatch", "gat_head: ", WH.shape_str(), " rows vs ", g.n, " nodes");

  const float* a_src = A.data.data();
  const float* a_dst = A.data.data() + k;

  // per-node source/neighbor scores
  std::vector<double> f(static_cast<size_t>(g.n)), gsc(static_cast<size_t>(g.n));
  for (int64_t i = 0; i < g.n; ++i) {
    double sf = 0.0, sg = 0.0;
    const float* row = WH.data.data() + i * k;
    for (int64_t x = 0; x < k; ++x) {
      sf += static_cast<double>(a_src[x]) * row[x];
      sg += static_cast<double>(a_dst[x]) * row[x];
    }
    f[static_cast<size_t>(i)] = sf;
    gsc[static_cast<size_t>(i)] = sg;
  }

  auto alpha = std::make_shared<std::vector<float>>(g.cols.size());
  auto pre = std::make_shared<std::vector<float>>(g.cols.size());  // pre-activation scores
  Tensor out = Tensor::zeros({g.n, k});
  std::vector<double> act(g.cols.size());  // row softmax runs entirely in f64
  for (int64_t i = 0; i < g.n; ++i) {
    int64_t b = g.offsets[i], e = g.offsets[i + 1];
    if (b == e) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t ed = b; ed < e; ++ed) {
      double raw = f[static_cast<size_t>(i)] + gsc[static_cast<size_t>(g.cols[ed])];
      (*pre)[static_cast<size_t>(ed)] = static_cast<float>(raw);
      act[static_cast<size_t>(ed)] = raw > 0.0 ? raw : leaky_slope * raw;
      mx = std::max(mx, act[static_cast<size_t>(ed)]);
    }
    double sum = 0.0;
    for (int64_t ed = b; ed < e; ++ed) {
      act[static_cast<size_t>(ed)] = std::exp(act[static_cast<size_t>(ed)] - mx);
      sum += act[static_cast<size_t>(ed)];
    }
    std::vector<double> acc(static_cast<size_t>(k), 0.0);
    for (int64_t ed = b; ed < e; ++ed) {
      float al = static_cast<float>(act[static_cast<size_t>(ed)] / sum);
      (*alpha)[static_cast<size_t>(ed)] = al;
      const float* row = WH.data.data() + g.cols[ed] * k;
      for (int64_t x = 0; x < k; ++x) acc[static_cast<size_t>(x)] += static_cast<double>(al) * row[x];
    }
    float* orow = out.data.data() + i * k;
    for (int64_t x = 0; x < k; ++x) orow[x] = static_cast<float>(acc[static_cast<size_t>(x)]);
  }
  if (alpha_out) *alpha_out = alpha;

  float slope = static_cast<float>(leaky_slope);
  return tape.custom(std::move(out), [wh, attn, &g, alpha, pre, k, slope](Tape& t, int32_t id) {
    const Tensor& gout = t.grad(Tape::Var{id});
    const Tensor& WH2 = t.val(wh);
    const Tensor& A2 = t.val(attn);
    Tensor& gwh = t.grad(wh);
    Tensor& gattn = t.grad(attn);
    const float* asrc = A2.data.data();
    const float* adst = A2.data.data() + k;
    std::vector<double> da_src(static_cast<size_t>(k), 0.0), da_dst(static_cast<size_t>(k), 0.0);

    for (int64_t i = 0; i < g.n; ++i) {
      int64_t b = g.offsets[i], e = g.offsets[i + 1];
      if (b == e) continue;
      const float* go = gout.data.data() + i * k;

      // d(alpha) per edge, then softmax backward within the row
      double row_dot = 0.0;
      std::vector<double> dalpha(static_cast<size_t>(e - b));
      for (int64_t ed = b; ed < e; ++ed) {
        const float* whj = WH2.data.data() + g.cols[ed] * k;
        double s = 0.0;
        for (int64_t x = 0; x < k; ++x) s += static_cast<double>(go[x]) * whj[x];
        dalpha[static_cast<size_t>(ed - b)] = s;
        row_dot += s * (*alpha)[static_cast<size_t>(ed)];
      }
      double df_i = 0.0;
      for (int64_t ed = b; ed < e; ++ed) {
        double al = (*alpha)[static_cast<size_t>(ed)];
        int64_t j = g.cols[ed];
        const float* whj = WH2.data.data() + j * k;
        float* gwhj = gwh.data.data() + j * k;

        // value path: out_i += alpha_ij wh_j
        for (int64_t x = 0; x < k; ++x) gwhj[x] += static_cast<float>(al) * go[x];

        double de = al * (dalpha[static_cast<size_t>(ed - b)] - row_dot);
        double draw = (*pre)[static_cast<size_t>(ed)] > 0.0f ? de : slope * de;
        df_i += draw;
        // neighbor score path: g_j = a_dst . wh_j
        for (int64_t x = 0; x < k; ++x) {
          gwhj[x] += static_cast<float>(draw * adst[x]);
          da_dst[static_cast<size_t>(x)] += draw * whj[x];
        }
      }
      // source score path: f_i = a_src . wh_i, shared by the whole row
      const float* whi = WH2.data.data() + i * k;
      float* gwhi = gwh.data.data() + i * k;
      for (int64_t x = 0; x < k; ++x) {
        gwhi[x] += static_cast<float>(df_i * asrc[x]);
        da_src[static_cast<size_t>(x)] += df_i * whi[x];
      }
    }
    for (int64_t x = 0; x < k; ++x) {
      gattn.data[static_cast<size_t>(x)] += static_cast<float>(da_src[static_cast<size_t>(x)]);
      gattn.data[static_cast<size_t>(k + x)] += static_cast<float>(da_dst[static_cast<size_t>(x)]);
    }
  }, "gat_head");
}

// ---- stacked models ----

inline void gcn_init(ParamStore& store, const std::string& prefix, int64_t in_dim,
                     const GcnConfig& cfg, Rng& rng) {
  store.add(prefix + ".w0", rand_init(in_dim, cfg.hidden, rng));
  store.add(prefix + ".w1", rand_init(cfg.hidden, cfg.classes, rng));
}

inline Tape::Var gcn_forward(Tape& tape, const BoundParams& bp, const std::string& prefix,
                             const Graph& g, Tape::Var x) {
  Tape::Var h = tape.relu(gcn_layer(tape, g, x, bp[prefix + ".w0"]));
  return gcn_layer(tape, g, h, bp[prefix + ".w1"]);
}

inline void gat_init(ParamStore& store, const std::string& prefix, int64_t in_dim,
                     const GatConfig& cfg, Rng& rng) {
  for (int64_t h = 0; h < cfg.heads; ++h) {
    std::string hp = prefix + ".l0.h" + std::to_string(h);
    store.add(hp + ".w", rand_init(in_dim, cfg.head_dim, rng));
    store.add(hp + ".a", rand_normal({2 * cfg.head_dim}, 0.3, rng));
  }
  int64_t hidden = cfg.heads * cfg.head_dim;
  for (int64_t h = 0; h < cfg.heads; ++h) {
    std::string hp = prefix + ".l1.h" + std::to_string(h);
    store.add(hp + ".w", rand_init(hidden, cfg.classes, rng));
    store.add(hp + ".a", rand_normal({2 * cfg.classes}, 0.3, rng));
  }
}

// hidden layer concatenates heads, final layer averages them
inline Tape::Var gat_forward(Tape& tape, const BoundParams& bp, const std::string& prefix,
                             const Graph& g, const GatConfig& cfg, Tape::Var x) {
  Tape::Var hidden;
  for (int64_t h = 0; h < cfg.heads; ++h) {
    std::string hp = prefix + ".l0.h" + std::to_string(h);
    Tape::Var head = gat_head(tape, g, tape.matmul(x, bp[hp + ".w"]), bp[hp + ".a"],
                              cfg.leaky_slope);
    hidden = h == 0 ? head : tape.concat(hidden, head, 1);
  }
  hidden = tape.relu(hidden);

  Tape::Var out;
  for (int64_t h = 0; h < cfg.heads; ++h) {
    std::string hp = prefix + ".l1.h" + std::to_string(h);
    Tape::Var head = gat_head(tape, g, tape.matmul(hidden, bp[hp + ".w"]), bp[hp + ".a"],
                              cfg.leaky_slope);
    out = h == 0 ? head : tape.add(out, head);
  }
  return tape.scale(out, 1.0 / static_cast<double>(cfg.heads));
}

}  // namespace flowlab

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>
#include <vector>

#include "flowlab/tensor.hpp"

namespace flowlab {

namespace detail {

// Runs fn(begin, end) over [0, n) split across up to `threads` workers.
// Each index is owned by exactly one worker, so reduction order per output
// element never changes and results are bit-stable at any thread count.
inline void parallel_rows(int64_t n, int64_t min_per_thread,
                          const std::function<void(int64_t, int64_t)>& fn) {
  unsigned hw = std::thread::hardware_concurrency();
  int64_t threads = std::min<int64_t>(hw == 0 ? 1 : hw, (n + min_per_thread - 1) / min_per_thread);
  if (threads <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  int64_t chunk = (n + threads - 1) / threads;
  for (int64_t t = 0; t < threads; ++t) {
    int64_t b = t * chunk, e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back(fn, b, e);
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

// C (+)= op(A) * op(B) with f64 accumulation per output element.
inline void matmul_into(const Tensor& a, bool ta, const Tensor& b, bool tb, Tensor& c,
                        bool accumulate) {
  int64_t m = ta ? a.shape[1] : a.shape[0];
  int64_t k = ta ? a.shape[0] : a.shape[1];
  int64_t kb = tb ? b.shape[1] : b.shape[0];
  int64_t n = tb ? b.shape[0] : b.shape[1];
  if (k != kb)
    fail("ShapeMismatch", "matmul: inner dims of ", a.shape_str(), (ta ? "^T" : ""), " and ",
         b.shape_str(), (tb ? "^T" : ""), " differ");
  if (c.shape.size() != 2 || c.shape[0] != m || c.shape[1] != n)
    fail("ShapeMismatch", "matmul: output is ", c.shape_str(), ", want [", m, "x", n, "]");

  const float* A = a.data.data();
  const float* B = b.data.data();
  float* C = c.data.data();
  int64_t lda = a.shape[1], ldb = b.shape[1];

  if (!ta && !tb) {
    detail::parallel_rows(m, std::max<int64_t>(1, (1 << 18) / std::max<int64_t>(1, k * n)),
                          [&](int64_t r0, int64_t r1) {
                            std::vector<double> acc(static_cast<size_t>(n));
                            for (int64_t i = r0; i < r1; ++i) {
                              std::fill(acc.begin(), acc.end(), 0.0);
                              for (int64_t kk = 0; kk < k; ++kk) {
                                double av = A[i * lda + kk];
                                const float* brow = B + kk * ldb;
                                for (int64_t j = 0; j < n; ++j) acc[j] += av * brow[j];
                              }
                              float* crow = C + i * n;
                              for (int64_t j = 0; j < n; ++j)
                                crow[j] = accumulate ? crow[j] + static_cast<float>(acc[j])
                                                     : static_cast<float>(acc[j]);
                            }
                          });
  } else if (!ta && tb) {
    detail::parallel_rows(m, std::max<int64_t>(1, (1 << 18) / std::max<int64_t>(1, k * n)),
                          [&](int64_t r0, int64_t r1) {
                            for (int64_t i = r0; i < r1; ++i) {
                              const float* arow = A + i * lda;
                              float* crow = C + i * n;
                              for (int64_t j = 0; j < n; ++j) {
                                const float* brow = B + j * ldb;
                                double s = 0.0;
                                for (int64_t kk = 0; kk < k; ++kk)
                                  s += static_cast<double>(arow[kk]) * brow[kk];
                                crow[j] = accumulate ? crow[j] + static_cast<float>(s)
                                                     : static_cast<float>(s);
                              }
                            }
                          });
  } else {
    // transposed-A variants show up only in weight-gradient computations,
    // where m*n is small; a full f64 scratch keeps the accumulation exact.
    std::vector<double> acc(static_cast<size_t>(m * n), 0.0);
    for (int64_t kk = 0; kk < k; ++kk) {
      for (int64_t i = 0; i < m; ++i) {
        double av = ta ? A[kk * lda + i] : A[i * lda + kk];
        if (av == 0.0) continue;
        double* arow = acc.data() + i * n;
        if (!tb) {
          const float* brow = B + kk * ldb;
          for (int64_t j = 0; j < n; ++j) arow[j] += av * brow[j];
        } else {
          for (int64_t j = 0; j < n; ++j) arow[j] += av * B[j * ldb + kk];
        }
      }
    }
    for (int64_t i = 0; i < m * n; ++i)
      C[i] = accumulate ? C[i] + static_cast<float>(acc[i]) : static_cast<float>(acc[i]);
  }
}

// Reverse-mode tape over dense tensors. Nodes are appended in evaluation
// order, so walking ids backwards is a valid reverse topological order.
// Only the fixed set of primitives below plus module-supplied custom nodes
// (graph propagation, attention heads, ...) exist; this is not a general
// autodiff system.
class Tape {
 public:
  struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
  };
  using BackwardFn = std::function<void(Tape&, int32_t)>;

  // When set, every forward output is scanned and the first non-finite value
  // aborts with the producing op's name. Tests and loss nodes use this.
  bool check_finite = false;

  size_t size() const { return nodes_.size(); }

  Var input(Tensor v) { return push(std::move(v), nullptr, "input"); }

  const Tensor& val(Var v) const { return nodes_[check_var(v)].value; }

  // Gradient of the last backward() target w.r.t. this node. Allocated lazily;
  // reading it before any consumer pushed into it yields zeros.
  Tensor& grad(Var v) {
    Node& n = nodes_[check_var(v)];
    if (!n.grad_live) {
      n.grad = Tensor::zeros(n.value.shape);
      n.grad_live = true;
    }
    return n.grad;
  }

  bool grad_live(Var v) const { return nodes_[check_var(v)].grad_live; }

  // f64 value of a scalar node, exact for the loss primitives (their
  // reductions run in f64 and the unrounded result is kept alongside the f32
  // tensor). Finite-difference checks depend on this extra precision.
  double scalar(Var v) const {
    const Node& n = nodes_[check_var(v)];
    if (n.value.numel() != 1) fail("ShapeMismatch", "scalar() on tensor ", n.value.shape_str());
    return std::isnan(n.f64) ? static_cast<double>(n.value.data[0]) : n.f64;
  }

  void backward(Var loss) {
    Node& top = nodes_[check_var(loss)];
    if (top.value.numel() != 1)
      fail("ShapeMismatch", "backward() target must be scalar, got ", top.value.shape_str());
    grad(loss).data[0] = 1.0f;
    for (int32_t id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backward && n.grad_live) n.backward(*this, id);
    }
  }

  // ---- primitives ----

  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.ndim() != 2 || B.ndim() != 2)
      fail("ShapeMismatch", "matmul needs 2-D operands, got ", A.shape_str(), " and ",
           B.shape_str());
    int64_t m = trans_a ? A.shape[1] : A.shape[0];
    int64_t n = trans_b ? B.shape[0] : B.shape[1];
    Tensor out = Tensor::zeros({m, n});
    matmul_into(A, trans_a, B, trans_b, out, false);
    return push(std::move(out), [a, b, trans_a, trans_b](Tape& t, int32_t id) {
      const Tensor& g = t.nodes_[id].grad;
      // dA and dB for all four transpose variants of C = op(A) op(B)
      if (!trans_a)
        matmul_into(g, false, t.val(b), !trans_b, t.grad(a), true);
      else
        matmul_into(t.val(b), trans_b, g, true, t.grad(a), true);
      if (!trans_b)
        matmul_into(t.val(a), !trans_a, g, false, t.grad(b), true);
      else
        matmul_into(g, true, t.val(a), trans_a, t.grad(b), true);
    }, "matmul");
  }

  Var add_bias(Var x, Var bias) {
    const Tensor& X = val(x);
    const Tensor& B = val(bias);
    if (B.ndim() != 1 || B.shape[0] != X.cols())
      fail("ShapeMismatch", "add_bias: x ", X.shape_str(), " vs bias ", B.shape_str());
    Tensor out = X;
    int64_t m = X.rows(), n = X.cols();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) out.data[i * n + j] += B.data[j];
    return push(std::move(out), [x, bias, m, n](Tape& t, int32_t id) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& gx = t.grad(x);
      Tensor& gb = t.grad(bias);
      for (int64_t i = 0; i < m * n; ++i) gx.data[i] += g.data[i];
      for (int64_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (int64_t i = 0; i < m; ++i) s += g.data[i * n + j];
        gb.data[j] += static_cast<float>(s);
      }
    }, "add_bias");
  }

  Var add(Var a, Var b) { return binary_ew(a, b, "add",
      [](float x, float y) { return x + y; },
      [](Tape& t, Var a2, Var b2, const Tensor& g) {
        axpy(t.grad(a2), g, 1.0f);
        axpy(t.grad(b2), g, 1.0f);
      }); }

  Var sub(Var a, Var b) { return binary_ew(a, b, "sub",
      [](float x, float y) { return x - y; },
      [](Tape& t, Var a2, Var b2, const Tensor& g) {
        axpy(t.grad(a2), g, 1.0f);
        axpy(t.grad(b2), g, -1.0f);
      }); }

  Var mul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B))
      fail("ShapeMismatch", "mul: ", A.shape_str(), " vs ", B.shape_str());
    Tensor out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
    return push(std::move(out), [a, b](Tape& t, int32_t id) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& A2 = t.val(a);
      const Tensor& B2 = t.val(b);
      Tensor& ga = t.grad(a);
      Tensor& gb = t.grad(b);
      for (size_t i = 0; i < g.data.size(); ++i) {
        ga.data[i] += g.data[i] * B2.data[i];
        gb.data[i] += g.data[i] * A2.data[i];
      }
    }, "mul");
  }

  Var scale(Var x, double c) {
    Tensor out = val(x);
    for (auto& v : out.data) v = static_cast<float>(v * c);
    double f64 = nodes_[x.id].value.numel() == 1 ? scalar(x) * c
                                                 : std::numeric_limits<double>::quiet_NaN();
    return push(std::move(out), [x, c](Tape& t, int32_t id) {
      const Tensor& g = t.nodes_[id].grad;
      axpy(t.grad(x), g, static_cast<float>(c));
    }, "scale", f64);
  }

  Var exp_(Var x) {
    Tensor out = val(x);
    for (auto& v : out.data) v = std::exp(v);
    return push(std::move(out), [x](Tape& t, int32_t id) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& y = t.nodes_[id].value;
      Tensor& gx = t.grad(x);
      for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i] * y.data[i];
    }, "exp");
  }

  // subgradient at 0 is 0
  Var relu(Var x) {
    Tensor out = val(x);
    for (auto& v : out.data) v = v > 0.0f ? v : 0.0f;
    return push(std::move(out), [x](Tape& t, int32_t id) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& in = t.val(x);
      Tensor& gx = t.grad(x);
      for (size_t i = 0; i < g.data.size(); ++i)
        if (in.data[i] > 0.0f) gx.data[i] += g.data[i];
    }, "relu");
  }

  Var leaky_relu(Var x, double slope) {
    Tensor out = val(x);
    float s = static_cast<float>(slope);
    for (auto& v : out.data) v = v > 0.0f ? v : s * v;
    return push(std::move(out), [x, s](Tape& t, int32_t id) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& in = t.val(x);
      Tensor& gx = t.grad(x);
      for (size_t i = 0; i < g.data.size(); ++i)
        gx.data[i] += g.data[i] * (in.data[i] > 0.0f ? 1.0f : s);
    }, "leaky_relu");
  }

  // Per-row softmax with max subtraction; rows sum to 1 by construction.
  Var softmax_rows(Var x) {
    const Tensor& X = val(x);
    int64_t m = X.rows(), n = X.cols();
    Tensor out = Tensor::zeros(X.shape);
    for (int64_t i = 0; i < m; ++i) {
      const float* row = X.data.data() + i * n;
      float mx = row[0];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      float* orow = out.data.data() + i * n;
      for (int64_t j = 0; j < n; ++j) {
        double e = std::exp(static_cast<double>(row[j]) - mx);
        orow[j] = static_cast<float>(e);
        sum += e;
      }
      double inv = 1.0 / sum;
      for (int64_t j = 0; j < n; ++j) orow[j] = static_cast<float>(orow[j] * inv);
    }
    return push(std::move(out), [x, m, n](Tape& t, int32_t id) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& y = t.nodes_[id].value;
      Tensor& gx = t.grad(x);
      for (int64_t i = 0; i < m; ++i) {
        const float* grow = g.data.data() + i * n;
        const float* yrow = y.data.data() + i * n;
        double dot = 0.0;
        for (int64_t j = 0; j < n; ++j) dot += static_cast<double>(grow[j]) * yrow[j];
        float* gxrow = gx.data.data() + i * n;
        for (int64_t j = 0; j < n; ++j)
          gxrow[j] += yrow[j] * (grow[j] - static_cast<float>(dot));
      }
    }, "softmax_rows");
  }

  // axis 0 stacks rows, axis 1 appends columns
  Var concat(Var a, Var b, int axis) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.ndim() != 2 || B.ndim() != 2 || (axis != 0 && axis != 1))
      fail("ShapeMismatch", "concat: need 2-D inputs and axis 0/1");
    Tensor out;
    if (axis == 0) {
      if (A.shape[1] != B.shape[1])
        fail("ShapeMismatch", "concat axis 0: ", A.shape_str(), " vs ", B.shape_str());
      out = Tensor::zeros({A.shape[0] + B.shape[0], A.shape[1]});
      std::copy(A.data.begin(), A.data.end(), out.data.begin());
      std::copy(B.data.begin(), B.data.end(), out.data.begin() + A.data.size());
    } else {
      if (A.shape[0] != B.shape[0])
        fail("ShapeMismatch", "concat axis 1: ", A.shape_str(), " vs ", B.shape_str());
      int64_t m = A.shape[0], na = A.shape[1], nb = B.shape[1];
      out = Tensor::zeros({m, na + nb});
      for (int64_t i = 0; i < m; ++i) {
        std::copy_n(A.data.begin() + i * na, na, out.data.begin() + i * (na + nb));
        std::copy_n(B.data.begin() + i * nb, nb, out.data.begin() + i * (na + nb) + na);
      }
    }
    auto ash = A.shape;
    return push(std::move(out), [a, b, axis, ash](Tape& t, int32_t id) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& ga = t.grad(a);
      Tensor& gb = t.grad(b);
      if (axis == 0) {
        size_t na = ga.data.size();
        for (size_t i = 0; i < na; ++i) ga.data[i] += g.data[i];
        for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g.data[na + i];
      } else {
        int64_t m = ash[0], ca = ash[1], cb = g.shape[1] - ca;
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t j = 0; j < ca; ++j) ga.data[i * ca + j] += g.data[i * (ca + cb) + j];
          for (int64_t j = 0; j < cb; ++j) gb.data[i * cb + j] += g.data[i * (ca + cb) + ca + j];
        }
      }
    }, "concat");
  }

  // column means over rows: [m,n] -> [1,n]
  Var mean_rows(Var x) {
    const Tensor& X = val(x);
    int64_t m = X.rows(), n = X.cols();
    Tensor out = Tensor::zeros({1, n});
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int64_t i = 0; i < m; ++i) s += X.data[i * n + j];
      out.data[j] = static_cast<float>(s / static_cast<double>(m));
    }
    return push(std::move(out), [x, m, n](Tape& t, int32_t id) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& gx = t.grad(x);
      float inv = 1.0f / static_cast<float>(m);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) gx.data[i * n + j] += g.data[j] * inv;
    }, "mean_rows");
  }

  Var slice_rows(Var x, int64_t r0, int64_t count) {
    const Tensor& X = val(x);
    int64_t n = X.cols();
    if (r0 < 0 || r0 + count > X.rows())
      fail("ShapeMismatch", "slice_rows [", r0, ",", r0 + count, ") of ", X.shape_str());
    Tensor out = Tensor::zeros({count, n});
    std::copy_n(X.data.begin() + r0 * n, count * n, out.data.begin());
    return push(std::move(out), [x, r0, count, n](Tape& t, int32_t id) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& gx = t.grad(x);
      for (int64_t i = 0; i < count * n; ++i) gx.data[r0 * n + i] += g.data[i];
    }, "slice_rows");
  }

  Var gather_rows(Var x, std::vector<int64_t> idx) {
    const Tensor& X = val(x);
    int64_t n = X.cols();
    Tensor out = Tensor::zeros({static_cast<int64_t>(idx.size()), n});
    for (size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= X.rows())
        fail("ShapeMismatch", "gather_rows: index ", idx[i], " out of ", X.shape_str());
      std::copy_n(X.data.begin() + idx[i] * n, n, out.data.begin() + static_cast<int64_t>(i) * n);
    }
    return push(std::move(out), [x, idx = std::move(idx), n](Tape& t, int32_t id) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& gx = t.grad(x);
      for (size_t i = 0; i < idx.size(); ++i)
        for (int64_t j = 0; j < n; ++j)
          gx.data[idx[i] * n + j] += g.data[static_cast<int64_t>(i) * n + j];
    }, "gather_rows");
  }

  // vertical stack of equally wide blocks (generalizes concat axis 0)
  Var stack_rows(const std::vector<Var>& parts) {
    if (parts.empty()) fail("ShapeMismatch", "stack_rows of nothing");
    int64_t n = val(parts[0]).cols();
    int64_t rows = 0;
    for (Var p : parts) {
      if (val(p).cols() != n)
        fail("ShapeMismatch", "stack_rows: widths ", n, " vs ", val(p).cols());
      rows += val(p).rows();
    }
    Tensor out = Tensor::zeros({rows, n});
    int64_t at = 0;
    for (Var p : parts) {
      const Tensor& t = val(p);
      std::copy(t.data.begin(), t.data.end(), out.data.begin() + at * n);
      at += t.rows();
    }
    return push(std::move(out), [parts, n](Tape& t, int32_t id) {
      const Tensor& g = t.nodes_[id].grad;
      int64_t at = 0;
      for (Var p : parts) {
        Tensor& gp = t.grad(p);
        int64_t r = gp.rows();
        for (int64_t i = 0; i < r * n; ++i) gp.data[i] += g.data[at * n + i];
        at += r;
      }
    }, "stack_rows");
  }

  // mean over all elements -> scalar [1]
  Var mean_all(Var x) {
    const Tensor& X = val(x);
    double s = 0.0;
    for (float v : X.data) s += v;
    double mean = s / static_cast<double>(X.numel());
    Tensor out = Tensor::from({1}, {static_cast<float>(mean)});
    int64_t numel = X.numel();
    return push(std::move(out), [x, numel](Tape& t, int32_t id) {
      float g = t.nodes_[id].grad.data[0] / static_cast<float>(numel);
      Tensor& gx = t.grad(x);
      for (auto& v : gx.data) v += g;
    }, "mean_all", mean);
  }

  // mean over all elements of (x-y)^2 -> scalar
  Var mse_loss(Var x, Var y) {
    const Tensor& X = val(x);
    const Tensor& Y = val(y);
    if (!X.same_shape(Y))
      fail("ShapeMismatch", "mse_loss: ", X.shape_str(), " vs ", Y.shape_str());
    double s = 0.0;
    for (size_t i = 0; i < X.data.size(); ++i) {
      double d = static_cast<double>(X.data[i]) - Y.data[i];
      s += d * d;
    }
    double mean = s / static_cast<double>(X.numel());
    Tensor out = Tensor::from({1}, {static_cast<float>(mean)});
    return push(std::move(out), [x, y](Tape& t, int32_t id) {
      float g = t.nodes_[id].grad.data[0];
      const Tensor& X2 = t.val(x);
      const Tensor& Y2 = t.val(y);
      Tensor& gx = t.grad(x);
      Tensor& gy = t.grad(y);
      float c = 2.0f * g / static_cast<float>(X2.numel());
      for (size_t i = 0; i < X2.data.size(); ++i) {
        float d = X2.data[i] - Y2.data[i];
        gx.data[i] += c * d;
        gy.data[i] -= c * d;
      }
    }, "mse_loss", mean);
  }

  // mean over rows of -log softmax(logits)[label]; fused and numerically
  // stable. labels index [0, C).
  Var cross_entropy_loss(Var logits, std::vector<int> labels) {
    const Tensor& X = val(logits);
    int64_t m = X.rows(), n = X.cols();
    if (static_cast<int64_t>(labels.size()) != m)
      fail("ShapeMismatch", "cross_entropy_loss: ", m, " rows vs ", labels.size(), " labels");
    auto probs = std::make_shared<Tensor>(Tensor::zeros(X.shape));
    double total = 0.0;
    for (int64_t i = 0; i < m; ++i) {
      const float* row = X.data.data() + i * n;
      int lab = labels[static_cast<size_t>(i)];
      if (lab < 0 || lab >= n) fail("ShapeMismatch", "label ", lab, " out of [0,", n, ")");
      float mx = row[0];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      float* prow = probs->data.data() + i * n;
      for (int64_t j = 0; j < n; ++j) {
        double e = std::exp(static_cast<double>(row[j]) - mx);
        prow[j] = static_cast<float>(e);
        sum += e;
      }
      double inv = 1.0 / sum;
      for (int64_t j = 0; j < n; ++j) prow[j] = static_cast<float>(prow[j] * inv);
      total += -(static_cast<double>(row[lab]) - mx - std::log(sum));
    }
    double mean = total / static_cast<double>(m);
    Tensor out = Tensor::from({1}, {static_cast<float>(mean)});
    return push(std::move(out),
                [logits, labels = std::move(labels), probs, m, n](Tape& t, int32_t id) {
                  float g = t.nodes_[id].grad.data[0] / static_cast<float>(m);
                  Tensor& gx = t.grad(logits);
                  for (int64_t i = 0; i < m; ++i) {
                    const float* prow = probs->data.data() + i * n;
                    float* grow = gx.data.data() + i * n;
                    for (int64_t j = 0; j < n; ++j) grow[j] += g * prow[j];
                    grow[labels[static_cast<size_t>(i)]] -= g;
                  }
                }, "cross_entropy_loss", mean);
  }

  // Module-supplied node (graph propagation, attention heads, ...). The
  // backward closure reads grad(of this node) and accumulates into parents.
  Var custom(Tensor value, BackwardFn bw, const char* op_name = "custom",
             double f64_scalar = std::numeric_limits<double>::quiet_NaN()) {
    return push(std::move(value), std::move(bw), op_name, f64_scalar);
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    double f64 = std::numeric_limits<double>::quiet_NaN();
    bool grad_live = false;
  };

  static void axpy(Tensor& dst, const Tensor& src, float c) {
    for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += c * src.data[i];
  }

  template <typename FwdFn, typename BwdFn>
  Var binary_ew(Var a, Var b, const char* name, FwdFn fwd, BwdFn bwd) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) fail("ShapeMismatch", name, ": ", A.shape_str(), " vs ", B.shape_str());
    Tensor out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = fwd(out.data[i], B.data[i]);
    return push(std::move(out), [a, b, bwd](Tape& t, int32_t id) {
      bwd(t, a, b, t.nodes_[id].grad);
    }, name);
  }

  Var push(Tensor value, BackwardFn bw, const char* op_name,
           double f64 = std::numeric_limits<double>::quiet_NaN()) {
    if (check_finite && !value.all_finite())
      fail("NonFinite", op_name, " produced a non-finite value (shape ", value.shape_str(), ")");
    Node n;
    n.value = std::move(value);
    n.backward = std::move(bw);
    n.f64 = f64;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
  }

  int32_t check_var(Var v) const {
    if (!v.valid() || v.id >= static_cast<int32_t>(nodes_.size()))
      fail("ShapeMismatch", "invalid tape var");
    return v.id;
  }

  std::vector<Node> nodes_;
};

}  // namespace flowlab

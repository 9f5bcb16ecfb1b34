#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "flowlab/autodiff.hpp"
#include "flowlab/mlp.hpp"
#include "flowlab/optim.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

// Flows are viewed as img_rows x img_cols single-channel images; each patch
// is one image column (img_rows x 1 x 1), so patch j of a 5x23 image is
// (x[j], x[23+j], x[46+j], x[69+j], x[92+j]).
struct VitConfig {
  int64_t img_rows = 5;
  int64_t img_cols = 23;  // = patch count p
  int64_t embed_dim = 16;  // d, divisible by heads
  int64_t heads = 2;
  int64_t layers = 2;
  int64_t ffn_hidden = 32;
  int64_t out_dim = 8;
  int epochs = 20;
  int64_t batch = 128;
  double lr = 0.001;
  double val_fraction = 0.10;
  uint64_t seed = 0;

  int64_t feature_count() const { return img_rows * img_cols; }
  int64_t patches() const { return img_cols; }
  int64_t patch_dim() const { return img_rows; }
  int64_t tokens() const { return img_cols + 1; }  // patches + class token
  int64_t head_dim() const { return embed_dim / heads; }

  void validate() const {
    if (embed_dim % heads != 0)
      fail("BadConfig", "embed dim ", embed_dim, " not divisible by ", heads, " heads");
  }
};

// one flow -> p x patch_dim matrix (row-major reshape, column patches)
inline Tensor patchify(const float* x, const VitConfig& cfg) {
  Tensor out = Tensor::zeros({cfg.patches(), cfg.patch_dim()});
  for (int64_t j = 0; j < cfg.img_cols; ++j)
    for (int64_t r = 0; r < cfg.img_rows; ++r) out(j, r) = x[r * cfg.img_cols + j];
  return out;
}

inline Tensor patchify_checked(const std::vector<float>& x, const VitConfig& cfg) {
  if (static_cast<int64_t>(x.size()) != cfg.feature_count())
    fail("ShapeMismatch", "patchify: ", x.size(), " values, expected ", cfg.feature_count());
  return patchify(x.data(), cfg);
}

// [B, features] -> [B*p, patch_dim], samples kept contiguous
inline Tensor batch_patchify(const Tensor& rows, const VitConfig& cfg) {
  int64_t bsz = rows.rows();
  if (rows.cols() != cfg.feature_count())
    fail("ShapeMismatch", "batch_patchify: ", rows.shape_str(), " with ", cfg.feature_count(),
         " features expected");
  Tensor out = Tensor::zeros({bsz * cfg.patches(), cfg.patch_dim()});
  for (int64_t b = 0; b < bsz; ++b) {
    const float* x = rows.data.data() + b * cfg.feature_count();
    float* dst = out.data.data() + b * cfg.patches() * cfg.patch_dim();
    for (int64_t j = 0; j < cfg.img_cols; ++j)
      for (int64_t r = 0; r < cfg.img_rows; ++r) dst[j * cfg.patch_dim() + r] = x[r * cfg.img_cols + j];
  }
  return out;
}

namespace detail {

// [cls; patches of sample 0; cls; patches of sample 1; ...] -> [B*T, d]
inline Tape::Var build_sequence(Tape& tape, Tape::Var cls, Tape::Var patches, int64_t bsz,
                                int64_t p) {
  const Tensor& P = tape.val(patches);
  const Tensor& C = tape.val(cls);
  int64_t d = P.cols();
  int64_t t_len = p + 1;
  Tensor out = Tensor::zeros({bsz * t_len, d});
  for (int64_t b = 0; b < bsz; ++b) {
    std::copy_n(C.data.begin(), d, out.data.begin() + b * t_len * d);
    std::copy_n(P.data.begin() + b * p * d, p * d, out.data.begin() + (b * t_len + 1) * d);
  }
  return tape.custom(std::move(out), [cls, patches, bsz, p, d](Tape& t, int32_t id) {
    const Tensor& g = t.grad(Tape::Var{id});
    Tensor& gc = t.grad(cls);
    Tensor& gp = t.grad(patches);
    int64_t t_len = p + 1;
    for (int64_t b = 0; b < bsz; ++b) {
      const float* grow = g.data.data() + b * t_len * d;
      for (int64_t x = 0; x < d; ++x) gc.data[static_cast<size_t>(x)] += grow[x];
      for (int64_t i = 0; i < p * d; ++i) gp.data[b * p * d + i] += grow[d + i];
    }
  }, "build_sequence");
}

// adds pos[t % T] to every token row
inline Tape::Var add_positional(Tape& tape, Tape::Var x, Tape::Var pos, int64_t t_len) {
  const Tensor& X = tape.val(x);
  const Tensor& P = tape.val(pos);
  int64_t d = X.cols();
  if (P.rows() != t_len || P.cols() != d)
    fail("ShapeMismatch", "positional embeddings ", P.shape_str(), " for T=", t_len, " d=", d);
  Tensor out = X;
  int64_t rows = X.rows();
  for (int64_t r = 0; r < rows; ++r) {
    const float* prow = P.data.data() + (r % t_len) * d;
    float* orow = out.data.data() + r * d;
    for (int64_t j = 0; j < d; ++j) orow[j] += prow[j];
  }
  return tape.custom(std::move(out), [x, pos, t_len, d](Tape& t, int32_t id) {
    const Tensor& g = t.grad(Tape::Var{id});
    Tensor& gx = t.grad(x);
    Tensor& gp = t.grad(pos);
    int64_t rows = g.rows();
    for (int64_t r = 0; r < rows; ++r) {
      const float* grow = g.data.data() + r * d;
      float* gprow = gp.data.data() + (r % t_len) * d;
      float* gxrow = gx.data.data() + r * d;
      for (int64_t j = 0; j < d; ++j) {
        gxrow[j] += grow[j];
        gprow[j] += grow[j];
      }
    }
  }, "add_positional");
}

}  // namespace detail

inline void vit_init(ParamStore& store, const VitConfig& cfg, Rng& rng) {
  cfg.validate();
  store.add("vit.patch.w", rand_init(cfg.patch_dim(), cfg.embed_dim, rng));
  store.add("vit.patch.b", Tensor::zeros({cfg.embed_dim}));
  store.add("vit.cls", rand_normal({1, cfg.embed_dim}, 0.02, rng));
  store.add("vit.pos", rand_normal({cfg.tokens(), cfg.embed_dim}, 0.02, rng));
  for (int64_t l = 0; l < cfg.layers; ++l) {
    std::string lp = "vit.l" + std::to_string(l);
    for (int64_t h = 0; h < cfg.heads; ++h) {
      std::string hp = lp + ".h" + std::to_string(h);
      store.add(hp + ".wq", rand_init(cfg.embed_dim, cfg.head_dim(), rng));
      store.add(hp + ".wk", rand_init(cfg.embed_dim, cfg.head_dim(), rng));
      store.add(hp + ".wv", rand_init(cfg.embed_dim, cfg.head_dim(), rng));
    }
    store.add(lp + ".wo", rand_init(cfg.embed_dim, cfg.embed_dim, rng));
    store.add(lp + ".bo", Tensor::zeros({cfg.embed_dim}));
    store.add(lp + ".ffn.w1", rand_init(cfg.embed_dim, cfg.ffn_hidden, rng));
    store.add(lp + ".ffn.b1", Tensor::zeros({cfg.ffn_hidden}));
    store.add(lp + ".ffn.w2", rand_init(cfg.ffn_hidden, cfg.embed_dim, rng));
    store.add(lp + ".ffn.b2", Tensor::zeros({cfg.embed_dim}));
  }
  store.add("vit.out.w", rand_init(cfg.embed_dim, cfg.out_dim, rng));
  store.add("vit.out.b", Tensor::zeros({cfg.out_dim}));
}

// Patch projection, class token, positional embeddings, then `layers` blocks
// of multi-head scaled dot-product attention and a ReLU feedforward, each
// with a residual connection (no layer norm; residual-only blocks). The
// class-token state is projected to out_dim. When `attention_out` is given,
// every softmaxed T x T attention matrix var is appended to it.
inline Tape::Var vit_encoder_forward(Tape& tape, const BoundParams& bp, const VitConfig& cfg,
                                     const Tensor& rows,
                                     std::vector<Tape::Var>* attention_out = nullptr) {
  cfg.validate();
  int64_t bsz = rows.rows();
  int64_t t_len = cfg.tokens();
  int64_t dh = cfg.head_dim();
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tape::Var patches = tape.input(batch_patchify(rows, cfg));
  Tape::Var embedded = tape.add_bias(tape.matmul(patches, bp["vit.patch.w"]), bp["vit.patch.b"]);
  Tape::Var seq = detail::build_sequence(tape, bp["vit.cls"], embedded, bsz, cfg.patches());
  seq = detail::add_positional(tape, seq, bp["vit.pos"], t_len);

  for (int64_t l = 0; l < cfg.layers; ++l) {
    std::string lp = "vit.l" + std::to_string(l);
    // per-head projections over the whole batch, attention per sample
    std::vector<Tape::Var> q(static_cast<size_t>(cfg.heads));
    std::vector<Tape::Var> k(static_cast<size_t>(cfg.heads));
    std::vector<Tape::Var> v(static_cast<size_t>(cfg.heads));
    for (int64_t h = 0; h < cfg.heads; ++h) {
      std::string hp = lp + ".h" + std::to_string(h);
      q[static_cast<size_t>(h)] = tape.matmul(seq, bp[hp + ".wq"]);
      k[static_cast<size_t>(h)] = tape.matmul(seq, bp[hp + ".wk"]);
      v[static_cast<size_t>(h)] = tape.matmul(seq, bp[hp + ".wv"]);
    }
    std::vector<Tape::Var> ctx_rows;
    ctx_rows.reserve(static_cast<size_t>(bsz));
    for (int64_t b = 0; b < bsz; ++b) {
      Tape::Var sample_ctx;
      for (int64_t h = 0; h < cfg.heads; ++h) {
        Tape::Var qb = tape.slice_rows(q[static_cast<size_t>(h)], b * t_len, t_len);
        Tape::Var kb = tape.slice_rows(k[static_cast<size_t>(h)], b * t_len, t_len);
        Tape::Var vb = tape.slice_rows(v[static_cast<size_t>(h)], b * t_len, t_len);
        Tape::Var att = tape.softmax_rows(tape.scale(tape.matmul(qb, kb, false, true), scale));
        if (attention_out) attention_out->push_back(att);
        Tape::Var head = tape.matmul(att, vb);
        sample_ctx = h == 0 ? head : tape.concat(sample_ctx, head, 1);
      }
      ctx_rows.push_back(sample_ctx);
    }
    Tape::Var ctx = tape.stack_rows(ctx_rows);
    Tape::Var projected = tape.add_bias(tape.matmul(ctx, bp[lp + ".wo"]), bp[lp + ".bo"]);
    seq = tape.add(seq, projected);

    Tape::Var f = tape.relu(
        tape.add_bias(tape.matmul(seq, bp[lp + ".ffn.w1"]), bp[lp + ".ffn.b1"]));
    f = tape.add_bias(tape.matmul(f, bp[lp + ".ffn.w2"]), bp[lp + ".ffn.b2"]);
    seq = tape.add(seq, f);
  }

  std::vector<int64_t> cls_rows(static_cast<size_t>(bsz));
  for (int64_t b = 0; b < bsz; ++b) cls_rows[static_cast<size_t>(b)] = b * t_len;
  Tape::Var cls_state = tape.gather_rows(seq, std::move(cls_rows));
  return tape.add_bias(tape.matmul(cls_state, bp["vit.out.w"]), bp["vit.out.b"]);
}

struct VitMlpModel {
  VitConfig cfg;
  MlpConfig head;
  ParamStore params;
};

struct VitEpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

// Joint supervised training of encoder and MLP head under one cross-entropy
// objective; same epoch/holdout discipline as the other pipelines.
inline VitMlpModel train_vit_mlp(const Tensor& rows, const std::vector<int>& labels,
                                 const VitConfig& cfg, const MlpConfig& head,
                                 std::vector<VitEpochStats>* stats = nullptr) {
  cfg.validate();
  VitMlpModel model;
  model.cfg = cfg;
  model.head = head;
  Rng init_rng(derive_seed(cfg.seed, 0x717E));
  vit_init(model.params, cfg, init_rng);
  mlp_init(model.params, "head", head, init_rng);

  AdamParams adam{cfg.lr};
  int64_t n = rows.rows();
  int64_t dim = rows.cols();

  auto gather = [&](const std::vector<int64_t>& idx, int64_t at, int64_t cnt, Tensor& x,
                    std::vector<int>& y) {
    x = Tensor::zeros({cnt, dim});
    y.resize(static_cast<size_t>(cnt));
    for (int64_t i = 0; i < cnt; ++i) {
      int64_t src = idx[static_cast<size_t>(at + i)];
      std::copy_n(rows.data.begin() + src * dim, dim, x.data.begin() + i * dim);
      y[static_cast<size_t>(i)] = labels[static_cast<size_t>(src)];
    }
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochPlan plan = plan_epoch(n, epoch, cfg.seed, cfg.val_fraction);
    double loss_sum = 0.0;
    int64_t loss_rows = 0;
    for (int64_t at = 0; at < static_cast<int64_t>(plan.update_rows.size()); at += cfg.batch) {
      int64_t cnt = std::min<int64_t>(cfg.batch, static_cast<int64_t>(plan.update_rows.size()) - at);
      Tensor x;
      std::vector<int> y;
      gather(plan.update_rows, at, cnt, x, y);
      Tape tape;
      BoundParams bp(tape, model.params);
      Tape::Var rep = vit_encoder_forward(tape, bp, cfg, x);
      Tape::Var logits = mlp_forward(tape, bp, "head", head, rep);
      Tape::Var loss = tape.cross_entropy_loss(logits, y);
      tape.backward(loss);
      bp.harvest_grads();
      adam_step(model.params, adam);
      loss_sum += tape.scalar(loss) * static_cast<double>(cnt);
      loss_rows += cnt;
    }
    if (stats) {
      VitEpochStats es;
      es.train_loss = loss_rows ? loss_sum / static_cast<double>(loss_rows) : 0.0;
      if (!plan.val_rows.empty()) {
        Tensor x;
        std::vector<int> y;
        gather(plan.val_rows, 0, static_cast<int64_t>(plan.val_rows.size()), x, y);
        Tape tape;
        BoundParams bp(tape, model.params);
        Tape::Var rep = vit_encoder_forward(tape, bp, cfg, x);
        Tape::Var logits = mlp_forward(tape, bp, "head", head, rep);
        es.val_loss = tape.scalar(tape.cross_entropy_loss(logits, y));
      }
      stats->push_back(es);
    }
  }
  return model;
}

}  // namespace flowlab

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "flowlab/autodiff.hpp"
#include "flowlab/io.hpp"
#include "flowlab/optim.hpp"
#include "flowlab/rng.hpp"
#include "flowlab/tensor.hpp"

namespace flowlab {

struct VaeConfig {
  std::vector<int64_t> encoder_widths = {115, 64, 32};  // trunk; decoder mirrors it
  int64_t latent = 8;
  double beta = 1.0;  // weight on the KL term
  int epochs = 20;
  int64_t batch = 128;
  double lr = 0.001;
  double val_fraction = 0.10;
  uint64_t seed = 0;
};

// Shared ReLU trunk with linear mu / logvar heads; the decoder mirrors the
// trunk widths and ends in a linear reconstruction layer.
inline void vae_init(ParamStore& store, const VaeConfig& cfg, Rng& rng) {
  const auto& w = cfg.encoder_widths;
  for (size_t l = 0; l + 1 < w.size(); ++l) {
    store.add("vae.enc.w" + std::to_string(l), rand_init(w[l], w[l + 1], rng));
    store.add("vae.enc.b" + std::to_string(l), Tensor::zeros({w[l + 1]}));
  }
  store.add("vae.mu.w", rand_init(w.back(), cfg.latent, rng));
  store.add("vae.mu.b", Tensor::zeros({cfg.latent}));
  store.add("vae.logvar.w", rand_init(w.back(), cfg.latent, rng));
  store.add("vae.logvar.b", Tensor::zeros({cfg.latent}));

  int64_t prev = cfg.latent;
  size_t dl = 0;
  for (size_t l = w.size(); l-- > 0; ++dl) {
    store.add("vae.dec.w" + std::to_string(dl), rand_init(prev, w[l], rng));
    store.add("vae.dec.b" + std::to_string(dl), Tensor::zeros({w[l]}));
    prev = w[l];
  }
}

inline std::pair<Tape::Var, Tape::Var> vae_encode(Tape& tape, const BoundParams& bp,
                                                  const VaeConfig& cfg, Tape::Var x) {
  Tape::Var h = x;
  for (size_t l = 0; l + 1 < cfg.encoder_widths.size(); ++l) {
    h = tape.relu(tape.add_bias(tape.matmul(h, bp["vae.enc.w" + std::to_string(l)]),
                                bp["vae.enc.b" + std::to_string(l)]));
  }
  Tape::Var mu = tape.add_bias(tape.matmul(h, bp["vae.mu.w"]), bp["vae.mu.b"]);
  Tape::Var logvar = tape.add_bias(tape.matmul(h, bp["vae.logvar.w"]), bp["vae.logvar.b"]);
  return {mu, logvar};
}

inline Tape::Var vae_decode(Tape& tape, const BoundParams& bp, const VaeConfig& cfg,
                            Tape::Var z) {
  Tape::Var h = z;
  size_t n_layers = cfg.encoder_widths.size();
  for (size_t l = 0; l < n_layers; ++l) {
    h = tape.add_bias(tape.matmul(h, bp["vae.dec.w" + std::to_string(l)]),
                      bp["vae.dec.b" + std::to_string(l)]);
    if (l + 1 < n_layers) h = tape.relu(h);
  }
  return h;
}

// z = mu + exp(0.5 logvar) * eps; eps enters as a constant so gradients flow
// to mu and logvar only.
inline Tape::Var reparameterize(Tape& tape, Tape::Var mu, Tape::Var logvar, Tape::Var eps) {
  return tape.add(mu, tape.mul(tape.exp_(tape.scale(logvar, 0.5)), eps));
}

inline Tensor draw_noise(std::vector<int64_t> shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.normal_f();
  return t;
}

// Mean over the batch of 0.5 * sum_j (mu_j^2 + e^lv_j - lv_j - 1); the
// closed-form KL divergence to the unit Gaussian prior, never negative.
inline Tape::Var kl_gauss(Tape& tape, Tape::Var mu, Tape::Var logvar) {
  const Tensor& MU = tape.val(mu);
  const Tensor& LV = tape.val(logvar);
  if (!MU.same_shape(LV))
    fail("ShapeMismatch", "kl_gauss: ", MU.shape_str(), " vs ", LV.shape_str());
  int64_t m = MU.rows();
  double total = 0.0;
  for (size_t i = 0; i < MU.data.size(); ++i) {
    double muv = MU.data[i], lv = LV.data[i];
    total += 0.5 * (muv * muv + std::exp(lv) - lv - 1.0);
  }
  double value = total / static_cast<double>(m);
  if (!(value >= 0.0))  // every summand is nonnegative; NaN also lands here
    fail("NonFinite", "KL term came out ", value);
  Tensor out = Tensor::from({1}, {static_cast<float>(value)});
  return tape.custom(std::move(out), [mu, logvar, m](Tape& t, int32_t id) {
    float g = t.grad(Tape::Var{id}).data[0] / static_cast<float>(m);
    const Tensor& MU2 = t.val(mu);
    const Tensor& LV2 = t.val(logvar);
    Tensor& gmu = t.grad(mu);
    Tensor& glv = t.grad(logvar);
    for (size_t i = 0; i < MU2.data.size(); ++i) {
      gmu.data[i] += g * MU2.data[i];
      glv.data[i] += g * 0.5f * (std::exp(LV2.data[i]) - 1.0f);
    }
  }, "kl_gauss", value);
}

struct ElboTerms {
  Tape::Var recon;  // mean over batch of the per-sample squared error
  Tape::Var kl;
  Tape::Var total;  // recon + beta * kl
};

// Reconstruction is the per-sample sum of squared errors averaged over the
// batch (Gaussian likelihood up to constants), i.e. feature_count * MSE.
inline ElboTerms elbo_loss(Tape& tape, const BoundParams& bp, const VaeConfig& cfg, Tape::Var x,
                           Tape::Var eps) {
  auto [mu, logvar] = vae_encode(tape, bp, cfg, x);
  Tape::Var z = reparameterize(tape, mu, logvar, eps);
  Tape::Var xhat = vae_decode(tape, bp, cfg, z);
  ElboTerms t;
  t.recon = tape.scale(tape.mse_loss(xhat, x), static_cast<double>(cfg.encoder_widths.front()));
  t.kl = kl_gauss(tape, mu, logvar);
  t.total = tape.add(t.recon, tape.scale(t.kl, cfg.beta));
  return t;
}

struct VaeModel {
  VaeConfig cfg;
  ParamStore params;

  // mu head only; no sampling at inference
  Tensor embed(const Tensor& rows) const {
    int64_t n = rows.rows();
    Tensor out = Tensor::zeros({n, cfg.latent});
    const int64_t chunk = 4096;
    for (int64_t at = 0; at < n; at += chunk) {
      int64_t cnt = std::min(chunk, n - at);
      Tape tape;
      BoundParams bp(tape, const_cast<ParamStore&>(params));
      Tensor block = Tensor::zeros({cnt, rows.cols()});
      std::copy_n(rows.data.begin() + at * rows.cols(), cnt * rows.cols(), block.data.begin());
      auto [mu, logvar] = vae_encode(tape, bp, cfg, tape.input(std::move(block)));
      (void)logvar;
      std::copy(tape.val(mu).data.begin(), tape.val(mu).data.end(),
                out.data.begin() + at * cfg.latent);
    }
    return out;
  }
};

struct VaeEpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

// Label-free training on standardized rows: per epoch a seeded 10% holdout
// is scored but not stepped on; the rest is consumed as shuffled mini
// batches under Adam.
inline VaeModel train_vae(const Tensor& rows, const VaeConfig& cfg,
                          std::vector<VaeEpochStats>* stats = nullptr) {
  Rng init_rng(derive_seed(cfg.seed, 0x7AE0));
  VaeModel model;
  model.cfg = cfg;
  vae_init(model.params, cfg, init_rng);

  Rng noise_rng(derive_seed(cfg.seed, 0x7AE1));
  AdamParams adam{cfg.lr};
  int64_t n = rows.rows();
  int64_t dim = rows.cols();

  auto batch_rows = [&](const std::vector<int64_t>& idx, int64_t at, int64_t cnt) {
    Tensor b = Tensor::zeros({cnt, dim});
    for (int64_t i = 0; i < cnt; ++i)
      std::copy_n(rows.data.begin() + idx[static_cast<size_t>(at + i)] * dim, dim,
                  b.data.begin() + i * dim);
    return b;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochPlan plan = plan_epoch(n, epoch, cfg.seed, cfg.val_fraction);
    double loss_sum = 0.0;
    int64_t loss_rows = 0;
    for (int64_t at = 0; at < static_cast<int64_t>(plan.update_rows.size()); at += cfg.batch) {
      int64_t cnt = std::min<int64_t>(cfg.batch, static_cast<int64_t>(plan.update_rows.size()) - at);
      Tape tape;
      BoundParams bp(tape, model.params);
      Tape::Var x = tape.input(batch_rows(plan.update_rows, at, cnt));
      Tape::Var eps = tape.input(draw_noise({cnt, cfg.latent}, noise_rng));
      ElboTerms terms = elbo_loss(tape, bp, cfg, x, eps);
      tape.backward(terms.total);
      bp.harvest_grads();
      adam_step(model.params, adam);
      loss_sum += tape.scalar(terms.total) * static_cast<double>(cnt);
      loss_rows += cnt;
    }

    if (stats) {
      VaeEpochStats es;
      es.train_loss = loss_rows ? loss_sum / static_cast<double>(loss_rows) : 0.0;
      if (!plan.val_rows.empty()) {
        // separate stream so logging never shifts the training trajectory
        Rng val_rng(derive_seed(cfg.seed, 0x7AE20000ull + static_cast<uint64_t>(epoch)));
        Tape tape;
        BoundParams bp(tape, model.params);
        int64_t cnt = static_cast<int64_t>(plan.val_rows.size());
        Tape::Var x = tape.input(batch_rows(plan.val_rows, 0, cnt));
        Tape::Var eps = tape.input(draw_noise({cnt, cfg.latent}, val_rng));
        ElboTerms terms = elbo_loss(tape, bp, cfg, x, eps);
        es.val_loss = tape.scalar(terms.total);
      }
      stats->push_back(es);
    }
  }
  return model;
}

// NBEM1 embeddings cache: magic, u64 N, u32 latent dim, N*L f32 little-endian.
inline void save_embeddings(const std::string& path, const Tensor& emb) {
  auto os = io::open_write(path);
  io::put_magic(os, "NBEM1");
  io::put_u64(os, static_cast<uint64_t>(emb.rows()));
  io::put_u32(os, static_cast<uint32_t>(emb.cols()));
  io::put_f32_array(os, emb.data.data(), emb.data.size());
  if (!os) fail("FileWrite", "short write to ", path);
}

inline Tensor load_embeddings(const std::string& path) {
  auto is = io::open_read(path);
  io::expect_magic(is, "NBEM1", path);
  int64_t n = static_cast<int64_t>(io::get_u64(is));
  int64_t l = static_cast<int64_t>(io::get_u32(is));
  Tensor emb = Tensor::zeros({n, l});
  io::get_f32_array(is, emb.data.data(), emb.data.size());
  if (!is) fail("FileRead", path, ": truncated embeddings");
  return emb;
}

}  // namespace flowlab

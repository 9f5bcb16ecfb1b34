#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowlab/autodiff.hpp"
#include "flowlab/rng.hpp"
#include "flowlab/tensor.hpp"

namespace flowlab {

struct AdamParams {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named trainable parameters with their gradients and Adam moments.
// Insertion order is preserved; it defines the checkpoint layout.
class ParamStore {
 public:
  struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;  // first moment
    Tensor v;  // second moment
    int64_t t = 0;
  };

  Param& add(const std::string& name, Tensor init) {
    if (index_.count(name)) fail("DuplicateParam", "parameter ", name, " already exists");
    Param p;
    p.name = name;
    p.grad = Tensor::zeros(init.shape);
    p.m = Tensor::zeros(init.shape);
    p.v = Tensor::zeros(init.shape);
    p.value = std::move(init);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return params_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Param& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) fail("UnknownParam", "no parameter named ", name);
    return params_[it->second];
  }
  const Param& at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
  }

  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }
  size_t size() const { return params_.size(); }

  void zero_grads() {
    for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0f);
  }

  int64_t total_values() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, size_t> index_;
};

// Bias-corrected Adam on every parameter; gradients are zeroed afterwards.
inline void adam_step(ParamStore& store, const AdamParams& hp = {}) {
  for (auto& p : store.all()) {
    p.t += 1;
    double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(p.t));
    double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(p.t));
    for (size_t i = 0; i < p.value.data.size(); ++i) {
      double g = p.grad.data[i];
      double m = hp.beta1 * p.m.data[i] + (1.0 - hp.beta1) * g;
      double v = hp.beta2 * p.v.data[i] + (1.0 - hp.beta2) * g * g;
      p.m.data[i] = static_cast<float>(m);
      p.v.data[i] = static_cast<float>(v);
      double mhat = m / bc1;
      double vhat = v / bc2;
      p.value.data[i] =
          static_cast<float>(p.value.data[i] - hp.lr * mhat / (std::sqrt(vhat) + hp.eps));
    }
    std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0f);
  }
}

// Leaf vars for every parameter on a fresh tape; harvest_grads() copies the
// tape gradients back into the store after backward().
class BoundParams {
 public:
  BoundParams(Tape& tape, ParamStore& store) : tape_(&tape), store_(&store) {
    vars_.reserve(store.size());
    for (auto& p : store.all()) vars_.push_back(tape.input(p.value));
  }

  Tape::Var operator[](const std::string& name) const {
    return vars_[index_of(name)];
  }

  // accumulate=false overwrites store grads (the usual per-step pattern)
  void harvest_grads(bool accumulate = false) {
    auto& params = store_->all();
    for (size_t i = 0; i < params.size(); ++i) {
      if (!tape_->grad_live(vars_[i])) {
        if (!accumulate)
          std::fill(params[i].grad.data.begin(), params[i].grad.data.end(), 0.0f);
        continue;
      }
      const Tensor& g = tape_->grad(vars_[i]);
      if (accumulate) {
        for (size_t j = 0; j < g.data.size(); ++j) params[i].grad.data[j] += g.data[j];
      } else {
        params[i].grad.data = g.data;
      }
    }
  }

 private:
  size_t index_of(const std::string& name) const {
    auto& params = store_->all();
    for (size_t i = 0; i < params.size(); ++i)
      if (params[i].name == name) return i;
    fail("UnknownParam", "no parameter named ", name);
  }

  Tape* tape_;
  ParamStore* store_;
  std::vector<Tape::Var> vars_;
};

// Per-epoch holdout: a fresh seeded draw keeps `val_fraction` of the rows
// out of that epoch's gradient updates; their loss is logged instead. The
// remaining rows arrive already shuffled and are consumed as batches.
struct EpochPlan {
  std::vector<int64_t> update_rows;
  std::vector<int64_t> val_rows;
};

inline EpochPlan plan_epoch(int64_t n_rows, int epoch, uint64_t seed, double val_fraction) {
  std::vector<int64_t> perm(static_cast<size_t>(n_rows));
  for (int64_t i = 0; i < n_rows; ++i) perm[static_cast<size_t>(i)] = i;
  Rng rng(derive_seed(seed, 0xEB0C0000ull + static_cast<uint64_t>(epoch)));
  rng.shuffle(perm);
  int64_t n_val = static_cast<int64_t>(std::llround(val_fraction * static_cast<double>(n_rows)));
  n_val = std::min(n_val, n_rows - 1);
  EpochPlan plan;
  plan.val_rows.assign(perm.begin(), perm.begin() + n_val);
  plan.update_rows.assign(perm.begin() + n_val, perm.end());
  return plan;
}

// Central finite differences vs. the backward pass, sampled over at most
// `max_coords` coordinates. `loss_fn(compute_grads)` evaluates the loss from
// the store's current values; with compute_grads=true it must also leave
// d(loss)/d(param) in each parameter's grad tensor. Any randomness inside
// must be frozen across calls.
//
// Per coordinate the difference quotient is taken at eps and again at eps/4
// and the better-agreeing estimate wins: ReLU stacks are piecewise linear,
// and a kink inside the interval breaks the smoothness assumption of the
// central difference itself. A wrong backward pass produces the same wrong
// value at both widths, so the refinement cannot mask one.
//
// The reported error is |fd - g| / max(|fd|, |g|, 0.05); the floor keeps
// coordinates whose gradient is lost in f32 forward noise from dominating
// the maximum, while anything large enough to matter is compared relatively.
inline double grad_check(ParamStore& store, const std::function<double(bool)>& loss_fn,
                         double eps = 1e-3, int max_coords = 200, uint64_t seed = 12345) {
  store.zero_grads();
  loss_fn(true);

  std::vector<std::pair<size_t, size_t>> coords;  // (param index, flat offset)
  auto& params = store.all();
  for (size_t pi = 0; pi < params.size(); ++pi)
    for (size_t i = 0; i < params[pi].value.data.size(); ++i) coords.emplace_back(pi, i);

  Rng rng(seed);
  rng.shuffle(coords);
  if (static_cast<int>(coords.size()) > max_coords) coords.resize(max_coords);

  double max_err = 0.0;
  for (auto [pi, i] : coords) {
    float& slot = params[pi].value.data[i];
    float orig = slot;
    double analytic = params[pi].grad.data[i];

    // divide by the perturbation actually realized in f32 storage
    auto central = [&](double h) {
      slot = static_cast<float>(static_cast<double>(orig) + h);
      double hi_x = slot;
      double f_hi = loss_fn(false);
      slot = static_cast<float>(static_cast<double>(orig) - h);
      double lo_x = slot;
      double f_lo = loss_fn(false);
      slot = orig;
      return (f_hi - f_lo) / (hi_x - lo_x);
    };
    auto rel_err = [&](double fd) {
      return std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 0.05});
    };

    double err = rel_err(central(eps));
    if (err >= 1e-3) err = std::min(err, rel_err(central(eps / 4.0)));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace flowlab

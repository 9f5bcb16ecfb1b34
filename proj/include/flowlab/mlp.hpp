#pragma once

#include <string>
#include <vector>

#include "flowlab/autodiff.hpp"
#include "flowlab/optim.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

// Dense classifier head: dims like {8, 32, C}, ReLU between layers, none
// after the last. Biases can be disabled to line layers up with the bias-free
// graph convolutions in equivalence tests.
struct MlpConfig {
  std::vector<int64_t> dims = {8, 32, 10};
  bool with_bias = true;
};

inline void mlp_init(ParamStore& store, const std::string& prefix, const MlpConfig& cfg,
                     Rng& rng) {
  for (size_t l = 0; l + 1 < cfg.dims.size(); ++l) {
    store.add(prefix + ".w" + std::to_string(l), rand_init(cfg.dims[l], cfg.dims[l + 1], rng));
    if (cfg.with_bias)
      store.add(prefix + ".b" + std::to_string(l), Tensor::zeros({cfg.dims[l + 1]}));
  }
}

inline Tape::Var mlp_forward(Tape& tape, const BoundParams& bp, const std::string& prefix,
                             const MlpConfig& cfg, Tape::Var x) {
  Tape::Var h = x;
  for (size_t l = 0; l + 1 < cfg.dims.size(); ++l) {
    h = tape.matmul(h, bp[prefix + ".w" + std::to_string(l)]);
    if (cfg.with_bias) h = tape.add_bias(h, bp[prefix + ".b" + std::to_string(l)]);
    if (l + 2 < cfg.dims.size()) h = tape.relu(h);
  }
  return h;
}

}  // namespace flowlab

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowlab/common.hpp"

namespace flowlab {

// Unsigned 128-bit with overflow detection; arithmetic errors out instead of
// wrapping so cost figures are always exact.
struct Wide {
  unsigned __int128 v = 0;

  Wide() = default;
  Wide(uint64_t x) : v(x) {}  // NOLINT(google-explicit-constructor)

  friend Wide operator+(Wide a, Wide b) {
    Wide r;
    r.v = a.v + b.v;
    if (r.v < a.v) fail("Overflow", "cost addition exceeds 128 bits");
    return r;
  }

  friend Wide operator*(Wide a, Wide b) {
    Wide r;
    if (a.v != 0 && b.v > static_cast<unsigned __int128>(-1) / a.v)
      fail("Overflow", "cost multiplication exceeds 128 bits");
    r.v = a.v * b.v;
    return r;
  }

  friend bool operator==(Wide a, Wide b) { return a.v == b.v; }
  friend bool operator!=(Wide a, Wide b) { return a.v != b.v; }
  friend bool operator<(Wide a, Wide b) { return a.v < b.v; }
  friend bool operator>(Wide a, Wide b) { return a.v > b.v; }

  std::string str() const {
    if (v == 0) return "0";
    std::string s;
    unsigned __int128 x = v;
    while (x > 0) {
      s.insert(s.begin(), static_cast<char>('0' + static_cast<int>(x % 10)));
      x /= 10;
    }
    return s;
  }
};

// Every symbol of the complexity table. c = a + b is enforced.
struct CostInputs {
  uint64_t N = 1;      // graph nodes
  uint64_t E = 1;      // graph edges
  uint64_t D = 1;      // node feature dimension
  uint64_t K = 1;      // per-head output size
  uint64_t H = 1;      // attention heads
  uint64_t n = 1;      // layer count
  uint64_t p = 1;      // patches
  uint64_t d = 1;      // patch embedding dimension
  uint64_t d_in = 1;   // dense input dim
  uint64_t d_out = 1;  // dense output dim
  uint64_t a = 1;      // encoder layers
  uint64_t b = 1;      // decoder layers

  uint64_t c() const { return a + b; }

  void validate() const {
    for (uint64_t x : {N, E, D, K, H, n, p, d, d_in, d_out, a, b})
      if (x == 0) fail("BadCostInputs", "all cost symbols must be positive integers");
  }
};

inline CostInputs cost_inputs_from_json(const nlohmann::json& j) {
  CostInputs in;
  auto get = [&](const char* key, uint64_t& dst) {
    if (j.contains(key)) dst = j.at(key).get<uint64_t>();
  };
  get("N", in.N);
  get("E", in.E);
  get("D", in.D);
  get("K", in.K);
  get("H", in.H);
  get("n", in.n);
  get("p", in.p);
  get("d", in.d);
  get("d_in", in.d_in);
  get("d_out", in.d_out);
  get("a", in.a);
  get("b", in.b);
  if (j.contains("c") && j.at("c").get<uint64_t>() != in.c())
    fail("BadCostInputs", "c must equal a + b (got c=", j.at("c").get<uint64_t>(), ", a+b=",
         in.c(), ")");
  in.validate();
  return in;
}

// dense encoder/decoder stack: c * d_in * d_out
inline Wide cost_vae(uint64_t c, uint64_t d_in, uint64_t d_out) {
  return Wide(c) * Wide(d_in) * Wide(d_out);
}

// n transformer layers of self-attention plus feedforward: n * (p^2 d + p d^2)
inline Wide cost_vit(uint64_t n, uint64_t p, uint64_t d) {
  return Wide(n) * (Wide(p) * Wide(p) * Wide(d) + Wide(p) * Wide(d) * Wide(d));
}

// sparse graph construction: N D^2 + E D
inline Wide cost_graph_build(uint64_t N, uint64_t D, uint64_t E) {
  return Wide(N) * Wide(D) * Wide(D) + Wide(E) * Wide(D);
}

// n graph-convolution layers: n (E d_in + N d_in d_out)
inline Wide cost_gcn(uint64_t n, uint64_t E, uint64_t d_in, uint64_t N, uint64_t d_out) {
  return Wide(n) * (Wide(E) * Wide(d_in) + Wide(N) * Wide(d_in) * Wide(d_out));
}

// n attention layers: n (N D K + H E K)
inline Wide cost_gat(uint64_t n, uint64_t N, uint64_t D, uint64_t K, uint64_t H, uint64_t E) {
  return Wide(n) * (Wide(N) * Wide(D) * Wide(K) + Wide(H) * Wide(E) * Wide(K));
}

enum class CostKind { VaeGcn, VaeGat, VaeMlp, VitMlp };

inline const char* cost_kind_name(CostKind k) {
  switch (k) {
    case CostKind::VaeGcn: return "vae-gcn";
    case CostKind::VaeGat: return "vae-gat";
    case CostKind::VaeMlp: return "vae-mlp";
    case CostKind::VitMlp: return "vit-mlp";
  }
  return "?";
}

struct CostBreakdown {
  std::string kind;
  std::vector<std::pair<std::string, Wide>> terms;
  Wide total;
};

// Per-pipeline totals as the sum of the published constituent terms. The
// VAE-MLP row carries a literal "+1" for the constant-time latent sampling;
// it is kept as stated rather than absorbed.
inline CostBreakdown cost_pipeline(CostKind kind, const CostInputs& in) {
  CostBreakdown out;
  out.kind = cost_kind_name(kind);
  auto term = [&](const std::string& name, Wide v) { out.terms.emplace_back(name, v); };

  switch (kind) {
    case CostKind::VaeGcn:
      term("vae c*d_in*d_out", cost_vae(in.c(), in.d_in, in.d_out));
      term("graph N*D^2+E*D", cost_graph_build(in.N, in.D, in.E));
      term("gcn n*(E*d_in+N*d_in*d_out)", cost_gcn(in.n, in.E, in.d_in, in.N, in.d_out));
      break;
    case CostKind::VaeGat:
      term("vae c*d_in*d_out", cost_vae(in.c(), in.d_in, in.d_out));
      term("graph N*D^2+E*D", cost_graph_build(in.N, in.D, in.E));
      term("gat n*(N*D*K+H*E*K)", cost_gat(in.n, in.N, in.D, in.K, in.H, in.E));
      break;
    case CostKind::VaeMlp:
      term("vae c*d_in*d_out", cost_vae(in.c(), in.d_in, in.d_out));
      term("latent sampling", Wide(1));
      term("mlp n*d_in*d_out", Wide(in.n) * Wide(in.d_in) * Wide(in.d_out));
      break;
    case CostKind::VitMlp:
      term("vit n*(p^2*d+p*d^2)", cost_vit(in.n, in.p, in.d));
      term("mlp n*d_in*d_out", Wide(in.n) * Wide(in.d_in) * Wide(in.d_out));
      break;
  }
  out.total = Wide(0);
  for (auto& [name, v] : out.terms) out.total = out.total + v;
  return out;
}

// Smallest value of `symbol` in [lo, hi] where cost(kind_a) exceeds
// cost(kind_b), scanning the integer range; nullopt when none.
inline std::optional<uint64_t> crossover(CostKind kind_a, CostKind kind_b,
                                         const std::string& symbol, uint64_t lo, uint64_t hi,
                                         CostInputs base) {
  if (lo > hi) fail("BadCostInputs", "empty crossover range [", lo, ",", hi, "]");
  uint64_t* slot = nullptr;
  if (symbol == "N") slot = &base.N;
  else if (symbol == "E") slot = &base.E;
  else if (symbol == "D") slot = &base.D;
  else if (symbol == "K") slot = &base.K;
  else if (symbol == "H") slot = &base.H;
  else if (symbol == "n") slot = &base.n;
  else if (symbol == "p") slot = &base.p;
  else if (symbol == "d") slot = &base.d;
  else if (symbol == "d_in") slot = &base.d_in;
  else if (symbol == "d_out") slot = &base.d_out;
  else if (symbol == "a") slot = &base.a;
  else if (symbol == "b") slot = &base.b;
  else fail("BadCostInputs", "unknown cost symbol \"", symbol, "\"");

  for (uint64_t v = lo; v <= hi; ++v) {
    *slot = v;
    if (cost_pipeline(kind_a, base).total > cost_pipeline(kind_b, base).total) return v;
    if (v == UINT64_MAX) break;
  }
  return std::nullopt;
}

}  // namespace flowlab

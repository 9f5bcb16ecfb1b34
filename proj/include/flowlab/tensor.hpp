#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "flowlab/common.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

// Dense row-major f32 tensor. Shapes are 1-D ([n]) or 2-D ([rows, cols])
// throughout this codebase; reductions accumulate in f64 where it matters.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<float> data;

  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(static_cast<size_t>(numel_of(t.shape)), 0.0f);
    return t;
  }

  static Tensor full(std::vector<int64_t> s, float v) {
    Tensor t = zeros(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor from(std::vector<int64_t> s, std::vector<float> values) {
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(values);
    if (static_cast<int64_t>(t.data.size()) != numel_of(t.shape))
      fail("ShapeMismatch", "tensor literal has ", t.data.size(), " values for shape ",
           shape_str(t.shape));
    return t;
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int64_t rows() const { return ndim() == 2 ? shape[0] : 1; }
  int64_t cols() const { return ndim() == 2 ? shape[1] : (ndim() == 1 ? shape[0] : 1); }

  float& operator()(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  float operator()(int64_t r, int64_t c) const {
    return data[static_cast<size_t>(r * cols() + c)];
  }
  float& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
      if (i) out += "x";
      out += std::to_string(s[i]);
    }
    return out + "]";
  }
  std::string shape_str() const { return shape_str(shape); }
};

// He-style uniform init, the usual choice for the ReLU stacks used here.
inline Tensor rand_init(int64_t fan_in, int64_t fan_out, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = Tensor::zeros({fan_in, fan_out});
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

inline Tensor rand_normal(std::vector<int64_t> shape, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = static_cast<float>(rng.normal() * stddev);
  return t;
}

}  // namespace flowlab

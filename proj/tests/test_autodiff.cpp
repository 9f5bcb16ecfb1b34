#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "flowlab/autodiff.hpp"
#include "flowlab/optim.hpp"
#include "flowlab/rng.hpp"

using namespace flowlab;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = static_cast<float>(rng.normal() * scale);
  return t;
}

// naive f64 triple loop, the reference for the matmul kernel
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  Tensor c = Tensor::zeros({a.shape[0], b.shape[1]});
  for (int64_t i = 0; i < a.shape[0]; ++i)
    for (int64_t j = 0; j < b.shape[1]; ++j) {
      double s = 0.0;
      for (int64_t k = 0; k < a.shape[1]; ++k)
        s += static_cast<double>(a(i, k)) * static_cast<double>(b(k, j));
      c(i, j) = static_cast<float>(s);
    }
  return c;
}

// grad_check driver: `build` assembles a scalar loss from bound params
double check_gradients(ParamStore& ps,
                       const std::function<Tape::Var(Tape&, BoundParams&)>& build) {
  auto loss_fn = [&](bool grads) {
    Tape tape;
    tape.check_finite = true;
    BoundParams bp(tape, ps);
    Tape::Var loss = build(tape, bp);
    if (grads) {
      tape.backward(loss);
      bp.harvest_grads();
    }
    return tape.scalar(loss);
  };
  return grad_check(ps, loss_fn);
}

}  // namespace

TEST_CASE("softmax of an all-zero row is uniform", "[autodiff]") {
  Tape t;
  auto x = t.input(Tensor::zeros({1, 4}));
  auto y = t.softmax_rows(x);
  for (int j = 0; j < 4; ++j) CHECK(t.val(y)(0, j) == Catch::Approx(0.25));
}

TEST_CASE("relu forward and backward at the kink", "[autodiff]") {
  Tape t;
  auto x = t.input(Tensor::from({1, 3}, {-1.0f, 0.0f, 2.0f}));
  auto y = t.relu(x);
  CHECK(t.val(y).data == std::vector<float>{0.0f, 0.0f, 2.0f});

  auto loss = t.mean_all(y);  // upstream grad 1/3 per element
  t.backward(loss);
  const Tensor& g = t.grad(x);
  CHECK(g.data[0] == 0.0f);
  CHECK(g.data[1] == 0.0f);  // subgradient at 0 is 0
  CHECK(g.data[2] == Catch::Approx(1.0f / 3.0f));
}

TEST_CASE("cross entropy of uniform logits is ln C", "[autodiff]") {
  Tape t;
  auto logits = t.input(Tensor::zeros({1, 2}));
  auto loss = t.cross_entropy_loss(logits, {0});
  // oracle: -log softmax([0,0])[0] evaluated independently
  double expect = -std::log(std::exp(0.0) / (std::exp(0.0) + std::exp(0.0)));
  CHECK(t.scalar(loss) == Catch::Approx(expect).margin(1e-7));
  CHECK(t.scalar(loss) == Catch::Approx(0.69314718).margin(1e-6));
}

TEST_CASE("matmul matches the triple-loop oracle", "[autodiff]") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    int64_t m = 1 + static_cast<int64_t>(rng.uniform_int(32));
    int64_t k = 1 + static_cast<int64_t>(rng.uniform_int(32));
    int64_t n = 1 + static_cast<int64_t>(rng.uniform_int(32));
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);
    Tape t;
    auto c = t.matmul(t.input(a), t.input(b));
    Tensor ref = matmul_oracle(a, b);
    for (int64_t i = 0; i < m * n; ++i)
      REQUIRE(t.val(c).data[static_cast<size_t>(i)] ==
              Catch::Approx(ref.data[static_cast<size_t>(i)]).margin(1e-5));
  }
}

TEST_CASE("matmul transpose variants agree with explicit transposition", "[autodiff]") {
  Rng rng(11);
  Tensor a = random_tensor({5, 7}, rng);
  Tensor b = random_tensor({5, 7}, rng);
  Tensor at = Tensor::zeros({7, 5});
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 7; ++j) at(j, i) = a(i, j);

  Tape t;
  auto nt = t.matmul(t.input(a), t.input(b), false, true);   // a . b^T
  auto tn = t.matmul(t.input(a), t.input(b), true, false);   // a^T . b
  Tensor ref_nt = matmul_oracle(a, [&] {
    Tensor bt = Tensor::zeros({7, 5});
    for (int64_t i = 0; i < 5; ++i)
      for (int64_t j = 0; j < 7; ++j) bt(j, i) = b(i, j);
    return bt;
  }());
  Tensor ref_tn = matmul_oracle(at, b);
  for (size_t i = 0; i < ref_nt.data.size(); ++i)
    REQUIRE(t.val(nt).data[i] == Catch::Approx(ref_nt.data[i]).margin(1e-5));
  for (size_t i = 0; i < ref_tn.data.size(); ++i)
    REQUIRE(t.val(tn).data[i] == Catch::Approx(ref_tn.data[i]).margin(1e-5));
}

TEST_CASE("softmax rows sum to one and are positive", "[autodiff]") {
  Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor x = random_tensor({1 + static_cast<int64_t>(rng.uniform_int(16)),
                              1 + static_cast<int64_t>(rng.uniform_int(16))},
                             rng, 5.0);
    Tape t;
    auto y = t.softmax_rows(t.input(x));
    const Tensor& Y = t.val(y);
    for (int64_t i = 0; i < Y.rows(); ++i) {
      double sum = 0.0;
      for (int64_t j = 0; j < Y.cols(); ++j) {
        REQUIRE(Y(i, j) > 0.0f);
        sum += Y(i, j);
      }
      REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
    }
  }
}

TEST_CASE("shape mismatches name the op and both shapes", "[autodiff]") {
  Tape t;
  auto a = t.input(Tensor::zeros({2, 3}));
  auto b = t.input(Tensor::zeros({4, 5}));
  try {
    t.matmul(a, b);
    FAIL("expected ShapeMismatch");
  } catch (const DataError& e) {
    CHECK(e.kind() == "ShapeMismatch");
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
    CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
    CHECK(std::string(e.what()).find("[4x5]") != std::string::npos);
  }
  CHECK_THROWS_AS(t.add(a, b), DataError);
  CHECK_THROWS_AS(t.add_bias(a, b), DataError);
}

TEST_CASE("every primitive passes the finite-difference check", "[autodiff]") {
  Rng rng(42);

  auto run = [&](const char* name, std::vector<std::pair<const char*, std::vector<int64_t>>> params,
                 std::function<Tape::Var(Tape&, BoundParams&)> build) {
    ParamStore ps;
    for (auto& [pname, shape] : params) ps.add(pname, random_tensor(shape, rng, 0.8));
    double err = check_gradients(ps, build);
    INFO(name);
    CHECK(err < 1e-2);
  };

  Tensor target = random_tensor({6, 5}, rng);
  auto mse_vs_target = [target](Tape& t, Tape::Var y) {
    return t.mse_loss(y, t.input(target));
  };

  run("matmul", {{"a", {6, 9}}, {"b", {9, 5}}}, [&](Tape& t, BoundParams& bp) {
    return mse_vs_target(t, t.matmul(bp["a"], bp["b"]));
  });
  run("matmul_nt", {{"a", {6, 9}}, {"b", {5, 9}}}, [&](Tape& t, BoundParams& bp) {
    return mse_vs_target(t, t.matmul(bp["a"], bp["b"], false, true));
  });
  run("matmul_tn", {{"a", {9, 6}}, {"b", {9, 5}}}, [&](Tape& t, BoundParams& bp) {
    return mse_vs_target(t, t.matmul(bp["a"], bp["b"], true, false));
  });
  run("add_bias", {{"x", {6, 5}}, {"b", {5}}}, [&](Tape& t, BoundParams& bp) {
    return mse_vs_target(t, t.add_bias(bp["x"], bp["b"]));
  });
  run("add", {{"x", {6, 5}}, {"y", {6, 5}}}, [&](Tape& t, BoundParams& bp) {
    return mse_vs_target(t, t.add(bp["x"], bp["y"]));
  });
  run("sub", {{"x", {6, 5}}, {"y", {6, 5}}}, [&](Tape& t, BoundParams& bp) {
    return mse_vs_target(t, t.sub(bp["x"], bp["y"]));
  });
  run("mul", {{"x", {6, 5}}, {"y", {6, 5}}}, [&](Tape& t, BoundParams& bp) {
    return mse_vs_target(t, t.mul(bp["x"], bp["y"]));
  });
  run("scale", {{"x", {6, 5}}}, [&](Tape& t, BoundParams& bp) {
    return mse_vs_target(t, t.scale(bp["x"], -1.7));
  });
  run("exp", {{"x", {6, 5}}}, [&](Tape& t, BoundParams& bp) {
    return mse_vs_target(t, t.exp_(bp["x"]));
  });
  run("relu", {{"x", {6, 5}}}, [&](Tape& t, BoundParams& bp) {
    return mse_vs_target(t, t.relu(bp["x"]));
  });
  run("leaky_relu", {{"x", {6, 5}}}, [&](Tape& t, BoundParams& bp) {
    return mse_vs_target(t, t.leaky_relu(bp["x"], 0.2));
  });
  run("softmax_rows", {{"x", {6, 5}}}, [&](Tape& t, BoundParams& bp) {
    return mse_vs_target(t, t.softmax_rows(bp["x"]));
  });
  run("mean_rows", {{"x", {9, 5}}}, [&](Tape& t, BoundParams& bp) {
    Tensor tgt = Tensor::full({1, 5}, 0.3f);
    return t.mse_loss(t.mean_rows(bp["x"]), t.input(tgt));
  });
  run("concat_axis0", {{"x", {4, 5}}, {"y", {2, 5}}}, [&](Tape& t, BoundParams& bp) {
    return mse_vs_target(t, t.concat(bp["x"], bp["y"], 0));
  });
  run("concat_axis1", {{"x", {6, 2}}, {"y", {6, 3}}}, [&](Tape& t, BoundParams& bp) {
    return mse_vs_target(t, t.concat(bp["x"], bp["y"], 1));
  });
  run("slice_rows", {{"x", {9, 5}}}, [&](Tape& t, BoundParams& bp) {
    Tensor tgt = Tensor::full({3, 5}, 0.1f);
    return t.mse_loss(t.slice_rows(bp["x"], 2, 3), t.input(tgt));
  });
  run("gather_rows", {{"x", {9, 5}}}, [&](Tape& t, BoundParams& bp) {
    Tensor tgt = Tensor::full({4, 5}, -0.2f);
    return t.mse_loss(t.gather_rows(bp["x"], {7, 0, 3, 3}), t.input(tgt));
  });
  run("mse_loss", {{"x", {6, 5}}, {"y", {6, 5}}}, [&](Tape& t, BoundParams& bp) {
    return t.mse_loss(bp["x"], bp["y"]);
  });
  run("cross_entropy_loss", {{"x", {8, 4}}}, [&](Tape& t, BoundParams& bp) {
    return t.cross_entropy_loss(bp["x"], {0, 1, 2, 3, 3, 2, 1, 0});
  });
}

TEST_CASE("gradients accumulate when a var feeds two consumers", "[autodiff]") {
  // loss = mean((x+x)^2) so dloss/dx = 8x/n; catches += vs = mistakes
  ParamStore ps;
  Rng rng(5);
  ps.add("x", random_tensor({3, 3}, rng));
  double err = check_gradients(ps, [](Tape& t, BoundParams& bp) {
    auto two_x = t.add(bp["x"], bp["x"]);
    return t.mse_loss(two_x, t.input(Tensor::zeros({3, 3})));
  });
  CHECK(err < 1e-2);
}

TEST_CASE("finiteness checking reports the offending op", "[autodiff]") {
  Tape t;
  t.check_finite = true;
  auto x = t.input(Tensor::full({1, 2}, 200.0f));
  CHECK_THROWS_AS(t.exp_(x), DataError);  // exp(200) overflows f32
}

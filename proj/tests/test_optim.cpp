#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "flowlab/autodiff.hpp"
#include "flowlab/checkpoint.hpp"
#include "flowlab/optim.hpp"
#include "flowlab/rng.hpp"

using namespace flowlab;

TEST_CASE("adam with zero gradients leaves values untouched", "[optim]") {
  ParamStore ps;
  Rng rng(1);
  ps.add("w", rand_init(4, 4, rng));
  Tensor before = ps.at("w").value;
  adam_step(ps);
  adam_step(ps);
  CHECK(ps.at("w").value.data == before.data);
  CHECK(ps.at("w").t == 2);
}

TEST_CASE("first adam step with unit gradient moves by about lr", "[optim]") {
  // hand evaluation at t=1: m=0.1, v=0.001, mhat=1, vhat=1,
  // delta = lr / (1 + eps); measured through f32 storage (ulp at 5 ~ 5e-7)
  ParamStore ps;
  ps.add("w", Tensor::from({1}, {5.0f}));
  ps.at("w").grad.data[0] = 1.0f;
  adam_step(ps);
  double delta = 5.0 - ps.at("w").value.data[0];
  CHECK(delta == Catch::Approx(0.001).epsilon(1e-3));
  CHECK(ps.at("w").t == 1);
  CHECK(ps.at("w").grad.data[0] == 0.0f);  // gradients zeroed by the step
}

TEST_CASE("step counter advances once per adam_step", "[optim]") {
  ParamStore ps;
  ps.add("a", Tensor::zeros({2}));
  ps.add("b", Tensor::zeros({3}));
  for (int i = 0; i < 5; ++i) {
    ps.at("a").grad.data[0] = 1.0f;
    ps.at("b").grad.data[1] = -1.0f;
    adam_step(ps);
  }
  CHECK(ps.at("a").t == 5);
  CHECK(ps.at("b").t == 5);
}

TEST_CASE("grad_check on w^2 is exact under central differences", "[optim]") {
  ParamStore ps;
  ps.add("w", Tensor::from({1}, {3.0f}));
  auto loss_fn = [&](bool grads) {
    Tape t;
    BoundParams bp(t, ps);
    auto loss = t.mse_loss(bp["w"], t.input(Tensor::zeros({1})));
    if (grads) {
      t.backward(loss);
      bp.harvest_grads();
    }
    return t.scalar(loss);
  };
  ps.zero_grads();
  loss_fn(true);
  CHECK(ps.at("w").grad.data[0] == Catch::Approx(6.0));  // d(w^2)/dw at 3
  CHECK(grad_check(ps, loss_fn) < 1e-6);
}

TEST_CASE("grad_check on a 2-layer mlp with cross entropy", "[optim]") {
  Rng rng(9);
  ParamStore ps;
  ps.add("w1", rand_init(10, 6, rng));
  ps.add("b1", Tensor::zeros({6}));
  ps.add("w2", rand_init(6, 3, rng));
  ps.add("b2", Tensor::zeros({3}));
  Tensor x = rand_normal({8, 10}, 1.0, rng);
  std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1};

  auto loss_fn = [&](bool grads) {
    Tape t;
    BoundParams bp(t, ps);
    auto h = t.relu(t.add_bias(t.matmul(t.input(x), bp["w1"]), bp["b1"]));
    auto logits = t.add_bias(t.matmul(h, bp["w2"]), bp["b2"]);
    auto loss = t.cross_entropy_loss(logits, labels);
    if (grads) {
      t.backward(loss);
      bp.harvest_grads();
    }
    return t.scalar(loss);
  };
  CHECK(grad_check(ps, loss_fn) < 1e-2);
}

TEST_CASE("grad_check on a constant function reports zero error", "[optim]") {
  ParamStore ps;
  ps.add("w", Tensor::from({2}, {1.0f, -2.0f}));
  auto loss_fn = [&](bool grads) {
    Tape t;
    BoundParams bp(t, ps);
    (void)bp["w"];
    auto c = t.input(Tensor::full({1}, 4.0f));
    auto loss = t.mse_loss(c, t.input(Tensor::zeros({1})));
    if (grads) {
      t.backward(loss);
      bp.harvest_grads();
    }
    return t.scalar(loss);
  };
  ps.zero_grads();
  loss_fn(true);
  CHECK(ps.at("w").grad.data[0] == 0.0f);
  CHECK(grad_check(ps, loss_fn) < 1e-6);
}

TEST_CASE("checkpoint round-trips values, names and config", "[optim]") {
  Rng rng(4);
  ParamStore ps;
  ps.add("enc.w1", rand_init(7, 3, rng));
  ps.add("enc.b1", rand_normal({3}, 0.5, rng));
  ps.add("head.w", rand_init(3, 2, rng));
  nlohmann::ordered_json cfg;
  cfg["kind"] = "demo";
  cfg["latent"] = 8;

  std::string path = "ckpt_roundtrip_test.nbck";
  save_checkpoint(path, ps, cfg);
  LoadedCheckpoint lc = load_checkpoint(path);

  REQUIRE(lc.store.size() == 3);
  CHECK(lc.store.all()[0].name == "enc.w1");
  CHECK(lc.store.all()[1].name == "enc.b1");
  CHECK(lc.store.all()[2].name == "head.w");
  CHECK(lc.store.at("enc.w1").value.data == ps.at("enc.w1").value.data);
  CHECK(lc.store.at("head.w").value.shape == std::vector<int64_t>{3, 2});
  CHECK(lc.config["kind"] == "demo");
  CHECK(lc.config["latent"] == 8);
  std::remove(path.c_str());
}

TEST_CASE("identical seeds give identical adam trajectories", "[optim]") {
  auto train = [](uint64_t seed) {
    Rng rng(seed);
    ParamStore ps;
    ps.add("w", rand_init(5, 4, rng));
    Tensor x = rand_normal({6, 5}, 1.0, rng);
    std::vector<int> labels = {0, 1, 2, 3, 0, 1};
    for (int step = 0; step < 10; ++step) {
      Tape t;
      BoundParams bp(t, ps);
      auto loss = t.cross_entropy_loss(t.matmul(t.input(x), bp["w"]), labels);
      t.backward(loss);
      bp.harvest_grads();
      adam_step(ps);
    }
    return ps.at("w").value.data;
  };
  CHECK(train(77) == train(77));
}

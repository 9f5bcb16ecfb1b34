#include <catch2/catch_amalgamated.hpp>

#include "flowlab/metrics.hpp"
#include "flowlab/rng.hpp"

using namespace flowlab;

namespace {
const std::vector<std::string> kNames = {"a", "b", "c", "d"};
}

TEST_CASE("perfect predictions give perfect scores", "[metrics]") {
  std::vector<int> t = {0, 1, 2, 1, 0};
  EvalReport r = compute_metrics(t, t, 3, kNames);
  CHECK(r.accuracy == 1.0);
  CHECK(r.f1_w == 1.0);
  for (const auto& pc : r.per_class)
    if (pc.support > 0) CHECK(pc.f1 == 1.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(r.confusion.at(i, j) == 0);
}

TEST_CASE("hand-worked four-sample example", "[metrics]") {
  // true=[0,0,1,1], pred=[0,1,1,1]:
  //   class 0: P=1, R=1/2, F1=2/3; class 1: P=2/3, R=1, F1=4/5
  //   weights (1/2, 1/2) -> weighted F1 = 1/3 + 2/5 = 0.7333...
  EvalReport r = compute_metrics({0, 0, 1, 1}, {0, 1, 1, 1}, 2, kNames);
  CHECK(r.accuracy == Catch::Approx(0.75).margin(1e-12));
  CHECK(r.per_class[0].precision == Catch::Approx(1.0).margin(1e-12));
  CHECK(r.per_class[0].recall == Catch::Approx(0.5).margin(1e-12));
  CHECK(r.per_class[0].f1 == Catch::Approx(2.0 / 3.0).margin(1e-12));
  CHECK(r.per_class[1].precision == Catch::Approx(2.0 / 3.0).margin(1e-12));
  CHECK(r.per_class[1].recall == Catch::Approx(1.0).margin(1e-12));
  CHECK(r.per_class[1].f1 == Catch::Approx(0.8).margin(1e-12));
  CHECK(r.f1_w == Catch::Approx(11.0 / 15.0).margin(1e-10));
}

TEST_CASE("weighted recall equals accuracy on random labelings", "[metrics]") {
  Rng rng(123);
  for (int rep = 0; rep < 200; ++rep) {
    int classes = 2 + static_cast<int>(rng.uniform_int(6));
    size_t n = 1 + rng.uniform_int(50);
    std::vector<int> t(n), p(n);
    for (size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(classes)));
      p[i] = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(classes)));
    }
    EvalReport r = compute_metrics(t, p, classes, kNames);
    REQUIRE(r.recall_w == r.accuracy);  // exact identity

    // the telescoped value agrees with the literal weighted sum
    double literal = 0.0;
    for (const auto& pc : r.per_class)
      literal += (static_cast<double>(pc.support) / static_cast<double>(n)) * pc.recall;
    REQUIRE(r.recall_w == Catch::Approx(literal).margin(1e-12));
  }
}

TEST_CASE("confusion row sums are class supports", "[metrics]") {
  Rng rng(5);
  std::vector<int> t(100), p(100);
  for (size_t i = 0; i < 100; ++i) {
    t[i] = static_cast<int>(rng.uniform_int(4));
    p[i] = static_cast<int>(rng.uniform_int(4));
  }
  EvalReport r = compute_metrics(t, p, 4, kNames);
  for (int c = 0; c < 4; ++c) {
    CHECK(r.confusion.row_sum(c) == r.per_class[static_cast<size_t>(c)].support);
  }
  CHECK(r.confusion.total() == 100);
}

TEST_CASE("metrics from raw labels equal metrics from the confusion matrix", "[metrics]") {
  Rng rng(17);
  std::vector<int> t(60), p(60);
  for (size_t i = 0; i < 60; ++i) {
    t[i] = static_cast<int>(rng.uniform_int(3));
    p[i] = static_cast<int>(rng.uniform_int(3));
  }
  EvalReport a = compute_metrics(t, p, 3, kNames, "multiclass", "demo");
  EvalReport b = metrics_from_confusion(a.confusion, kNames, "multiclass", "demo");
  CHECK(a == b);
}

TEST_CASE("empty classes report zero metrics and zero support", "[metrics]") {
  EvalReport r = compute_metrics({0, 0}, {0, 1}, 3, kNames);
  CHECK(r.per_class[2].support == 0);
  CHECK(r.per_class[2].precision == 0.0);
  CHECK(r.per_class[2].recall == 0.0);
  CHECK(r.per_class[2].f1 == 0.0);
  // predicted-but-never-true class: precision 0 by the zero-denominator rule
  CHECK(r.per_class[1].recall == 0.0);
}

TEST_CASE("report json round-trips exactly", "[metrics]") {
  Rng rng(9);
  std::vector<int> t(40), p(40);
  for (size_t i = 0; i < 40; ++i) {
    t[i] = static_cast<int>(rng.uniform_int(4));
    p[i] = static_cast<int>(rng.uniform_int(4));
  }
  EvalReport r = compute_metrics(t, p, 4, kNames, "binary", "vae-mlp");
  nlohmann::ordered_json j = report_to_json(r);
  EvalReport back = report_from_json(nlohmann::ordered_json::parse(j.dump()));
  CHECK(back == r);
}

TEST_CASE("mismatched label lengths error out", "[metrics]") {
  CHECK_THROWS_AS(compute_metrics({0, 1}, {0}, 2, kNames), DataError);
}

TEST_CASE("rendered table shows two-decimal percentages", "[metrics]") {
  EvalReport r = compute_metrics({0, 0, 1, 1}, {0, 1, 1, 1}, 2, kNames, "binary", "vae-mlp");
  std::string table = render_table({r, r, r, r});
  CHECK(table.find("75.00%") != std::string::npos);
  CHECK(table.find("vae-mlp") != std::string::npos);
  // four pipelines -> four data rows
  CHECK(std::count(table.begin(), table.end(), '\n') == 6);

  std::string csv = confusion_csv(r.confusion, {"a", "b"});
  CHECK(csv == "true\\pred,a,b\na,1,1\nb,0,2\n");
}

// flowlab: train and compare IoT traffic classifiers (VAE/ViT encoders with
// MLP/GCN/GAT heads) on N-BaIoT-format flow statistics.
//
// Subcommands: ingest, synth, train, evaluate, compare, cost.
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowlab/cost.hpp"
#include "flowlab/dataset.hpp"
#include "flowlab/pipeline.hpp"
#include "flowlab/rundir.hpp"

using namespace flowlab;
namespace fs = std::filesystem;

namespace {

void print_class_counts(const DataMatrix& data) {
  auto counts = data.class_counts();
  std::printf("%-15s %12s\n", "class", "rows");
  for (int c = 0; c < kClassCount; ++c)
    std::printf("%-15s %12lld\n", class_name(c), static_cast<long long>(counts[static_cast<size_t>(c)]));
  std::printf("%-15s %12lld\n", "total", static_cast<long long>(data.n()));
}

struct DataFlags {
  std::string cache_path;
  std::string manifest_path;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", cache_path, "NBIO1 dataset cache");
    cmd->add_option("--manifest", manifest_path, "manifest JSON of labeled CSVs");
  }

  DataMatrix load() const {
    if (!cache_path.empty()) return load_cache(cache_path);
    if (!manifest_path.empty()) return ingest(load_manifest(manifest_path));
    throw UsageError("provide --data <cache.nbio> or --manifest <manifest.json>");
  }

  std::string source() const { return !cache_path.empty() ? cache_path : manifest_path; }
};

struct TrainFlags {
  std::string kind = "vae-mlp";
  std::string task = "multiclass";
  uint64_t seed = 0;
  int epochs = 20;
  int64_t batch = 128;
  double lr = 0.001;
  int64_t subsample = 0;
  bool deterministic = true;
  std::string out_dir;
  std::string config_path;

  void attach(CLI::App* cmd, bool with_kind) {
    if (with_kind)
      cmd->add_option("--kind", kind, "vae-mlp|vae-gcn|vae-gat|vit-mlp")
          ->check(CLI::IsMember({"vae-mlp", "vae-gcn", "vae-gat", "vit-mlp"}));
    cmd->add_option("--task", task, "binary|multiclass")
        ->check(CLI::IsMember({"binary", "multiclass"}));
    cmd->add_option("--seed", seed, "run seed");
    cmd->add_option("--epochs", epochs, "training epochs")->check(CLI::PositiveNumber);
    cmd->add_option("--batch", batch, "batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", lr, "learning rate");
    cmd->add_option("--subsample-per-class", subsample, "stratified per-class row cap");
    cmd->add_flag("--deterministic,!--no-deterministic", deterministic,
                  "fixed seeds and reduction order (always on in this build)");
    cmd->add_option("--out", out_dir, "output directory")->required();
    cmd->add_option("--config", config_path, "JSON config file; explicit flags override it");
  }

  // config file supplies any value whose flag was not given on the command line
  void merge_config(const CLI::App* cmd) {
    if (config_path.empty()) return;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(io::read_text_file(config_path));
    } catch (const nlohmann::json::exception& e) {
      fail("BadConfig", config_path, ": ", e.what());
    }
    auto take = [&](const char* flag, const char* key, auto& dst) {
      if (cmd->count(flag) == 0 && j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
    };
    take("--kind", "kind", kind);
    take("--task", "task", task);
    take("--seed", "seed", seed);
    take("--epochs", "epochs", epochs);
    take("--batch", "batch", batch);
    take("--lr", "lr", lr);
    take("--subsample-per-class", "subsample_per_class", subsample);
    take("--deterministic", "deterministic", deterministic);
  }

  RunConfig to_run_config(const std::string& data_source) const {
    RunConfig rc;
    rc.kind = kind_from_name(kind);
    rc.task = task_from_name(task);
    rc.hyper.seed = seed;
    rc.hyper.epochs = epochs;
    rc.hyper.batch = batch;
    rc.hyper.lr = lr;
    rc.hyper.deterministic = deterministic;
    rc.subsample_per_class = subsample;
    rc.data_source = data_source;
    return rc;
  }
};

RunResult run_one(const RunConfig& rc, const DataMatrix& raw, const std::string& out_dir) {
  PreparedDataset data = prepare_from_config(raw, rc);
  RunResult result = run_pipeline(rc.kind, data, rc.task, rc.hyper, rc.opts);
  write_run_dir(out_dir, rc, result);
  return result;
}

int cmd_ingest(const std::string& manifest_path, const std::string& out_path) {
  Manifest manifest = load_manifest(manifest_path);
  std::printf("ingesting %zu files...\n", manifest.entries.size());
  DataMatrix data = ingest(manifest);
  print_class_counts(data);
  save_cache(out_path, data);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int cmd_synth(int64_t per_class, int classes, uint64_t seed, const std::string& out_path) {
  DataMatrix data = make_blobs(per_class, classes, seed);
  save_cache(out_path, data);
  std::printf("wrote %lld synthetic rows (%d classes) to %s\n",
              static_cast<long long>(data.n()), classes, out_path.c_str());
  return 0;
}

int cmd_train(const DataFlags& df, const TrainFlags& tf) {
  RunConfig rc = tf.to_run_config(df.source());
  DataMatrix raw = df.load();
  RunResult result = run_one(rc, raw, tf.out_dir);
  std::printf("%s", render_table({result.report}).c_str());
  std::printf("run directory: %s\n", tf.out_dir.c_str());
  return 0;
}

int cmd_evaluate(const DataFlags& df, const std::string& run_dir) {
  DataMatrix raw = df.load();
  EvalReport report = evaluate_run(run_dir, raw);
  std::printf("%s", render_table({report}).c_str());
  return 0;
}

int cmd_compare(const DataFlags& df, const TrainFlags& tf) {
  DataMatrix raw = df.load();
  std::vector<EvalReport> reports;
  nlohmann::ordered_json cmp = nlohmann::ordered_json::array();
  for (const char* kind : {"vae-mlp", "vae-gcn", "vae-gat", "vit-mlp"}) {
    TrainFlags one = tf;
    one.kind = kind;
    RunConfig rc = one.to_run_config(df.source());
    std::string dir = (fs::path(tf.out_dir) / kind).string();
    std::printf("== %s ==\n", kind);
    RunResult result = run_one(rc, raw, dir);
    reports.push_back(result.report);
    cmp.push_back(report_to_json(result.report));
  }
  fs::create_directories(tf.out_dir);
  std::string table = render_table(reports);
  io::write_text_file((fs::path(tf.out_dir) / "comparison.json").string(), cmp.dump(2) + "\n");
  io::write_text_file((fs::path(tf.out_dir) / "comparison_table.txt").string(), table);
  std::printf("\n%s", table.c_str());
  return 0;
}

int cmd_cost(const std::string& inputs_path, const std::string& crossover_spec,
             const std::string& vary, uint64_t lo, uint64_t hi) {
  CostInputs in;
  if (!inputs_path.empty())
    in = cost_inputs_from_json(nlohmann::json::parse(io::read_text_file(inputs_path)));
  std::printf("%-10s %-32s %s\n", "pipeline", "term", "cost");
  for (CostKind k : {CostKind::VaeGcn, CostKind::VaeGat, CostKind::VaeMlp, CostKind::VitMlp}) {
    CostBreakdown bd = cost_pipeline(k, in);
    for (const auto& [name, v] : bd.terms)
      std::printf("%-10s %-32s %s\n", bd.kind.c_str(), name.c_str(), v.str().c_str());
    std::printf("%-10s %-32s %s\n", bd.kind.c_str(), "total", bd.total.str().c_str());
  }
  if (!crossover_spec.empty()) {
    auto comma = crossover_spec.find(',');
    if (comma == std::string::npos)
      throw UsageError("--crossover wants \"kind_a,kind_b\"");
    CostKind a = static_cast<CostKind>(0), b = a;
    auto parse_kind = [](const std::string& s) {
      for (CostKind k : {CostKind::VaeGcn, CostKind::VaeGat, CostKind::VaeMlp, CostKind::VitMlp})
        if (s == cost_kind_name(k)) return k;
      throw UsageError("unknown cost pipeline \"" + s + "\"");
    };
    a = parse_kind(crossover_spec.substr(0, comma));
    b = parse_kind(crossover_spec.substr(comma + 1));
    auto x = crossover(a, b, vary, lo, hi, in);
    if (x)
      std::printf("crossover: %s exceeds %s from %s=%llu\n", cost_kind_name(a), cost_kind_name(b),
                  vary.c_str(), static_cast<unsigned long long>(*x));
    else
      std::printf("crossover: none in [%llu, %llu]\n", static_cast<unsigned long long>(lo),
                  static_cast<unsigned long long>(hi));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"traffic classification pipelines over N-BaIoT flow statistics"};
  app.require_subcommand(1);

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "parse labeled CSVs into an NBIO1 cache");
  std::string manifest_path, out_path;
  ingest_cmd->add_option("--manifest", manifest_path, "manifest JSON")->required();
  ingest_cmd->add_option("--out", out_path, "output cache path")->required();

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic Gaussian-blob dataset");
  int64_t per_class = 1250;
  int classes = 3;
  uint64_t synth_seed = 0;
  std::string synth_out;
  synth_cmd->add_option("--per-class", per_class, "rows per class")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--classes", classes, "class count (2-10)");
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->add_option("--out", synth_out, "output cache path")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train one pipeline into a run directory");
  DataFlags train_data;
  TrainFlags train_flags;
  train_data.attach(train_cmd);
  train_flags.attach(train_cmd, true);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "rescore an existing run directory");
  DataFlags eval_data;
  std::string eval_run;
  eval_data.attach(eval_cmd);
  eval_cmd->add_option("--out", eval_run, "run directory to rescore")->required();

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "train all four pipelines and tabulate");
  DataFlags compare_data;
  TrainFlags compare_flags;
  compare_data.attach(compare_cmd);
  compare_flags.attach(compare_cmd, false);

  // cost
  auto* cost_cmd = app.add_subcommand("cost", "evaluate the complexity-table formulas");
  std::string cost_inputs, crossover_spec, vary = "E";
  uint64_t lo = 0, hi = 0;
  cost_cmd->add_option("--inputs", cost_inputs, "CostInputs JSON (defaults are all ones)");
  cost_cmd->add_option("--crossover", crossover_spec, "kind_a,kind_b");
  cost_cmd->add_option("--vary", vary, "symbol to scan");
  cost_cmd->add_option("--lo", lo, "scan start");
  cost_cmd->add_option("--hi", hi, "scan end");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message and usage hint
    return 1;
  }

  try {
    if (*ingest_cmd) return cmd_ingest(manifest_path, out_path);
    if (*synth_cmd) return cmd_synth(per_class, classes, synth_seed, synth_out);
    if (*train_cmd) {
      train_flags.merge_config(train_cmd);
      return cmd_train(train_data, train_flags);
    }
    if (*eval_cmd) return cmd_evaluate(eval_data, eval_run);
    if (*compare_cmd) {
      compare_flags.merge_config(compare_cmd);
      return cmd_compare(compare_data, compare_flags);
    }
    if (*cost_cmd) return cmd_cost(cost_inputs, crossover_spec, vary, lo, hi);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}

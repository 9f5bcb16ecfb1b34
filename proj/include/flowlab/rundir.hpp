#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "flowlab/pipeline.hpp"

// Run directory layout:
//   config.json      resolved configuration (byte-stable for equal inputs)
//   checkpoint.nbck  all trained parameters
//   embeddings.nbem  latent rows, train then test (VAE kinds)
//   graph.nbgr       kNN graph over the embeddings (graph kinds)
//   report.json      metrics; no timing data so reruns are byte-identical
//   confusion.csv    confusion matrix with class names
//   timings.json     wall time per stage (kept out of report.json)
//   log.txt          per-epoch losses and stage notes

namespace flowlab {

struct RunConfig {
  PipelineKind kind = PipelineKind::VaeMlp;
  Task task = Task::Multiclass;
  TrainHyper hyper;
  PipelineOptions opts;
  int64_t subsample_per_class = 0;  // 0 = use every row
  std::string data_source;
};

inline nlohmann::ordered_json run_config_to_json(const RunConfig& rc) {
  nlohmann::ordered_json j;
  j["kind"] = kind_name(rc.kind);
  j["task"] = task_name(rc.task);
  j["seed"] = rc.hyper.seed;
  j["epochs"] = rc.hyper.epochs;
  j["batch"] = rc.hyper.batch;
  j["lr"] = rc.hyper.lr;
  j["val_fraction"] = rc.hyper.val_fraction;
  j["deterministic"] = rc.hyper.deterministic;
  j["knn_k"] = rc.opts.knn_k;
  j["subsample_per_class"] = rc.subsample_per_class;
  j["data"] = rc.data_source;
  j["vae"] = {{"encoder_widths", rc.opts.vae.encoder_widths},
              {"latent", rc.opts.vae.latent},
              {"beta", rc.opts.vae.beta}};
  j["vit"] = {{"img_rows", rc.opts.vit.img_rows},   {"img_cols", rc.opts.vit.img_cols},
              {"embed_dim", rc.opts.vit.embed_dim}, {"heads", rc.opts.vit.heads},
              {"layers", rc.opts.vit.layers},       {"ffn_hidden", rc.opts.vit.ffn_hidden},
              {"out_dim", rc.opts.vit.out_dim}};
  j["gcn"] = {{"hidden", rc.opts.gcn.hidden}};
  j["gat"] = {{"heads", rc.opts.gat.heads},
              {"head_dim", rc.opts.gat.head_dim},
              {"leaky_slope", rc.opts.gat.leaky_slope}};
  j["mlp"] = {{"hidden", rc.opts.mlp.dims.size() == 3 ? rc.opts.mlp.dims[1] : 32}};
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::ordered_json& j) {
  RunConfig rc;
  rc.kind = kind_from_name(j.at("kind").get<std::string>());
  rc.task = task_from_name(j.at("task").get<std::string>());
  rc.hyper.seed = j.at("seed").get<uint64_t>();
  rc.hyper.epochs = j.at("epochs").get<int>();
  rc.hyper.batch = j.at("batch").get<int64_t>();
  rc.hyper.lr = j.at("lr").get<double>();
  rc.hyper.val_fraction = j.at("val_fraction").get<double>();
  rc.hyper.deterministic = j.at("deterministic").get<bool>();
  rc.opts.knn_k = j.at("knn_k").get<int>();
  rc.subsample_per_class = j.at("subsample_per_class").get<int64_t>();
  rc.data_source = j.at("data").get<std::string>();
  rc.opts.vae.encoder_widths = j.at("vae").at("encoder_widths").get<std::vector<int64_t>>();
  rc.opts.vae.latent = j.at("vae").at("latent").get<int64_t>();
  rc.opts.vae.beta = j.at("vae").at("beta").get<double>();
  rc.opts.vit.img_rows = j.at("vit").at("img_rows").get<int64_t>();
  rc.opts.vit.img_cols = j.at("vit").at("img_cols").get<int64_t>();
  rc.opts.vit.embed_dim = j.at("vit").at("embed_dim").get<int64_t>();
  rc.opts.vit.heads = j.at("vit").at("heads").get<int64_t>();
  rc.opts.vit.layers = j.at("vit").at("layers").get<int64_t>();
  rc.opts.vit.ffn_hidden = j.at("vit").at("ffn_hidden").get<int64_t>();
  rc.opts.vit.out_dim = j.at("vit").at("out_dim").get<int64_t>();
  rc.opts.gcn.hidden = j.at("gcn").at("hidden").get<int64_t>();
  rc.opts.gat.heads = j.at("gat").at("heads").get<int64_t>();
  rc.opts.gat.head_dim = j.at("gat").at("head_dim").get<int64_t>();
  rc.opts.gat.leaky_slope = j.at("gat").at("leaky_slope").get<double>();
  rc.opts.mlp.dims = {rc.opts.vae.latent, j.at("mlp").at("hidden").get<int64_t>(), 10};
  return rc;
}

inline void write_run_dir(const std::string& dir, const RunConfig& rc, const RunResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto path = [&](const char* name) { return (fs::path(dir) / name).string(); };

  io::write_text_file(path("config.json"), run_config_to_json(rc).dump(2) + "\n");
  save_checkpoint(path("checkpoint.nbck"), result.model.params, run_config_to_json(rc));
  if (result.embeddings_all.numel() > 0)
    save_embeddings(path("embeddings.nbem"), result.embeddings_all);
  if (result.model.is_graph_kind()) save_graph(path("graph.nbgr"), result.model.tgraph.graph);

  io::write_text_file(path("report.json"), report_to_json(result.report).dump(2) + "\n");
  io::write_text_file(path("confusion.csv"),
                      confusion_csv(result.report.confusion, task_class_names(result.model.task)));

  nlohmann::ordered_json tj;
  for (const auto& t : result.timings) tj[t.stage] = t.seconds;
  io::write_text_file(path("timings.json"), tj.dump(2) + "\n");

  std::string log;
  for (const auto& line : result.log_lines) log += line + "\n";
  io::write_text_file(path("log.txt"), log);
}

// Applies the recorded subsample spec and split seed, so the evaluation set
// is exactly the one the run trained against.
inline PreparedDataset prepare_from_config(const DataMatrix& raw, const RunConfig& rc) {
  if (rc.subsample_per_class > 0) {
    DataMatrix sub = subsample_stratified(raw, rc.subsample_per_class,
                                          derive_seed(rc.hyper.seed, 0x5AB5));
    return prepare_dataset(sub, rc.hyper.seed);
  }
  return prepare_dataset(raw, rc.hyper.seed);
}

// Rebuilds a model from a run directory and rescores the test split.
inline EvalReport evaluate_run(const std::string& dir, const DataMatrix& raw) {
  namespace fs = std::filesystem;
  auto path = [&](const char* name) { return (fs::path(dir) / name).string(); };
  RunConfig rc = run_config_from_json(
      nlohmann::ordered_json::parse(io::read_text_file(path("config.json"))));
  LoadedCheckpoint ck = load_checkpoint(path("checkpoint.nbck"));

  PreparedDataset data = prepare_from_config(raw, rc);
  std::vector<int> test_labels = data.labels_of(data.split.test_idx, rc.task);
  int classes = task_classes(rc.task);

  TrainedPipeline model;
  model.kind = rc.kind;
  model.task = rc.task;
  model.vae_cfg = rc.opts.vae;
  model.vit_cfg = rc.opts.vit;
  model.vit_cfg.out_dim = rc.opts.vit.out_dim;
  model.gcn_cfg = rc.opts.gcn;
  model.gat_cfg = rc.opts.gat;
  model.gcn_cfg.classes = classes;
  model.gat_cfg.classes = classes;
  model.mlp_cfg = rc.opts.mlp;
  model.mlp_cfg.dims.back() = classes;
  if (rc.kind == PipelineKind::VitMlp) model.mlp_cfg.dims[0] = rc.opts.vit.out_dim;
  model.params = std::move(ck.store);

  std::vector<int> predictions;
  if (model.is_graph_kind()) {
    model.tgraph.graph = load_graph(path("graph.nbgr"));
    model.tgraph.n_train = static_cast<int64_t>(data.split.train_idx.size());
    model.node_embeddings = load_embeddings(path("embeddings.nbem"));
    Tensor logits = graph_node_logits(model);
    int64_t n_test = static_cast<int64_t>(data.split.test_idx.size());
    Tensor test_logits = Tensor::zeros({n_test, logits.cols()});
    std::copy_n(logits.data.begin() + model.tgraph.n_train * logits.cols(),
                n_test * logits.cols(), test_logits.data.begin());
    predictions = argmax_rows(test_logits);
  } else {
    predictions = predict(model, data.rows_of(data.split.test_idx));
  }

  EvalReport report = compute_metrics(test_labels, predictions, classes, task_class_names(rc.task),
                                      task_name(rc.task), kind_name(rc.kind));
  io::write_text_file(path("report.json"), report_to_json(report).dump(2) + "\n");
  io::write_text_file(path("confusion.csv"),
                      confusion_csv(report.confusion, task_class_names(rc.task)));
  return report;
}

}  // namespace flowlab

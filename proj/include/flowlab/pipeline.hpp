#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowlab/checkpoint.hpp"
#include "flowlab/dataset.hpp"
#include "flowlab/gnn.hpp"
#include "flowlab/knn_graph.hpp"
#include "flowlab/metrics.hpp"
#include "flowlab/mlp.hpp"
#include "flowlab/vae.hpp"
#include "flowlab/vit.hpp"

namespace flowlab {

enum class PipelineKind { VaeMlp, VaeGcn, VaeGat, VitMlp };
enum class Task { Binary, Multiclass };

inline const char* kind_name(PipelineKind k) {
  switch (k) {
    case PipelineKind::VaeMlp: return "vae-mlp";
    case PipelineKind::VaeGcn: return "vae-gcn";
    case PipelineKind::VaeGat: return "vae-gat";
    case PipelineKind::VitMlp: return "vit-mlp";
  }
  return "?";
}

inline PipelineKind kind_from_name(const std::string& s) {
  if (s == "vae-mlp") return PipelineKind::VaeMlp;
  if (s == "vae-gcn") return PipelineKind::VaeGcn;
  if (s == "vae-gat") return PipelineKind::VaeGat;
  if (s == "vit-mlp") return PipelineKind::VitMlp;
  fail("BadKind", "unknown pipeline kind \"", s, "\"");
}

inline const char* task_name(Task t) { return t == Task::Binary ? "binary" : "multiclass"; }

inline Task task_from_name(const std::string& s) {
  if (s == "binary") return Task::Binary;
  if (s == "multiclass") return Task::Multiclass;
  fail("BadTask", "unknown task \"", s, "\"");
}

inline int task_classes(Task t) { return t == Task::Binary ? 2 : kClassCount; }

inline std::vector<std::string> task_class_names(Task t) {
  if (t == Task::Binary) return {"Normal", "Attack"};
  std::vector<std::string> names;
  for (int c = 0; c < kClassCount; ++c) names.emplace_back(kClassNames[static_cast<size_t>(c)]);
  return names;
}

// Shared training protocol; defaults follow the evaluation setup used across
// all four pipelines (Adam, lr 0.001, 20 epochs, batch 128, 10% per-epoch
// validation holdout).
struct TrainHyper {
  double lr = 0.001;
  int epochs = 20;
  int64_t batch = 128;
  double val_fraction = 0.10;
  uint64_t seed = 0;
  bool deterministic = true;
};

struct PipelineOptions {
  VaeConfig vae;
  VitConfig vit;
  GcnConfig gcn;
  GatConfig gat;
  MlpConfig mlp;  // dims resolved per task at run time
  int knn_k = 3;
  // Test hook: replaces the kNN graph with an edgeless self-looped graph,
  // which makes a GCN collapse to a per-node dense stack.
  bool debug_edgeless_graph = false;
};

// Standardized features plus split; what every pipeline trains on.
struct PreparedDataset {
  Tensor features;              // standardized, N x 115
  std::vector<uint8_t> labels;  // class ids
  DatasetSplit split;
  Standardizer standardizer;

  int64_t feature_dim() const { return features.cols(); }

  Tensor rows_of(const std::vector<int64_t>& idx) const {
    int64_t dim = features.cols();
    Tensor out = Tensor::zeros({static_cast<int64_t>(idx.size()), dim});
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy_n(features.data.begin() + idx[i] * dim,
                  dim, out.data.begin() + static_cast<int64_t>(i) * dim);
    return out;
  }

  std::vector<int> labels_of(const std::vector<int64_t>& idx, Task task) const {
    std::vector<int> out(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
      int c = labels[static_cast<size_t>(idx[i])];
      out[i] = task == Task::Binary ? binary_label(c) : c;
    }
    return out;
  }
};

inline PreparedDataset prepare_dataset(const DataMatrix& raw, uint64_t seed) {
  PreparedDataset d;
  d.split = split(raw, seed);
  d.standardizer = fit_standardizer(raw, d.split);
  d.features = raw.features;
  apply_standardizer(d.standardizer, d.features);
  d.labels = raw.labels;
  return d;
}

inline int argmax_label(const float* row, int n) {
  int best = 0;
  for (int j = 1; j < n; ++j)
    if (row[j] > row[best]) best = j;  // ties resolve to the smaller class id
  return best;
}

inline std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(static_cast<size_t>(logits.rows()));
  for (int64_t i = 0; i < logits.rows(); ++i)
    out[static_cast<size_t>(i)] =
        argmax_label(logits.data.data() + i * logits.cols(), static_cast<int>(logits.cols()));
  return out;
}

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct TrainedPipeline {
  PipelineKind kind = PipelineKind::VaeMlp;
  Task task = Task::Multiclass;
  VaeConfig vae_cfg;
  VitConfig vit_cfg;
  GcnConfig gcn_cfg;
  GatConfig gat_cfg;
  MlpConfig mlp_cfg;
  ParamStore params;  // namespaced: vae.* / vit.* / head.* / gcn.* / gat.*

  // transductive state (graph kinds only)
  TransductiveGraph tgraph;
  Tensor node_embeddings;  // train rows then test rows

  bool is_graph_kind() const {
    return kind == PipelineKind::VaeGcn || kind == PipelineKind::VaeGat;
  }
};

struct RunResult {
  TrainedPipeline model;
  EvalReport report;
  std::vector<int> test_predictions;
  std::vector<StageTiming> timings;
  std::vector<std::string> log_lines;
  Tensor embeddings_all;  // VAE kinds: train rows then test rows
};

namespace detail {

class StageClock {
 public:
  explicit StageClock(RunResult& out) : out_(&out) {}
  template <typename Fn>
  auto run(const std::string& stage, Fn&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      finish(stage, t0);
    } else {
      auto r = fn();
      finish(stage, t0);
      return r;
    }
  }

 private:
  void finish(const std::string& stage, std::chrono::steady_clock::time_point t0) {
    double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out_->timings.push_back({stage, s});
    out_->log_lines.push_back("stage " + stage + " took " + std::to_string(s) + "s");
  }
  RunResult* out_;
};

struct ClassifierStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

// Mini-batch cross-entropy training of the MLP head on fixed embeddings.
inline std::vector<ClassifierStats> train_mlp_classifier(ParamStore& ps, const MlpConfig& cfg,
                                                         const Tensor& embeddings,
                                                         const std::vector<int>& labels,
                                                         const TrainHyper& hyper,
                                                         uint64_t stage_seed) {
  Rng init_rng(derive_seed(stage_seed, 0xC1F0));
  mlp_init(ps, "head", cfg, init_rng);
  AdamParams adam{hyper.lr};
  int64_t n = embeddings.rows();
  int64_t dim = embeddings.cols();
  std::vector<ClassifierStats> stats;

  auto gather = [&](const std::vector<int64_t>& idx, int64_t at, int64_t cnt, Tensor& x,
                    std::vector<int>& y) {
    x = Tensor::zeros({cnt, dim});
    y.resize(static_cast<size_t>(cnt));
    for (int64_t i = 0; i < cnt; ++i) {
      int64_t src = idx[static_cast<size_t>(at + i)];
      std::copy_n(embeddings.data.begin() + src * dim, dim, x.data.begin() + i * dim);
      y[static_cast<size_t>(i)] = labels[static_cast<size_t>(src)];
    }
  };

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    EpochPlan plan = plan_epoch(n, epoch, stage_seed, hyper.val_fraction);
    double loss_sum = 0.0;
    int64_t rows_seen = 0;
    for (int64_t at = 0; at < static_cast<int64_t>(plan.update_rows.size()); at += hyper.batch) {
      int64_t cnt =
          std::min<int64_t>(hyper.batch, static_cast<int64_t>(plan.update_rows.size()) - at);
      Tensor x;
      std::vector<int> y;
      gather(plan.update_rows, at, cnt, x, y);
      Tape tape;
      BoundParams bp(tape, ps);
      Tape::Var loss = tape.cross_entropy_loss(mlp_forward(tape, bp, "head", cfg, tape.input(x)), y);
      tape.backward(loss);
      bp.harvest_grads();
      adam_step(ps, adam);
      loss_sum += tape.scalar(loss) * static_cast<double>(cnt);
      rows_seen += cnt;
    }
    ClassifierStats es;
    es.train_loss = rows_seen ? loss_sum / static_cast<double>(rows_seen) : 0.0;
    if (!plan.val_rows.empty()) {
      Tensor x;
      std::vector<int> y;
      gather(plan.val_rows, 0, static_cast<int64_t>(plan.val_rows.size()), x, y);
      Tape tape;
      BoundParams bp(tape, ps);
      es.val_loss =
          tape.scalar(tape.cross_entropy_loss(mlp_forward(tape, bp, "head", cfg, tape.input(x)), y));
    }
    stats.push_back(es);
  }
  return stats;
}

// Full-batch masked training for the transductive graph classifiers. One
// "epoch" performs ceil(update_rows / batch) full-graph steps, matching the
// optimizer-update budget of the mini-batch protocol, and logs one
// validation loss. Test-node labels never enter the loss.
inline std::vector<ClassifierStats> train_gnn_classifier(
    ParamStore& ps, PipelineKind kind, const GcnConfig& gcn_cfg, const GatConfig& gat_cfg,
    const Graph& graph, const Tensor& node_features, const std::vector<int>& train_labels,
    int64_t n_train, const TrainHyper& hyper, uint64_t stage_seed,
    std::vector<std::string>* log) {
  Rng init_rng(derive_seed(stage_seed, 0xC1F0));
  if (kind == PipelineKind::VaeGcn)
    gcn_init(ps, "gcn", node_features.cols(), gcn_cfg, init_rng);
  else
    gat_init(ps, "gat", node_features.cols(), gat_cfg, init_rng);
  AdamParams adam{hyper.lr};
  std::vector<ClassifierStats> stats;

  auto forward = [&](Tape& tape, BoundParams& bp) {
    Tape::Var x = tape.input(node_features);
    return kind == PipelineKind::VaeGcn ? gcn_forward(tape, bp, "gcn", graph, x)
                                        : gat_forward(tape, bp, "gat", graph, gat_cfg, x);
  };

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    EpochPlan plan = plan_epoch(n_train, epoch, stage_seed, hyper.val_fraction);
    std::vector<int> update_labels(plan.update_rows.size());
    for (size_t i = 0; i < plan.update_rows.size(); ++i)
      update_labels[i] = train_labels[static_cast<size_t>(plan.update_rows[i])];
    int64_t steps = (static_cast<int64_t>(plan.update_rows.size()) + hyper.batch - 1) / hyper.batch;
    if (epoch == 0 && log)
      log->push_back("full-batch training: " + std::to_string(steps) + " graph steps per epoch");

    double last_loss = 0.0;
    for (int64_t s = 0; s < steps; ++s) {
      Tape tape;
      BoundParams bp(tape, ps);
      Tape::Var logits = forward(tape, bp);
      Tape::Var loss =
          tape.cross_entropy_loss(tape.gather_rows(logits, plan.update_rows), update_labels);
      tape.backward(loss);
      bp.harvest_grads();
      adam_step(ps, adam);
      last_loss = tape.scalar(loss);
    }

    ClassifierStats es;
    es.train_loss = last_loss;
    if (!plan.val_rows.empty()) {
      Tape tape;
      BoundParams bp(tape, ps);
      std::vector<int> val_labels(plan.val_rows.size());
      for (size_t i = 0; i < plan.val_rows.size(); ++i)
        val_labels[i] = train_labels[static_cast<size_t>(plan.val_rows[i])];
      Tape::Var logits = forward(tape, bp);
      es.val_loss =
          tape.scalar(tape.cross_entropy_loss(tape.gather_rows(logits, plan.val_rows), val_labels));
    }
    stats.push_back(es);
  }
  return stats;
}

inline Graph debug_edgeless(int64_t n) {
  Graph g;
  g.n = n;
  g.offsets.assign(static_cast<size_t>(n) + 1, 0);
  g.symmetrized = true;
  return gcn_coefficients(add_self_loops(g));
}

}  // namespace detail

// Forward pass of a trained model over standardized feature rows. Graph
// kinds are transductive: they classify stored graph nodes only.
inline Tensor pipeline_logits(const TrainedPipeline& model, const Tensor& rows) {
  ParamStore& params = const_cast<ParamStore&>(model.params);
  if (model.kind == PipelineKind::VaeMlp) {
    // embed via the mu head, then the classifier
    Tape tape;
    BoundParams bp(tape, params);
    auto [mu, logvar] = vae_encode(tape, bp, model.vae_cfg, tape.input(rows));
    (void)logvar;
    return tape.val(mlp_forward(tape, bp, "head", model.mlp_cfg, mu));
  }
  if (model.kind == PipelineKind::VitMlp) {
    Tensor out = Tensor::zeros({rows.rows(), model.mlp_cfg.dims.back()});
    const int64_t chunk = 512;
    for (int64_t at = 0; at < rows.rows(); at += chunk) {
      int64_t cnt = std::min(chunk, rows.rows() - at);
      Tensor block = Tensor::zeros({cnt, rows.cols()});
      std::copy_n(rows.data.begin() + at * rows.cols(), cnt * rows.cols(), block.data.begin());
      Tape tape;
      BoundParams bp(tape, params);
      Tape::Var logits =
          mlp_forward(tape, bp, "head", model.mlp_cfg, vit_encoder_forward(tape, bp, model.vit_cfg, block));
      std::copy(tape.val(logits).data.begin(), tape.val(logits).data.end(),
                out.data.begin() + at * model.mlp_cfg.dims.back());
    }
    return out;
  }
  fail("TransductiveOnly", kind_name(model.kind),
       " classifies nodes of its training graph; it cannot score unseen rows");
}

inline std::vector<int> predict(const TrainedPipeline& model, const Tensor& rows) {
  return argmax_rows(pipeline_logits(model, rows));
}

// logits over all graph nodes (graph kinds)
inline Tensor graph_node_logits(const TrainedPipeline& model) {
  ParamStore& params = const_cast<ParamStore&>(model.params);
  Tape tape;
  BoundParams bp(tape, params);
  Tape::Var x = tape.input(model.node_embeddings);
  Tape::Var logits = model.kind == PipelineKind::VaeGcn
                         ? gcn_forward(tape, bp, "gcn", model.tgraph.graph, x)
                         : gat_forward(tape, bp, "gat", model.tgraph.graph, model.gat_cfg, x);
  return tape.val(logits);
}

inline RunResult run_pipeline(PipelineKind kind, const PreparedDataset& data, Task task,
                              const TrainHyper& hyper, PipelineOptions opts = {}) {
  RunResult result;
  detail::StageClock clock(result);
  TrainedPipeline& model = result.model;
  model.kind = kind;
  model.task = task;

  const int classes = task_classes(task);
  std::vector<int> train_labels = data.labels_of(data.split.train_idx, task);
  std::vector<int> test_labels = data.labels_of(data.split.test_idx, task);

  opts.mlp.dims = {opts.vae.latent, opts.mlp.dims.size() == 3 ? opts.mlp.dims[1] : 32, classes};
  opts.gcn.classes = classes;
  opts.gat.classes = classes;
  model.gcn_cfg = opts.gcn;
  model.gat_cfg = opts.gat;
  model.mlp_cfg = opts.mlp;

  auto log_epochs = [&](const char* what, const std::vector<detail::ClassifierStats>& stats) {
    for (size_t e = 0; e < stats.size(); ++e)
      result.log_lines.push_back(std::string(what) + " epoch " + std::to_string(e + 1) + "/" +
                                 std::to_string(stats.size()) +
                                 " train_loss=" + std::to_string(stats[e].train_loss) +
                                 " val_loss=" + std::to_string(stats[e].val_loss));
  };

  if (kind == PipelineKind::VitMlp) {
    VitConfig cfg = opts.vit;
    cfg.epochs = hyper.epochs;
    cfg.batch = hyper.batch;
    cfg.lr = hyper.lr;
    cfg.val_fraction = hyper.val_fraction;
    cfg.seed = derive_seed(hyper.seed, 0x0001);
    opts.mlp.dims[0] = cfg.out_dim;
    model.vit_cfg = cfg;
    model.mlp_cfg = opts.mlp;

    Tensor train_rows = data.rows_of(data.split.train_idx);
    std::vector<VitEpochStats> stats;
    VitMlpModel trained = clock.run("train_vit_mlp", [&] {
      return train_vit_mlp(train_rows, train_labels, cfg, opts.mlp, &stats);
    });
    model.params = std::move(trained.params);
    std::vector<detail::ClassifierStats> cs;
    for (auto& s : stats) cs.push_back({s.train_loss, s.val_loss});
    log_epochs("vit-mlp", cs);

    Tensor test_rows = data.rows_of(data.split.test_idx);
    result.test_predictions = clock.run("evaluate", [&] { return predict(model, test_rows); });
  } else {
    VaeConfig vcfg = opts.vae;
    vcfg.epochs = hyper.epochs;
    vcfg.batch = hyper.batch;
    vcfg.lr = hyper.lr;
    vcfg.val_fraction = hyper.val_fraction;
    vcfg.seed = derive_seed(hyper.seed, 0x0002);
    model.vae_cfg = vcfg;

    Tensor train_rows = data.rows_of(data.split.train_idx);
    Tensor test_rows = data.rows_of(data.split.test_idx);

    std::vector<VaeEpochStats> vae_stats;
    VaeModel vae = clock.run("train_vae", [&] { return train_vae(train_rows, vcfg, &vae_stats); });
    for (size_t e = 0; e < vae_stats.size(); ++e)
      result.log_lines.push_back("vae epoch " + std::to_string(e + 1) + "/" +
                                 std::to_string(vae_stats.size()) +
                                 " train_loss=" + std::to_string(vae_stats[e].train_loss) +
                                 " val_loss=" + std::to_string(vae_stats[e].val_loss));

    Tensor train_emb, test_emb;
    clock.run("embed", [&] {
      train_emb = vae.embed(train_rows);
      test_emb = vae.embed(test_rows);
    });
    result.embeddings_all = Tensor::zeros({train_emb.rows() + test_emb.rows(), vcfg.latent});
    std::copy(train_emb.data.begin(), train_emb.data.end(), result.embeddings_all.data.begin());
    std::copy(test_emb.data.begin(), test_emb.data.end(),
              result.embeddings_all.data.begin() + train_emb.data.size());

    for (auto& p : vae.params.all()) model.params.add(p.name, p.value);

    uint64_t clf_seed = derive_seed(hyper.seed, 0x0003);
    if (kind == PipelineKind::VaeMlp) {
      auto stats = clock.run("train_classifier", [&] {
        return detail::train_mlp_classifier(model.params, model.mlp_cfg, train_emb, train_labels,
                                            hyper, clf_seed);
      });
      log_epochs("mlp", stats);
      Tape tape;
      BoundParams bp(tape, model.params);
      result.test_predictions = clock.run("evaluate", [&] {
        return argmax_rows(
            tape.val(mlp_forward(tape, bp, "head", model.mlp_cfg, tape.input(test_emb))));
      });
    } else {
      clock.run("build_graph", [&] {
        if (opts.debug_edgeless_graph) {
          model.tgraph.n_train = train_emb.rows();
          model.tgraph.graph = detail::debug_edgeless(train_emb.rows() + test_emb.rows());
        } else {
          model.tgraph = assemble_transductive(train_emb, test_emb, opts.knn_k);
        }
      });
      model.node_embeddings = result.embeddings_all;
      auto stats = clock.run("train_classifier", [&] {
        return detail::train_gnn_classifier(model.params, kind, model.gcn_cfg, model.gat_cfg,
                                            model.tgraph.graph, model.node_embeddings,
                                            train_labels, model.tgraph.n_train, hyper, clf_seed,
                                            &result.log_lines);
      });
      log_epochs(kind == PipelineKind::VaeGcn ? "gcn" : "gat", stats);
      result.test_predictions = clock.run("evaluate", [&] {
        Tensor logits = graph_node_logits(model);
        Tensor test_logits = Tensor::zeros({test_emb.rows(), logits.cols()});
        std::copy_n(logits.data.begin() + model.tgraph.n_train * logits.cols(),
                    test_emb.rows() * logits.cols(), test_logits.data.begin());
        return argmax_rows(test_logits);
      });
    }
  }

  result.report = compute_metrics(test_labels, result.test_predictions, classes,
                                  task_class_names(task), task_name(task), kind_name(kind));
  return result;
}

}  // namespace flowlab

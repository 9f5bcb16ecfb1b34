#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowlab/common.hpp"

namespace flowlab {

// rows = true class, cols = predicted class
struct ConfusionMatrix {
  int classes = 0;
  std::vector<int64_t> counts;

  explicit ConfusionMatrix(int c = 0) : classes(c), counts(static_cast<size_t>(c) * c, 0) {}

  int64_t& at(int t, int p) { return counts[static_cast<size_t>(t) * classes + p]; }
  int64_t at(int t, int p) const { return counts[static_cast<size_t>(t) * classes + p]; }

  int64_t total() const {
    int64_t s = 0;
    for (int64_t v : counts) s += v;
    return s;
  }

  int64_t row_sum(int t) const {
    int64_t s = 0;
    for (int p = 0; p < classes; ++p) s += at(t, p);
    return s;
  }

  int64_t col_sum(int p) const {
    int64_t s = 0;
    for (int t = 0; t < classes; ++t) s += at(t, p);
    return s;
  }

  bool operator==(const ConfusionMatrix& o) const {
    return classes == o.classes && counts == o.counts;
  }
};

struct PerClassMetrics {
  int id = 0;
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t support = 0;

  bool operator==(const PerClassMetrics&) const = default;
};

struct EvalReport {
  std::string task;  // "binary" | "multiclass"
  std::string kind;  // pipeline name
  double accuracy = 0.0;
  double precision_w = 0.0;
  double recall_w = 0.0;
  double f1_w = 0.0;
  std::vector<PerClassMetrics> per_class;
  ConfusionMatrix confusion;

  bool operator==(const EvalReport& o) const {
    return task == o.task && kind == o.kind && accuracy == o.accuracy &&
           precision_w == o.precision_w && recall_w == o.recall_w && f1_w == o.f1_w &&
           per_class == o.per_class && confusion == o.confusion;
  }
};

// Undefined ratios (zero denominators) are reported as 0, matching the usual
// toolkit convention. Weighted averages use true-class support as weights.
inline EvalReport metrics_from_confusion(const ConfusionMatrix& cm,
                                         const std::vector<std::string>& names,
                                         const std::string& task = "",
                                         const std::string& kind = "") {
  int c = cm.classes;
  EvalReport r;
  r.task = task;
  r.kind = kind;
  r.confusion = cm;
  int64_t total = cm.total();
  int64_t diag = 0;
  for (int i = 0; i < c; ++i) diag += cm.at(i, i);
  r.accuracy = total == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(total);

  for (int i = 0; i < c; ++i) {
    PerClassMetrics pc;
    pc.id = i;
    pc.name = i < static_cast<int>(names.size()) ? names[static_cast<size_t>(i)]
                                                 : "class" + std::to_string(i);
    int64_t tp = cm.at(i, i);
    int64_t predicted = cm.col_sum(i);
    int64_t support = cm.row_sum(i);
    pc.support = support;
    pc.precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
    pc.recall = support == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(support);
    pc.f1 = (pc.precision + pc.recall) == 0.0
                ? 0.0
                : 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall);
    r.per_class.push_back(std::move(pc));

    double w = total == 0 ? 0.0 : static_cast<double>(support) / static_cast<double>(total);
    r.precision_w += w * r.per_class.back().precision;
    r.f1_w += w * r.per_class.back().f1;
  }
  // support-weighted recall telescopes to sum(TP)/total; computing it from
  // the counts keeps the recall_w == accuracy identity exact in floats
  r.recall_w = r.accuracy;
  return r;
}

inline EvalReport compute_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                                  int classes, const std::vector<std::string>& names,
                                  const std::string& task = "", const std::string& kind = "") {
  if (truth.size() != predicted.size())
    fail("LengthMismatch", "compute_metrics: ", truth.size(), " true labels vs ",
         predicted.size(), " predictions");
  ConfusionMatrix cm(classes);
  for (size_t i = 0; i < truth.size(); ++i) {
    int t = truth[i], p = predicted[i];
    if (t < 0 || t >= classes || p < 0 || p >= classes)
      fail("LengthMismatch", "label out of range at row ", i, ": true=", t, " pred=", p,
           " classes=", classes);
    cm.at(t, p) += 1;
  }
  return metrics_from_confusion(cm, names, task, kind);
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["task"] = r.task;
  j["kind"] = r.kind;
  j["accuracy"] = r.accuracy;
  j["precision_w"] = r.precision_w;
  j["recall_w"] = r.recall_w;
  j["f1_w"] = r.f1_w;
  j["per_class"] = nlohmann::ordered_json::array();
  for (const auto& pc : r.per_class) {
    nlohmann::ordered_json pj;
    pj["id"] = pc.id;
    pj["name"] = pc.name;
    pj["precision"] = pc.precision;
    pj["recall"] = pc.recall;
    pj["f1"] = pc.f1;
    pj["support"] = pc.support;
    j["per_class"].push_back(pj);
  }
  j["confusion"] = nlohmann::ordered_json::array();
  for (int t = 0; t < r.confusion.classes; ++t) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int p = 0; p < r.confusion.classes; ++p) row.push_back(r.confusion.at(t, p));
    j["confusion"].push_back(row);
  }
  return j;
}

inline EvalReport report_from_json(const nlohmann::ordered_json& j) {
  EvalReport r;
  r.task = j.at("task").get<std::string>();
  r.kind = j.at("kind").get<std::string>();
  r.accuracy = j.at("accuracy").get<double>();
  r.precision_w = j.at("precision_w").get<double>();
  r.recall_w = j.at("recall_w").get<double>();
  r.f1_w = j.at("f1_w").get<double>();
  for (const auto& pj : j.at("per_class")) {
    PerClassMetrics pc;
    pc.id = pj.at("id").get<int>();
    pc.name = pj.at("name").get<std::string>();
    pc.precision = pj.at("precision").get<double>();
    pc.recall = pj.at("recall").get<double>();
    pc.f1 = pj.at("f1").get<double>();
    pc.support = pj.at("support").get<int64_t>();
    r.per_class.push_back(std::move(pc));
  }
  const auto& cj = j.at("confusion");
  r.confusion = ConfusionMatrix(static_cast<int>(cj.size()));
  for (int t = 0; t < r.confusion.classes; ++t)
    for (int p = 0; p < r.confusion.classes; ++p)
      r.confusion.at(t, p) = cj[static_cast<size_t>(t)][static_cast<size_t>(p)].get<int64_t>();
  return r;
}

// percentages with two decimals, one row per pipeline
inline std::string render_table(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "kind" << std::setw(12) << "task" << std::right
     << std::setw(10) << "accuracy" << std::setw(11) << "precision" << std::setw(9) << "recall"
     << std::setw(9) << "f1" << "\n";
  os << std::string(61, '-') << "\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& r : reports) {
    os << std::left << std::setw(10) << r.kind << std::setw(12) << r.task << std::right
       << std::setw(9) << r.accuracy * 100.0 << "%" << std::setw(10) << r.precision_w * 100.0
       << "%" << std::setw(8) << r.recall_w * 100.0 << "%" << std::setw(8) << r.f1_w * 100.0
       << "%\n";
  }
  return os.str();
}

inline std::string confusion_csv(const ConfusionMatrix& cm,
                                 const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "true\\pred";
  for (int p = 0; p < cm.classes; ++p)
    os << "," << (p < static_cast<int>(names.size()) ? names[static_cast<size_t>(p)]
                                                     : "class" + std::to_string(p));
  os << "\n";
  for (int t = 0; t < cm.classes; ++t) {
    os << (t < static_cast<int>(names.size()) ? names[static_cast<size_t>(t)]
                                              : "class" + std::to_string(t));
    for (int p = 0; p < cm.classes; ++p) os << "," << cm.at(t, p);
    os << "\n";
  }
  return os.str();
}

}  // namespace flowlab

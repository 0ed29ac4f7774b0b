#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "conlabel/common.hpp"
#include "conlabel/data.hpp"
#include "conlabel/learner.hpp"

namespace conlabel::metrics {

using json = nlohmann::ordered_json;

struct RocCurve {
  int class_id = 0;
  std::vector<std::pair<double, double>> points;  // (fpr, tpr), starts (0,0), ends (1,1)
  double auc = 0.0;
};

// Threshold sweep over distinct scores, descending; tied scores move the
// curve in one step, so ties contribute half to the AUC like in the
// pair-counting definition.
inline RocCurve roc_one_vs_rest(const std::vector<double>& scores, const std::vector<int>& truth,
                                int class_id = 0) {
  if (scores.size() != truth.size())
    fail(ErrorCode::ShapeMismatch, "scores and truth lengths disagree");
  size_t positives = 0;
  for (int t : truth) positives += t != 0 ? 1 : 0;
  size_t negatives = truth.size() - positives;
  if (positives == 0 || negatives == 0)
    fail(ErrorCode::DegenerateTruth, "one-vs-rest truth needs a positive and a negative");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.class_id = class_id;
  curve.points.emplace_back(0.0, 0.0);
  size_t tp = 0;
  size_t fp = 0;
  double auc = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (truth[order[j]] != 0)
        ++tp;
      else
        ++fp;
      ++j;
    }
    double x = static_cast<double>(fp) / static_cast<double>(negatives);
    double y = static_cast<double>(tp) / static_cast<double>(positives);
    const auto& prev = curve.points.back();
    auc += (x - prev.first) * (y + prev.second) / 2.0;
    curve.points.emplace_back(x, y);
    i = j;
  }
  curve.auc = auc;
  return curve;
}

// population standard deviation over per-class counts, as a percentage of the mean
inline double class_count_cv(const std::vector<long>& counts) {
  if (counts.empty()) fail(ErrorCode::EmptySet, "no class counts");
  double total = 0.0;
  for (long c : counts) total += static_cast<double>(c);
  if (total == 0.0) fail(ErrorCode::EmptySet, "class counts are all zero");
  double mean = total / static_cast<double>(counts.size());
  double var = 0.0;
  for (long c : counts) {
    double d = static_cast<double>(c) - mean;
    var += d * d;
  }
  var /= static_cast<double>(counts.size());
  return 100.0 * std::sqrt(var) / mean;
}

// zero-count classes included: losing a whole class is exactly the imbalance
// this measures
inline std::vector<long> label_histogram(const data::LabeledSet& set, int num_classes) {
  std::vector<long> counts(static_cast<size_t>(num_classes), 0);
  for (const auto& item : set.items) {
    if (item.label < 0 || item.label >= num_classes)
      fail(ErrorCode::LabelOutOfRange, "label " + std::to_string(item.label) + " in set '" +
                                           set.name + "'");
    counts[static_cast<size_t>(item.label)] += 1;
  }
  return counts;
}

inline double class_count_cv(const data::LabeledSet& set, int num_classes) {
  if (set.items.empty()) fail(ErrorCode::EmptySet, "set '" + set.name + "' is empty");
  return class_count_cv(label_histogram(set, num_classes));
}

struct MetricsReport {
  double accuracy = 0.0;
  size_t total = 0;
  std::vector<std::vector<long>> confusion;  // rows = truth, cols = prediction
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<RocCurve> rocs;
  std::vector<int> roc_skipped;  // classes without both a positive and a negative
  double class_count_cv = 0.0;   // over the evaluated set's true labels
};

inline MetricsReport evaluate(learner::Learner& model, const Examples& test, int num_classes) {
  if (test.size() == 0) fail(ErrorCode::EmptyTestSet, "evaluate on an empty test set");
  for (int y : test.y)
    if (y < 0 || y >= num_classes)
      fail(ErrorCode::LabelOutOfRange, "test label " + std::to_string(y));

  Matrix probs = model.predict_proba(test.x);
  MetricsReport report;
  report.total = test.size();
  report.confusion.assign(static_cast<size_t>(num_classes),
                          std::vector<long>(static_cast<size_t>(num_classes), 0));
  size_t correct = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    int pred = argmax(probs.row(i));
    report.confusion[static_cast<size_t>(test.y[i])][static_cast<size_t>(pred)] += 1;
    if (pred == test.y[i]) ++correct;
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());

  report.precision.assign(static_cast<size_t>(num_classes), 0.0);
  report.recall.assign(static_cast<size_t>(num_classes), 0.0);
  std::vector<long> class_counts(static_cast<size_t>(num_classes), 0);
  for (int c = 0; c < num_classes; ++c) {
    long row_sum = 0;
    long col_sum = 0;
    for (int j = 0; j < num_classes; ++j) {
      row_sum += report.confusion[static_cast<size_t>(c)][static_cast<size_t>(j)];
      col_sum += report.confusion[static_cast<size_t>(j)][static_cast<size_t>(c)];
    }
    long diag = report.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
    report.precision[static_cast<size_t>(c)] =
        col_sum > 0 ? static_cast<double>(diag) / static_cast<double>(col_sum) : 0.0;
    report.recall[static_cast<size_t>(c)] =
        row_sum > 0 ? static_cast<double>(diag) / static_cast<double>(row_sum) : 0.0;
    class_counts[static_cast<size_t>(c)] = row_sum;
  }
  report.class_count_cv = class_count_cv(class_counts);

  for (int c = 0; c < num_classes; ++c) {
    std::vector<double> scores(test.size());
    std::vector<int> truth(test.size());
    size_t positives = 0;
    for (size_t i = 0; i < test.size(); ++i) {
      scores[i] = probs[i][static_cast<size_t>(c)];
      truth[i] = test.y[i] == c ? 1 : 0;
      positives += static_cast<size_t>(truth[i]);
    }
    if (positives == 0 || positives == test.size()) {
      report.roc_skipped.push_back(c);
      continue;
    }
    report.rocs.push_back(roc_one_vs_rest(scores, truth, c));
  }
  return report;
}

inline json report_to_json(const MetricsReport& report, const data::ClassTaxonomy& taxonomy) {
  json j;
  j["accuracy"] = report.accuracy;
  j["total"] = report.total;
  j["taxonomy"] = taxonomy.names;
  j["confusion"] = report.confusion;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["class_count_cv_percent"] = report.class_count_cv;
  json rocs = json::array();
  for (const auto& curve : report.rocs) {
    json rc;
    rc["class"] = curve.class_id;
    rc["auc"] = curve.auc;
    json pts = json::array();
    for (const auto& [x, y] : curve.points) pts.push_back(json::array({x, y}));
    rc["points"] = std::move(pts);
    rocs.push_back(std::move(rc));
  }
  j["rocs"] = std::move(rocs);
  j["roc_skipped"] = report.roc_skipped;
  return j;
}

inline void write_roc_csv(const RocCurve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write ROC curve '" + path + "'");
  out << "fpr,tpr\n";
  out.precision(17);
  for (const auto& [x, y] : curve.points) out << x << "," << y << "\n";
}

// --- baseline comparison (lower = seeds, mid = filtered, upper = corrected,
// ssl = concordance) ---

struct BaselineRow {
  std::string name;
  size_t set_size = 0;
  double cv = 0.0;
  double accuracy = 0.0;
};

struct BaselineReport {
  std::vector<BaselineRow> rows;
  std::map<std::string, MetricsReport> reports;
  std::vector<std::string> skipped;  // sets too empty to train on
};

// Trains the same learner on each set under an identical config/seed and
// evaluates on the shared test set.
inline BaselineReport baseline_report(
    const data::DatasetStore& store,
    const std::vector<std::pair<std::string, const data::LabeledSet*>>& sets, const Examples& val,
    const Examples& test, learner::Learner& model, int epochs,
    const learner::LearnerConfig& cfg) {
  BaselineReport out;
  for (const auto& [name, set] : sets) {
    if (set->items.empty()) {
      out.skipped.push_back(name);
      continue;
    }
    Examples train = data::materialize(store, *set);
    model.fit(train, val, epochs, cfg);
    MetricsReport report = evaluate(model, test, store.num_classes());
    BaselineRow row;
    row.name = name;
    row.set_size = set->size();
    row.cv = class_count_cv(*set, store.num_classes());
    row.accuracy = report.accuracy;
    out.rows.push_back(row);
    out.reports.emplace(name, std::move(report));
  }
  return out;
}

inline json baseline_to_json(const BaselineReport& report, const data::ClassTaxonomy& taxonomy) {
  json j;
  json rows = json::array();
  for (const auto& row : report.rows) {
    json r;
    r["name"] = row.name;
    r["set_size"] = row.set_size;
    r["class_count_cv_percent"] = row.cv;
    r["accuracy_percent"] = 100.0 * row.accuracy;
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  j["skipped"] = report.skipped;
  json details = json::object();
  for (const auto& [name, rep] : report.reports) details[name] = report_to_json(rep, taxonomy);
  j["details"] = std::move(details);
  return j;
}

inline void write_baseline_csv(const BaselineReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write baseline table '" + path + "'");
  out << "name,set_size,class_count_cv_percent,accuracy_percent\n";
  for (const auto& row : report.rows)
    out << row.name << "," << row.set_size << "," << format_percent(row.cv) << ","
        << format_percent(100.0 * row.accuracy) << "\n";
}

}  // namespace conlabel::metrics

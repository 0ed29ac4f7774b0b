#pragma once

#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "conlabel/common.hpp"
#include "conlabel/data.hpp"
#include "conlabel/learner.hpp"

// Dual-learner iterative pseudo-labeling: train two networks on their own
// growing training sets, harvest high-confidence predictions from the
// unlabeled pool (a per-class quota per network per iteration), and finish by
// keeping only the instances both final networks label identically.

namespace conlabel::ssl {

struct SelectionRule {
  double confidence_threshold = 0.99;
  int per_class_quota = 5;
  uint64_t seed = 0;

  void validate() const {
    if (!(confidence_threshold > 0.0 && confidence_threshold <= 1.0))
      fail(ErrorCode::ConfigError, "confidence_threshold must be in (0,1]");
    if (per_class_quota < 1) fail(ErrorCode::ConfigError, "per_class_quota must be >= 1");
  }
};

struct IterationSchedule {
  int base_epochs = 200;

  void validate() const {
    if (base_epochs < 4) fail(ErrorCode::ConfigError, "base_epochs must be >= 4");
  }
};

// I_k = base//k for k <= 4, then flat at base//4.
inline int epoch_schedule(int k, int base) {
  if (k < 1) fail(ErrorCode::ConfigError, "iteration index must be >= 1");
  if (base < 4) fail(ErrorCode::ConfigError, "base epochs must be >= 4");
  return base / std::min(k, 4);
}

struct Selection {
  std::string id;
  int label = 0;
  double confidence = 0.0;
};

// For each class: candidates whose argmax is that class at confidence >= tau,
// minus already-owned ids; a seeded uniform sample of at most quota of them.
// Shortfalls take whatever is available.
inline std::vector<Selection> select_pseudo_labels(
    const std::vector<std::string>& candidate_ids, const Matrix& probs, const SelectionRule& rule,
    const std::unordered_set<std::string>& already_owned) {
  rule.validate();
  if (candidate_ids.size() != probs.rows)
    fail(ErrorCode::ShapeMismatch, "candidate ids and probability rows disagree");
  int classes = static_cast<int>(probs.cols);
  std::vector<std::vector<size_t>> eligible(static_cast<size_t>(classes));
  for (size_t i = 0; i < candidate_ids.size(); ++i) {
    if (already_owned.count(candidate_ids[i])) continue;
    auto row = probs.row(i);
    int pred = argmax(row);
    if (row[static_cast<size_t>(pred)] >= rule.confidence_threshold)
      eligible[static_cast<size_t>(pred)].push_back(i);
  }
  Rng rng(rule.seed);
  std::vector<Selection> picked;
  for (int c = 0; c < classes; ++c) {
    auto& pool = eligible[static_cast<size_t>(c)];
    size_t take = std::min(pool.size(), static_cast<size_t>(rule.per_class_quota));
    std::vector<size_t> chosen = rng.sample_indices(pool.size(), take);
    std::sort(chosen.begin(), chosen.end());
    for (size_t j : chosen) {
      size_t i = pool[j];
      picked.push_back({candidate_ids[i], c, probs.row(i)[static_cast<size_t>(c)]});
    }
  }
  return picked;
}

enum class SslStatus { ReachedTarget, Stalled, IterationCapped };

inline const char* ssl_status_name(SslStatus s) {
  switch (s) {
    case SslStatus::ReachedTarget: return "reached-target";
    case SslStatus::Stalled: return "stalled";
    case SslStatus::IterationCapped: return "iteration-capped";
  }
  return "unknown";
}

struct IterationRecord {
  int iteration = 0;
  int epochs = 0;
  double val_accuracy1 = 0.0;
  double val_accuracy2 = 0.0;
  std::vector<Selection> added1;
  std::vector<Selection> added2;
  size_t size1 = 0;
  size_t size2 = 0;
};

struct SslConfig {
  SelectionRule rule;
  IterationSchedule schedule;
  learner::LearnerConfig net1;   // batch 40 by default
  learner::LearnerConfig net2;   // batch 100 by default
  size_t target_size = 5000;
  int max_iterations = 200;
  double jitter_sigma = 0.0;     // feature-space augmentation during fits

  SslConfig() { net2.batch_size = 100; }

  void validate() const {
    rule.validate();
    schedule.validate();
    net1.validate();
    net2.validate();
    if (max_iterations < 1) fail(ErrorCode::ConfigError, "max_iterations must be >= 1");
    if (jitter_sigma < 0) fail(ErrorCode::ConfigError, "jitter_sigma must be >= 0");
  }
};

struct SslResult {
  SslStatus status = SslStatus::ReachedTarget;
  int iterations = 0;
  data::LabeledSet s1;
  data::LabeledSet s2;
  std::vector<IterationRecord> history;
};

inline SslResult run_ssl(const data::DatasetStore& store, const SslConfig& cfg,
                         learner::Learner& n1, learner::Learner& n2) {
  cfg.validate();
  for (const char* name : {data::pool::kSeed, data::pool::kValidation, data::pool::kUnlabeled})
    if (!store.has_pool(name))
      fail(ErrorCode::ConfigError, std::string("run_ssl needs pool '") + name + "'");
  if (store.pool(data::pool::kUnlabeled).empty())
    fail(ErrorCode::ConfigError, "unlabeled pool D_u is empty");

  SslResult result;
  result.s1 = data::labeled_set_from_pool(store, data::pool::kSeed, data::pool::kS1);
  result.s2 = data::labeled_set_from_pool(store, data::pool::kSeed, data::pool::kS2);
  if (cfg.target_size < result.s1.size())
    fail(ErrorCode::ConfigError, "target_size " + std::to_string(cfg.target_size) +
                                     " is below the seed set size " +
                                     std::to_string(result.s1.size()));

  Examples val = data::materialize(
      store, data::labeled_set_from_pool(store, data::pool::kValidation, data::pool::kValidation));

  // ids the loop must never touch
  std::unordered_set<std::string> eval_ids(store.pool(data::pool::kValidation).begin(),
                                           store.pool(data::pool::kValidation).end());
  if (store.has_pool(data::pool::kTest))
    eval_ids.insert(store.pool(data::pool::kTest).begin(), store.pool(data::pool::kTest).end());

  // each network consumes its own copy of the unlabeled pool
  std::vector<std::string> pool1 = store.pool(data::pool::kUnlabeled);
  std::vector<std::string> pool2 = pool1;
  std::vector<std::string> seed_ids = result.s1.ids();
  std::unordered_set<std::string> owned1(seed_ids.begin(), seed_ids.end());
  std::unordered_set<std::string> owned2 = owned1;

  auto fit_one = [&](learner::Learner& net, const data::LabeledSet& set,
                     const learner::LearnerConfig& base_cfg, int iteration,
                     int epochs) -> double {
    learner::LearnerConfig fit_cfg = base_cfg;
    fit_cfg.seed = mix_seed(base_cfg.seed, static_cast<uint64_t>(iteration));
    Examples train = data::materialize(store, set);
    if (cfg.jitter_sigma > 0)
      train.x = learner::augment_jitter(train.x, cfg.jitter_sigma,
                                        mix_seed(fit_cfg.seed, 0xA06u));
    return net.fit(train, val, epochs, fit_cfg).best_val_accuracy;
  };

  auto harvest = [&](learner::Learner& net, std::vector<std::string>& pool,
                     std::unordered_set<std::string>& owned, int iteration,
                     int network) -> std::vector<Selection> {
    if (pool.empty()) return {};
    Matrix probs = net.predict_proba(data::feature_rows(store, pool));
    SelectionRule rule = cfg.rule;
    rule.seed = mix_seed(cfg.rule.seed, static_cast<uint64_t>(iteration),
                         static_cast<uint64_t>(network));
    std::vector<Selection> picks = select_pseudo_labels(pool, probs, rule, owned);
    if (!picks.empty()) {
      std::unordered_set<std::string> picked_ids;
      for (const auto& p : picks) {
        if (eval_ids.count(p.id))
          fail(ErrorCode::InternalError, "selection leaked evaluation instance '" + p.id + "'");
        picked_ids.insert(p.id);
        owned.insert(p.id);
      }
      std::erase_if(pool, [&](const std::string& id) { return picked_ids.count(id) != 0; });
    }
    return picks;
  };

  while (std::min(result.s1.size(), result.s2.size()) < cfg.target_size) {
    if (result.iterations >= cfg.max_iterations) {
      result.status = SslStatus::IterationCapped;
      return result;
    }
    int k = ++result.iterations;
    IterationRecord record;
    record.iteration = k;
    record.epochs = epoch_schedule(k, cfg.schedule.base_epochs);
    record.val_accuracy1 = fit_one(n1, result.s1, cfg.net1, k, record.epochs);
    record.val_accuracy2 = fit_one(n2, result.s2, cfg.net2, k, record.epochs);
    record.added1 = harvest(n1, pool1, owned1, k, 1);
    record.added2 = harvest(n2, pool2, owned2, k, 2);
    for (const auto& p : record.added1)
      result.s1.items.push_back({p.id, p.label, data::Provenance::pseudo(k, 1, p.confidence)});
    for (const auto& p : record.added2)
      result.s2.items.push_back({p.id, p.label, data::Provenance::pseudo(k, 2, p.confidence)});
    record.size1 = result.s1.size();
    record.size2 = result.s2.size();
    result.history.push_back(std::move(record));
    if (result.history.back().added1.empty() && result.history.back().added2.empty()) {
      result.status = SslStatus::Stalled;
      return result;
    }
  }
  result.status = SslStatus::ReachedTarget;
  return result;
}

// Ensemble decision over s1 union s2: seeds enter with their seed labels;
// a pseudo-labeled instance enters iff the two final networks agree on it,
// carrying the agreed class as its label.
inline data::LabeledSet build_concordance(const data::DatasetStore& store,
                                          const data::LabeledSet& s1, const data::LabeledSet& s2,
                                          learner::Learner& n1, learner::Learner& n2) {
  data::LabeledSet out;
  out.name = data::pool::kConcordance;
  std::unordered_set<std::string> included;
  std::vector<data::LabeledItem> pseudo;
  std::unordered_set<std::string> pseudo_seen;
  for (const data::LabeledSet* set : {&s1, &s2}) {
    for (const auto& item : set->items) {
      if (item.provenance.kind == data::ProvenanceKind::SeedLabeled) {
        if (included.insert(item.id).second) out.items.push_back(item);
      } else if (pseudo_seen.insert(item.id).second) {
        pseudo.push_back(item);
      }
    }
  }
  if (pseudo.empty()) return out;
  std::vector<std::string> ids;
  ids.reserve(pseudo.size());
  for (const auto& item : pseudo) ids.push_back(item.id);
  Matrix rows = data::feature_rows(store, ids);
  Matrix probs1 = n1.predict_proba(rows);
  Matrix probs2 = n2.predict_proba(rows);
  for (size_t i = 0; i < pseudo.size(); ++i) {
    int vote1 = argmax(probs1.row(i));
    int vote2 = argmax(probs2.row(i));
    if (vote1 != vote2) continue;
    data::LabeledItem item = pseudo[i];
    item.label = vote1;
    out.items.push_back(std::move(item));
  }
  return out;
}

}  // namespace conlabel::ssl

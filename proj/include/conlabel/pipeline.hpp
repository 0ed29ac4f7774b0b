#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "conlabel/common.hpp"
#include "conlabel/data.hpp"
#include "conlabel/dedup.hpp"
#include "conlabel/external_learner.hpp"
#include "conlabel/learner.hpp"
#include "conlabel/metrics.hpp"
#include "conlabel/ssl.hpp"
#include "conlabel/synth.hpp"

// End-to-end experiment: synth/load -> dedup -> partition -> run-ssl ->
// concordance -> baselines -> summary. One config file carries every knob and
// doubles as the provenance record; reruns overwrite artifacts with identical
// bytes.

namespace conlabel::pipeline {

using json = nlohmann::ordered_json;

struct NetChoice {
  std::string kind = "builtin";  // "builtin" | "external"
  std::string command;           // external only
  learner::LearnerConfig config;

  void validate() const {
    if (kind != "builtin" && kind != "external")
      fail(ErrorCode::ConfigError, "learner kind must be 'builtin' or 'external', got '" + kind + "'");
    if (kind == "external" && command.empty())
      fail(ErrorCode::ConfigError, "external learner needs a command");
    config.validate();
  }
};

struct PipelineConfig {
  uint64_t seed = 0;
  std::string out_dir = "run";

  // data source: synthetic generator unless an input manifest is given
  synth::SynthSpec synth_spec;
  double corrupt_fraction = 0.0;
  std::optional<std::string> input_manifest;
  std::optional<std::string> labels_csv;  // oracle for real data

  bool dedup_enabled = false;
  int dedup_threshold = 4;

  data::PartitionCounts partition_counts{96, 48, 36};
  bool partition_strict = true;

  ssl::SslConfig ssl_config;
  NetChoice net1;
  NetChoice net2;

  int baseline_epochs = 0;  // 0 = follow ssl base_epochs
  learner::LearnerConfig baseline_config;
  // standalone `baselines` subcommand: extra rows as name -> set-manifest path
  std::vector<std::pair<std::string, std::string>> baseline_sets;

  // stage seeds, derived from the global seed unless the file overrides them
  uint64_t synth_seed = 0;
  uint64_t corrupt_seed = 0;
  uint64_t partition_seed = 0;
  uint64_t baseline_seed = 0;

  void validate() const {
    synth_spec.validate();
    if (!(corrupt_fraction >= 0 && corrupt_fraction <= 1))
      fail(ErrorCode::ConfigError, "corrupt_fraction must be in [0,1]");
    if (dedup_threshold < 0 || dedup_threshold > 64)
      fail(ErrorCode::ConfigError, "dedup threshold must be in 0..64");
    if (partition_counts.train == 0) fail(ErrorCode::ConfigError, "train count must be > 0");
    ssl_config.validate();
    net1.validate();
    net2.validate();
    baseline_config.validate();
    if (out_dir.empty()) fail(ErrorCode::ConfigError, "out_dir must be set");
    if (ssl_config.target_size < partition_counts.train)
      fail(ErrorCode::ConfigError,
           "target_size " + std::to_string(ssl_config.target_size) +
               " is below the seed set size " + std::to_string(partition_counts.train));
    if (input_manifest && *input_manifest == (std::filesystem::path(out_dir) / "dataset.jsonl").string())
      fail(ErrorCode::ConfigError, "input_manifest collides with the dataset artifact path");
  }
};

namespace detail {

inline learner::LearnerConfig learner_config_from_json(const json& j,
                                                       learner::LearnerConfig base) {
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.decay = j.value("decay", base.decay);
  base.beta1 = j.value("beta1", base.beta1);
  base.beta2 = j.value("beta2", base.beta2);
  base.batch_size = j.value("batch_size", base.batch_size);
  base.epsilon = j.value("epsilon", base.epsilon);
  if (j.contains("seed")) base.seed = j.at("seed").get<uint64_t>();
  return base;
}

inline json learner_config_to_json(const learner::LearnerConfig& cfg) {
  json j;
  j["learning_rate"] = cfg.learning_rate;
  j["decay"] = cfg.decay;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["batch_size"] = cfg.batch_size;
  j["epsilon"] = cfg.epsilon;
  j["seed"] = cfg.seed;
  return j;
}

}  // namespace detail

inline PipelineConfig config_from_json(const json& j) {
  PipelineConfig cfg;
  try {
    cfg.seed = j.value("seed", uint64_t{0});
    cfg.out_dir = j.value("out_dir", std::string("run"));

    cfg.synth_seed = mix_seed(cfg.seed, 1);
    cfg.corrupt_seed = mix_seed(cfg.seed, 2);
    cfg.partition_seed = mix_seed(cfg.seed, 3);
    cfg.baseline_seed = mix_seed(cfg.seed, 6);
    cfg.ssl_config.rule.seed = mix_seed(cfg.seed, 4);
    cfg.net1.config.seed = mix_seed(cfg.seed, 5);
    cfg.net2.config.seed = mix_seed(cfg.seed, 7);
    cfg.net1.config.batch_size = 40;
    cfg.net2.config.batch_size = 100;

    if (j.contains("synth")) {
      const json& s = j.at("synth");
      cfg.synth_spec.num_classes = s.value("classes", cfg.synth_spec.num_classes);
      cfg.synth_spec.dim = s.value("dim", cfg.synth_spec.dim);
      cfg.synth_spec.labeled_per_class =
          s.value("labeled_per_class", cfg.synth_spec.labeled_per_class);
      cfg.synth_spec.unlabeled_per_class =
          s.value("unlabeled_per_class", cfg.synth_spec.unlabeled_per_class);
      cfg.synth_spec.separation = s.value("separation", cfg.synth_spec.separation);
      cfg.synth_spec.label_noise = s.value("label_noise", cfg.synth_spec.label_noise);
      cfg.corrupt_fraction = s.value("corrupt_fraction", cfg.corrupt_fraction);
      if (s.contains("seed")) cfg.synth_seed = s.at("seed").get<uint64_t>();
    }
    if (j.contains("input_manifest") && !j.at("input_manifest").is_null())
      cfg.input_manifest = j.at("input_manifest").get<std::string>();
    if (j.contains("labels_csv") && !j.at("labels_csv").is_null())
      cfg.labels_csv = j.at("labels_csv").get<std::string>();

    if (j.contains("dedup")) {
      cfg.dedup_enabled = j.at("dedup").value("enabled", false);
      cfg.dedup_threshold = j.at("dedup").value("threshold", 4);
    }
    if (j.contains("partition")) {
      const json& p = j.at("partition");
      cfg.partition_counts.train = p.value("train", cfg.partition_counts.train);
      cfg.partition_counts.val = p.value("val", cfg.partition_counts.val);
      cfg.partition_counts.test = p.value("test", cfg.partition_counts.test);
      cfg.partition_strict = p.value("strict", cfg.partition_strict);
      if (p.contains("seed")) cfg.partition_seed = p.at("seed").get<uint64_t>();
    }
    if (j.contains("ssl")) {
      const json& s = j.at("ssl");
      cfg.ssl_config.rule.confidence_threshold =
          s.value("confidence_threshold", cfg.ssl_config.rule.confidence_threshold);
      cfg.ssl_config.rule.per_class_quota =
          s.value("per_class_quota", cfg.ssl_config.rule.per_class_quota);
      cfg.ssl_config.target_size = s.value("target_size", cfg.ssl_config.target_size);
      cfg.ssl_config.schedule.base_epochs =
          s.value("base_epochs", cfg.ssl_config.schedule.base_epochs);
      cfg.ssl_config.max_iterations = s.value("max_iterations", cfg.ssl_config.max_iterations);
      cfg.ssl_config.jitter_sigma = s.value("jitter_sigma", cfg.ssl_config.jitter_sigma);
      if (s.contains("seed")) cfg.ssl_config.rule.seed = s.at("seed").get<uint64_t>();
    }
    auto read_net = [&](const char* key, NetChoice& net) {
      if (!j.contains(key)) return;
      const json& n = j.at(key);
      net.kind = n.value("kind", net.kind);
      net.command = n.value("command", net.command);
      net.config = detail::learner_config_from_json(n, net.config);
    };
    read_net("net1", cfg.net1);
    read_net("net2", cfg.net2);

    cfg.baseline_config = cfg.net1.config;
    cfg.baseline_config.seed = cfg.baseline_seed;
    if (j.contains("baselines")) {
      const json& b = j.at("baselines");
      cfg.baseline_epochs = b.value("epochs", 0);
      cfg.baseline_config = detail::learner_config_from_json(b, cfg.baseline_config);
      if (b.contains("seed")) cfg.baseline_seed = b.at("seed").get<uint64_t>();
      cfg.baseline_config.seed = cfg.baseline_seed;
      if (b.contains("sets"))
        for (const auto& [name, path] : b.at("sets").items())
          cfg.baseline_sets.emplace_back(name, path.get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }
  cfg.ssl_config.net1 = cfg.net1.config;
  cfg.ssl_config.net2 = cfg.net2.config;
  return cfg;
}

inline PipelineConfig config_from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::ConfigError, "cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("config parse: ") + e.what());
  }
  return config_from_json(j);
}

// The fully resolved configuration; its hash is stamped into every artifact.
inline json canonical_config(const PipelineConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  json s;
  s["classes"] = cfg.synth_spec.num_classes;
  s["dim"] = cfg.synth_spec.dim;
  s["labeled_per_class"] = cfg.synth_spec.labeled_per_class;
  s["unlabeled_per_class"] = cfg.synth_spec.unlabeled_per_class;
  s["separation"] = cfg.synth_spec.separation;
  s["label_noise"] = cfg.synth_spec.label_noise;
  s["corrupt_fraction"] = cfg.corrupt_fraction;
  s["seed"] = cfg.synth_seed;
  j["synth"] = std::move(s);
  j["input_manifest"] = cfg.input_manifest ? json(*cfg.input_manifest) : json(nullptr);
  j["labels_csv"] = cfg.labels_csv ? json(*cfg.labels_csv) : json(nullptr);
  j["dedup"] = {{"enabled", cfg.dedup_enabled}, {"threshold", cfg.dedup_threshold}};
  j["partition"] = {{"train", cfg.partition_counts.train},
                    {"val", cfg.partition_counts.val},
                    {"test", cfg.partition_counts.test},
                    {"strict", cfg.partition_strict},
                    {"seed", cfg.partition_seed}};
  j["ssl"] = {{"confidence_threshold", cfg.ssl_config.rule.confidence_threshold},
              {"per_class_quota", cfg.ssl_config.rule.per_class_quota},
              {"target_size", cfg.ssl_config.target_size},
              {"base_epochs", cfg.ssl_config.schedule.base_epochs},
              {"max_iterations", cfg.ssl_config.max_iterations},
              {"jitter_sigma", cfg.ssl_config.jitter_sigma},
              {"seed", cfg.ssl_config.rule.seed}};
  auto net_json = [](const NetChoice& net) {
    json n = detail::learner_config_to_json(net.config);
    n["kind"] = net.kind;
    n["command"] = net.command;
    return n;
  };
  j["net1"] = net_json(cfg.net1);
  j["net2"] = net_json(cfg.net2);
  json b = detail::learner_config_to_json(cfg.baseline_config);
  b["epochs"] = cfg.baseline_epochs;
  json sets = json::object();
  for (const auto& [name, path] : cfg.baseline_sets) sets[name] = path;
  b["sets"] = std::move(sets);
  j["baselines"] = std::move(b);
  return j;
}

inline std::string config_hash(const PipelineConfig& cfg) {
  return to_hex(fnv1a64(canonical_config(cfg).dump()));
}

inline std::unique_ptr<learner::Learner> make_learner(const NetChoice& net, size_t dim,
                                                      int classes) {
  if (net.kind == "external") return std::make_unique<learner::ExternalLearner>(net.command, dim, classes);
  return std::make_unique<learner::SoftmaxRegression>(dim, classes);
}

// --- error rates against generator/oracle truth ---

struct ErrorRate {
  size_t wrong = 0;
  size_t counted = 0;  // pseudo-labeled items with a usable truth label

  std::optional<double> percent() const {
    if (counted == 0) return std::nullopt;
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(counted);
  }
};

inline ErrorRate pseudo_label_error(const data::DatasetStore& store,
                                    const data::LabeledSet& set) {
  ErrorRate rate;
  for (const auto& item : set.items) {
    if (item.provenance.kind != data::ProvenanceKind::PseudoLabeled) continue;
    const auto& truth = store.instance(item.id).true_label;
    if (!truth || *truth == data::kUnattributable) continue;
    rate.counted += 1;
    if (item.label != *truth) rate.wrong += 1;
  }
  return rate;
}

// --- artifact writing ---

namespace detail {

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write '" + path + "'");
  out << content;
}

inline void annotate(data::DatasetStore& store, const std::string& hash, uint64_t seed) {
  store.set_annotation("config_hash", hash);
  store.set_annotation("seed", std::to_string(seed));
}

}  // namespace detail

struct ExperimentResult {
  ssl::SslStatus status = ssl::SslStatus::ReachedTarget;
  int iterations = 0;
  data::DatasetStore store;  // partitioned store the run worked on
  data::LabeledSet si, s1, s2, str, s3, s4;
  bool oracle_available = false;
  metrics::BaselineReport baselines;
  ErrorRate err_s1, err_s2, err_str;
  json summary;
};

inline json selection_to_json(const ssl::Selection& s) {
  return json{{"id", s.id}, {"label", s.label}, {"confidence", s.confidence}};
}

inline void write_history(const std::string& path, const std::string& hash, uint64_t seed,
                          const ssl::SslResult& run) {
  std::ostringstream history;
  history << json{{"kind", "run"}, {"config_hash", hash}, {"seed", seed}}.dump() << "\n";
  for (const auto& rec : run.history) {
    json line;
    line["kind"] = "iteration";
    line["iteration"] = rec.iteration;
    line["epochs"] = rec.epochs;
    line["val_accuracy1"] = rec.val_accuracy1;
    line["val_accuracy2"] = rec.val_accuracy2;
    json a1 = json::array();
    for (const auto& s : rec.added1) a1.push_back(selection_to_json(s));
    json a2 = json::array();
    for (const auto& s : rec.added2) a2.push_back(selection_to_json(s));
    line["added1"] = std::move(a1);
    line["added2"] = std::move(a2);
    line["size1"] = rec.size1;
    line["size2"] = rec.size2;
    history << line.dump() << "\n";
  }
  history << json{{"kind", "result"},
                  {"status", ssl::ssl_status_name(run.status)},
                  {"iterations", run.iterations}}
                 .dump()
          << "\n";
  detail::write_text(path, history.str());
}

inline void save_labeled_set(const data::DatasetStore& store, const data::LabeledSet& set,
                             const std::string& path, const std::string& hash, uint64_t seed) {
  data::DatasetStore materialized = data::materialize_store(store, set);
  detail::annotate(materialized, hash, seed);
  data::save_manifest(materialized, path);
}

// snapshots exist for the built-in learner only; external learners own their state
inline bool save_model_if_builtin(learner::Learner& model, const std::string& path,
                                  const std::string& hash, uint64_t seed) {
  auto* builtin = dynamic_cast<learner::SoftmaxRegression*>(&model);
  if (!builtin) return false;
  json snap = builtin->snapshot();
  snap["config_hash"] = hash;
  snap["seed"] = seed;
  detail::write_text(path, snap.dump(2) + "\n");
  return true;
}

// report.json + table.csv + roc_class_<k>.csv for one row's model (the
// concordance-trained row when present)
inline void write_baseline_artifacts(const metrics::BaselineReport& baselines,
                                     const data::ClassTaxonomy& taxonomy, const std::string& dir,
                                     const std::string& hash, uint64_t seed,
                                     const std::string& roc_row) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json bj = metrics::baseline_to_json(baselines, taxonomy);
  bj["config_hash"] = hash;
  bj["seed"] = seed;
  detail::write_text((fs::path(dir) / "report.json").string(), bj.dump(2) + "\n");

  std::ostringstream table;
  table << "# config_hash=" << hash << " seed=" << seed << "\n";
  table << "name,set_size,class_count_cv_percent,accuracy_percent\n";
  for (const auto& row : baselines.rows)
    table << row.name << "," << row.set_size << "," << format_percent(row.cv) << ","
          << format_percent(100.0 * row.accuracy) << "\n";
  detail::write_text((fs::path(dir) / "table.csv").string(), table.str());

  auto it = baselines.reports.find(roc_row);
  if (it == baselines.reports.end() && !baselines.rows.empty())
    it = baselines.reports.find(baselines.rows.back().name);
  if (it == baselines.reports.end()) return;
  for (const auto& curve : it->second.rocs) {
    std::ostringstream roc;
    roc << "# config_hash=" << hash << " seed=" << seed << "\n";
    roc << "fpr,tpr\n";
    roc.precision(17);
    for (const auto& [x, y] : curve.points) roc << x << "," << y << "\n";
    detail::write_text(
        (fs::path(dir) / ("roc_class_" + std::to_string(curve.class_id) + ".csv")).string(),
        roc.str());
  }
}

// Runs the full sequence and writes every artifact under cfg.out_dir.
inline ExperimentResult run_experiment(const PipelineConfig& cfg) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  fs::create_directories(fs::path(cfg.out_dir) / "baselines");
  auto artifact = [&](const std::string& name) {
    return (fs::path(cfg.out_dir) / name).string();
  };

  ExperimentResult result;

  // data source
  data::DatasetStore store;
  if (cfg.input_manifest) {
    store = data::load_manifest(*cfg.input_manifest);
  } else {
    synth::SynthSpec spec = cfg.synth_spec;
    spec.seed = cfg.synth_seed;
    store = synth::generate(spec);
    if (cfg.corrupt_fraction > 0)
      synth::corrupt_pool(store, spec, cfg.corrupt_fraction, cfg.corrupt_seed);
  }

  // dedup applies to image payloads only; the trainable pipeline runs on
  // feature payloads, so inside run-experiment this stage can only note
  // what it skipped (feature extraction between the two is user-supplied)
  json dedup_note;
  if (cfg.dedup_enabled && store.payload() == data::PayloadKind::Images) {
    std::vector<std::pair<std::string, dedup::PerceptualHash>> hashed;
    for (const auto& id : store.ids_in_order())
      hashed.emplace_back(id, dedup::dhash(dedup::load_image(store.instance(id).image_path)));
    dedup::DedupReport report = dedup::dedup_hashes(hashed, cfg.dedup_threshold);
    json rj;
    rj["config_hash"] = hash;
    rj["seed"] = cfg.seed;
    rj["threshold"] = report.threshold;
    rj["kept"] = report.kept;
    json removed = json::array();
    for (const auto& r : report.removed)
      removed.push_back(
          {{"id", r.id}, {"duplicate_of", r.duplicate_of}, {"distance", r.distance}});
    rj["removed"] = std::move(removed);
    detail::write_text(artifact("dedup_report.json"), rj.dump(2) + "\n");
    std::unordered_set<std::string> kept(report.kept.begin(), report.kept.end());
    for (const auto& name : {data::pool::kLabeled, data::pool::kUnlabeled}) {
      if (!store.has_pool(name)) continue;
      std::vector<std::string> filtered;
      for (const auto& id : store.pool(name))
        if (kept.count(id)) filtered.push_back(id);
      store.set_pool(name, std::move(filtered));
    }
    dedup_note = {{"applied", true},
                  {"kept", report.kept.size()},
                  {"removed", report.removed.size()},
                  {"threshold", report.threshold}};
  } else if (cfg.dedup_enabled) {
    dedup_note = {{"applied", false}, {"reason", "feature payload carries no images"}};
  } else {
    dedup_note = {{"applied", false}, {"reason", "disabled"}};
  }
  if (store.payload() == data::PayloadKind::Images)
    fail(ErrorCode::ConfigError,
         "run-experiment trains on feature payloads; extract features after dedup first");

  detail::annotate(store, hash, cfg.seed);
  data::save_manifest(store, artifact("dataset.jsonl"));

  // partition D_l into S_i / V1 / T1
  data::PartitionResult split = data::partition_balanced(
      store, store.pool(data::pool::kLabeled), cfg.partition_counts, cfg.partition_seed,
      cfg.partition_strict);
  store.set_pool(data::pool::kSeed, split.train);
  store.set_pool(data::pool::kValidation, split.val);
  store.set_pool(data::pool::kTest, split.test);
  store.validate();
  data::save_manifest(store, artifact("partitioned.jsonl"));

  // iterative dual-learner pseudo-labeling
  std::unique_ptr<learner::Learner> n1 = make_learner(cfg.net1, store.dim(), store.num_classes());
  std::unique_ptr<learner::Learner> n2 = make_learner(cfg.net2, store.dim(), store.num_classes());
  ssl::SslResult run = ssl::run_ssl(store, cfg.ssl_config, *n1, *n2);
  result.status = run.status;
  result.iterations = run.iterations;

  write_history(artifact("history.jsonl"), hash, cfg.seed, run);
  auto save_set = [&](const data::LabeledSet& set, const std::string& name) {
    save_labeled_set(store, set, artifact(name), hash, cfg.seed);
  };
  save_set(run.s1, "s1.jsonl");
  save_set(run.s2, "s2.jsonl");
  save_model_if_builtin(*n1, artifact("n1.model.json"), hash, cfg.seed);
  save_model_if_builtin(*n2, artifact("n2.model.json"), hash, cfg.seed);

  // ensemble concordance
  data::LabeledSet str = ssl::build_concordance(store, run.s1, run.s2, *n1, *n2);
  save_set(str, "str.jsonl");

  // oracle: synthetic truth, or a labels file for real data
  std::unordered_map<std::string, int> oracle;
  if (cfg.labels_csv) oracle = data::load_oracle_csv(*cfg.labels_csv, store.taxonomy());
  bool oracle_ok = true;
  for (const auto& item : run.s1.items) {
    if (oracle.count(item.id)) continue;
    const auto& truth = store.instance(item.id).true_label;
    if (truth)
      oracle[item.id] = *truth;
    else
      oracle_ok = false;
  }
  result.oracle_available = oracle_ok;

  data::LabeledSet si = data::labeled_set_from_pool(store, data::pool::kSeed, data::pool::kSeed);
  data::BaselineSets baseline_sets;
  if (oracle_ok) {
    baseline_sets = data::build_baseline_sets(run.s1, oracle);
    save_set(baseline_sets.s3, "s3.jsonl");
    save_set(baseline_sets.s4, "s4.jsonl");
  }

  // bookkeeping pools on the working store
  store.set_pool(data::pool::kS1, run.s1.ids());
  store.set_pool(data::pool::kS2, run.s2.ids());
  store.set_pool(data::pool::kConcordance, str.ids());
  if (oracle_ok) {
    store.set_pool(data::pool::kS3, baseline_sets.s3.ids());
    store.set_pool(data::pool::kS4, baseline_sets.s4.ids());
  }
  store.validate();

  // baseline table on T1
  Examples val = data::materialize(
      store, data::labeled_set_from_pool(store, data::pool::kValidation, data::pool::kValidation));
  Examples test = data::materialize(
      store, data::labeled_set_from_pool(store, data::pool::kTest, data::pool::kTest));
  std::vector<std::pair<std::string, const data::LabeledSet*>> rows;
  rows.emplace_back("lower", &si);
  if (oracle_ok) {
    rows.emplace_back("mid", &baseline_sets.s3);
    rows.emplace_back("upper", &baseline_sets.s4);
  }
  rows.emplace_back("ssl", &str);
  std::unique_ptr<learner::Learner> baseline_model =
      make_learner(NetChoice{"builtin", "", cfg.baseline_config}, store.dim(),
                   store.num_classes());
  int baseline_epochs =
      cfg.baseline_epochs > 0 ? cfg.baseline_epochs : cfg.ssl_config.schedule.base_epochs;
  metrics::BaselineReport baselines = metrics::baseline_report(
      store, rows, val, test, *baseline_model, baseline_epochs, cfg.baseline_config);
  write_baseline_artifacts(baselines, store.taxonomy(),
                           (fs::path(cfg.out_dir) / "baselines").string(), hash, cfg.seed, "ssl");

  // summary
  result.err_s1 = pseudo_label_error(store, run.s1);
  result.err_s2 = pseudo_label_error(store, run.s2);
  result.err_str = pseudo_label_error(store, str);

  auto cv_or_null = [&](const data::LabeledSet& set) -> json {
    if (set.items.empty()) return nullptr;
    return metrics::class_count_cv(set, store.num_classes());
  };
  auto pct_or_null = [](const ErrorRate& rate) -> json {
    auto p = rate.percent();
    return p ? json(*p) : json(nullptr);
  };

  json summary;
  summary["config_hash"] = hash;
  summary["seed"] = cfg.seed;
  summary["status"] = ssl::ssl_status_name(run.status);
  summary["iterations"] = run.iterations;
  json sizes;
  sizes["S_i"] = si.size();
  sizes["S1"] = run.s1.size();
  sizes["S2"] = run.s2.size();
  sizes["S_tr"] = str.size();
  sizes["S3"] = oracle_ok ? json(baseline_sets.s3.size()) : json(nullptr);
  sizes["S4"] = oracle_ok ? json(baseline_sets.s4.size()) : json(nullptr);
  summary["sizes"] = std::move(sizes);
  json cvs;
  cvs["S_tr"] = cv_or_null(str);
  cvs["S3"] = oracle_ok ? cv_or_null(baseline_sets.s3) : json(nullptr);
  cvs["S4"] = oracle_ok ? cv_or_null(baseline_sets.s4) : json(nullptr);
  summary["class_count_cv_percent"] = std::move(cvs);
  json accs = json::object();
  for (const auto& row : baselines.rows) accs[row.name] = 100.0 * row.accuracy;
  summary["baseline_accuracy_percent"] = std::move(accs);
  json errs;
  errs["S1"] = pct_or_null(result.err_s1);
  errs["S2"] = pct_or_null(result.err_s2);
  errs["S_tr"] = pct_or_null(result.err_str);
  summary["pseudo_label_error_percent"] = std::move(errs);
  summary["dedup"] = std::move(dedup_note);
  detail::write_text(artifact("summary.json"), summary.dump(2) + "\n");

  result.store = std::move(store);
  result.si = std::move(si);
  result.s1 = std::move(run.s1);
  result.s2 = std::move(run.s2);
  result.str = std::move(str);
  result.s3 = std::move(baseline_sets.s3);
  result.s4 = std::move(baseline_sets.s4);
  result.baselines = std::move(baselines);
  result.summary = std::move(summary);
  return result;
}

}  // namespace conlabel::pipeline

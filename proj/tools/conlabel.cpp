// conlabel: iterative dual-learner labeling pipeline.
//
// Subcommands: synth, dedup, partition, run-ssl, concordance, baselines,
// evaluate, run-experiment. Exit codes: 0 success, 2 config error, 3 stage
// failure, 4 stalled pseudo-labeling loop. Set CONLABEL_VERBOSE=1 for
// progress logging on stderr.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "conlabel/common.hpp"
#include "conlabel/data.hpp"
#include "conlabel/dedup.hpp"
#include "conlabel/learner.hpp"
#include "conlabel/metrics.hpp"
#include "conlabel/pipeline.hpp"
#include "conlabel/ssl.hpp"
#include "conlabel/synth.hpp"

namespace cl = conlabel;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void log_verbose(const std::string& msg) {
  if (cl::verbose_logging()) std::cerr << "conlabel: " << msg << "\n";
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) cl::fail(cl::ErrorCode::ConfigError, "cannot open '" + path + "'");
  try {
    json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    cl::fail(cl::ErrorCode::ConfigError, "parse '" + path + "': " + e.what());
  }
}

std::string args_hash(const json& canonical) { return cl::to_hex(cl::fnv1a64(canonical.dump())); }

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) cl::fail(cl::ErrorCode::IoError, "cannot write '" + path + "'");
  out << content;
}

// a materialized set manifest carries exactly one pool: the set itself
cl::data::LabeledSet sole_set(const cl::data::DatasetStore& store, const std::string& which) {
  if (store.pools().size() != 1)
    cl::fail(cl::ErrorCode::ConfigError,
             which + " manifest must carry exactly one pool, found " +
                 std::to_string(store.pools().size()));
  const std::string& name = store.pools().begin()->first;
  return cl::data::labeled_set_from_pool(store, name, name);
}

cl::data::LabeledSet assigned_labels_set(const cl::data::DatasetStore& store,
                                         const std::string& name) {
  cl::data::LabeledSet out;
  out.name = name;
  for (const auto& id : store.ids_in_order()) {
    const auto& inst = store.instance(id);
    if (!inst.assigned_label) continue;
    out.items.push_back({id, *inst.assigned_label,
                         inst.provenance.value_or(cl::data::Provenance::seed())});
  }
  return out;
}

int cmd_synth(const std::string& spec_path, const std::string& out_path) {
  json spec_j = read_json_file(spec_path);
  cl::synth::SynthSpec spec;
  double corrupt_fraction = 0.0;
  uint64_t corrupt_seed = 0;
  bool corrupt_seed_given = false;
  try {
    spec.num_classes = spec_j.value("K", spec_j.value("classes", spec.num_classes));
    spec.dim = spec_j.value("d", spec_j.value("dim", spec.dim));
    spec.labeled_per_class =
        spec_j.value("n_labeled", spec_j.value("labeled_per_class", spec.labeled_per_class));
    spec.unlabeled_per_class =
        spec_j.value("n_unlabeled", spec_j.value("unlabeled_per_class", spec.unlabeled_per_class));
    spec.separation = spec_j.value("separation", spec.separation);
    spec.label_noise = spec_j.value("label_noise", spec.label_noise);
    spec.seed = spec_j.value("seed", spec.seed);
    corrupt_fraction = spec_j.value("corrupt_fraction", 0.0);
    if (spec_j.contains("corrupt_seed")) {
      corrupt_seed = spec_j.at("corrupt_seed").get<uint64_t>();
      corrupt_seed_given = true;
    }
  } catch (const nlohmann::json::exception& e) {
    cl::fail(cl::ErrorCode::ConfigError, std::string("spec: ") + e.what());
  }
  if (!corrupt_seed_given) corrupt_seed = cl::mix_seed(spec.seed, 2);
  spec.validate();
  if (!(corrupt_fraction >= 0 && corrupt_fraction <= 1))
    cl::fail(cl::ErrorCode::ConfigError, "corrupt_fraction must be in [0,1]");

  log_verbose("generating " + std::to_string(spec.num_classes) + " classes at dim " +
              std::to_string(spec.dim));
  cl::data::DatasetStore store = cl::synth::generate(spec);
  if (corrupt_fraction > 0) cl::synth::corrupt_pool(store, spec, corrupt_fraction, corrupt_seed);

  json canon;
  canon["op"] = "synth";
  canon["K"] = spec.num_classes;
  canon["d"] = spec.dim;
  canon["n_labeled"] = spec.labeled_per_class;
  canon["n_unlabeled"] = spec.unlabeled_per_class;
  canon["separation"] = spec.separation;
  canon["label_noise"] = spec.label_noise;
  canon["seed"] = spec.seed;
  canon["corrupt_fraction"] = corrupt_fraction;
  canon["corrupt_seed"] = corrupt_seed;
  store.set_annotation("config_hash", args_hash(canon));
  store.set_annotation("seed", std::to_string(spec.seed));
  cl::data::save_manifest(store, out_path);
  log_verbose("wrote " + out_path);
  return 0;
}

int cmd_dedup(const std::string& in_path, int threshold, const std::string& report_path,
              const std::string& out_manifest) {
  cl::data::DatasetStore store = cl::data::load_manifest(in_path);
  if (store.payload() != cl::data::PayloadKind::Images)
    cl::fail(cl::ErrorCode::ConfigError, "dedup needs an image manifest");
  std::vector<std::pair<std::string, cl::dedup::PerceptualHash>> hashed;
  hashed.reserve(store.size());
  for (const auto& id : store.ids_in_order())
    hashed.emplace_back(id, cl::dedup::dhash(cl::dedup::load_image(store.instance(id).image_path)));
  cl::dedup::DedupReport report = cl::dedup::dedup_hashes(hashed, threshold);
  log_verbose("kept " + std::to_string(report.kept.size()) + ", removed " +
              std::to_string(report.removed.size()));

  json canon{{"op", "dedup"}, {"in", in_path}, {"threshold", threshold}};
  json rj;
  rj["config_hash"] = args_hash(canon);
  rj["seed"] = 0;
  rj["threshold"] = report.threshold;
  rj["kept"] = report.kept;
  json removed = json::array();
  for (const auto& r : report.removed)
    removed.push_back({{"id", r.id}, {"duplicate_of", r.duplicate_of}, {"distance", r.distance}});
  rj["removed"] = std::move(removed);
  write_text(report_path, rj.dump(2) + "\n");

  if (!out_manifest.empty()) {
    std::unordered_set<std::string> kept(report.kept.begin(), report.kept.end());
    cl::data::DatasetStore filtered(store.taxonomy(), store.payload(), store.dim());
    for (const auto& id : store.ids_in_order())
      if (kept.count(id)) filtered.add_instance(store.instance(id));
    for (const auto& [name, ids] : store.pools()) {
      std::vector<std::string> keep_ids;
      for (const auto& id : ids)
        if (kept.count(id)) keep_ids.push_back(id);
      filtered.set_pool(name, std::move(keep_ids));
    }
    for (const auto& [key, val] : store.annotations()) filtered.set_annotation(key, val);
    filtered.set_annotation("config_hash", args_hash(canon));
    filtered.set_annotation("seed", "0");
    cl::data::save_manifest(filtered, out_manifest);
  }
  return 0;
}

int cmd_partition(const std::string& in_path, size_t train, size_t val, size_t test, uint64_t seed,
                  bool strict, const std::string& out_path) {
  cl::data::DatasetStore store = cl::data::load_manifest(in_path);
  std::vector<std::string> labeled;
  if (store.has_pool(cl::data::pool::kLabeled)) {
    labeled = store.pool(cl::data::pool::kLabeled);
  } else {
    for (const auto& id : store.ids_in_order())
      if (store.instance(id).assigned_label) labeled.push_back(id);
  }
  cl::data::PartitionResult split =
      cl::data::partition_balanced(store, labeled, {train, val, test}, seed, strict);
  store.set_pool(cl::data::pool::kSeed, split.train);
  store.set_pool(cl::data::pool::kValidation, split.val);
  store.set_pool(cl::data::pool::kTest, split.test);
  store.validate();
  json canon{{"op", "partition"}, {"in", in_path},    {"train", train}, {"val", val},
             {"test", test},      {"strict", strict}, {"seed", seed}};
  store.set_annotation("config_hash", args_hash(canon));
  store.set_annotation("seed", std::to_string(seed));
  cl::data::save_manifest(store, out_path);
  log_verbose("wrote " + out_path);
  return 0;
}

int cmd_run_ssl(const std::string& config_path, const std::string& in_override,
                const std::string& out_override) {
  cl::pipeline::PipelineConfig cfg = cl::pipeline::config_from_file(config_path);
  if (!in_override.empty()) cfg.input_manifest = in_override;
  if (!out_override.empty()) cfg.out_dir = out_override;
  cfg.validate();
  if (!cfg.input_manifest)
    cl::fail(cl::ErrorCode::ConfigError, "run-ssl needs input_manifest (a partitioned manifest)");
  cl::data::DatasetStore store = cl::data::load_manifest(*cfg.input_manifest);
  std::unique_ptr<cl::learner::Learner> n1 =
      cl::pipeline::make_learner(cfg.net1, store.dim(), store.num_classes());
  std::unique_ptr<cl::learner::Learner> n2 =
      cl::pipeline::make_learner(cfg.net2, store.dim(), store.num_classes());
  cl::ssl::SslResult run = cl::ssl::run_ssl(store, cfg.ssl_config, *n1, *n2);
  log_verbose("status " + std::string(cl::ssl::ssl_status_name(run.status)) + " after " +
              std::to_string(run.iterations) + " iterations");

  const std::string hash = cl::pipeline::config_hash(cfg);
  fs::create_directories(cfg.out_dir);
  auto artifact = [&](const char* name) { return (fs::path(cfg.out_dir) / name).string(); };
  cl::pipeline::write_history(artifact("history.jsonl"), hash, cfg.seed, run);
  cl::pipeline::save_labeled_set(store, run.s1, artifact("s1.jsonl"), hash, cfg.seed);
  cl::pipeline::save_labeled_set(store, run.s2, artifact("s2.jsonl"), hash, cfg.seed);
  cl::pipeline::save_model_if_builtin(*n1, artifact("n1.model.json"), hash, cfg.seed);
  cl::pipeline::save_model_if_builtin(*n2, artifact("n2.model.json"), hash, cfg.seed);
  cl::data::LabeledSet str = cl::ssl::build_concordance(store, run.s1, run.s2, *n1, *n2);
  cl::pipeline::save_labeled_set(store, str, artifact("str.jsonl"), hash, cfg.seed);
  return run.status == cl::ssl::SslStatus::Stalled ? 4 : 0;
}

int cmd_concordance(const std::string& in_path, const std::string& s1_path,
                    const std::string& s2_path, const std::string& n1_path,
                    const std::string& n2_path, const std::string& out_path) {
  cl::data::DatasetStore store = cl::data::load_manifest(in_path);
  cl::data::LabeledSet s1 = sole_set(cl::data::load_manifest(s1_path), "--s1");
  cl::data::LabeledSet s2 = sole_set(cl::data::load_manifest(s2_path), "--s2");
  cl::learner::SoftmaxRegression m1 = cl::learner::SoftmaxRegression::load_snapshot(n1_path);
  cl::learner::SoftmaxRegression m2 = cl::learner::SoftmaxRegression::load_snapshot(n2_path);
  cl::data::LabeledSet str = cl::ssl::build_concordance(store, s1, s2, m1, m2);
  json canon{{"op", "concordance"}, {"in", in_path}, {"s1", s1_path}, {"s2", s2_path},
             {"n1", n1_path},       {"n2", n2_path}};
  cl::pipeline::save_labeled_set(store, str, out_path, args_hash(canon), 0);
  log_verbose("kept " + std::to_string(str.size()) + " of " +
              std::to_string(s1.size() + s2.size()) + " set members");
  return 0;
}

int cmd_baselines(const std::string& config_path, const std::string& out_dir) {
  cl::pipeline::PipelineConfig cfg = cl::pipeline::config_from_file(config_path);
  cfg.validate();
  if (!cfg.input_manifest)
    cl::fail(cl::ErrorCode::ConfigError, "baselines needs input_manifest (a partitioned manifest)");
  cl::data::DatasetStore store = cl::data::load_manifest(*cfg.input_manifest);
  for (const char* name :
       {cl::data::pool::kSeed, cl::data::pool::kValidation, cl::data::pool::kTest})
    if (!store.has_pool(name))
      cl::fail(cl::ErrorCode::ConfigError,
               std::string("input manifest lacks pool '") + name + "'");
  cl::Examples val = cl::data::materialize(
      store, cl::data::labeled_set_from_pool(store, cl::data::pool::kValidation, "val"));
  cl::Examples test = cl::data::materialize(
      store, cl::data::labeled_set_from_pool(store, cl::data::pool::kTest, "test"));

  std::vector<cl::data::LabeledSet> sets;
  sets.push_back(cl::data::labeled_set_from_pool(store, cl::data::pool::kSeed, "lower"));
  std::vector<std::string> names{"lower"};
  for (const auto& [name, path] : cfg.baseline_sets) {
    sets.push_back(sole_set(cl::data::load_manifest(path), name));
    names.push_back(name);
  }
  std::vector<std::pair<std::string, const cl::data::LabeledSet*>> rows;
  for (size_t i = 0; i < sets.size(); ++i) rows.emplace_back(names[i], &sets[i]);

  cl::learner::SoftmaxRegression model(store.dim(), store.num_classes());
  int epochs = cfg.baseline_epochs > 0 ? cfg.baseline_epochs : cfg.ssl_config.schedule.base_epochs;
  cl::metrics::BaselineReport report = cl::metrics::baseline_report(
      store, rows, val, test, model, epochs, cfg.baseline_config);
  cl::pipeline::write_baseline_artifacts(report, store.taxonomy(), out_dir,
                                         cl::pipeline::config_hash(cfg), cfg.seed, "ssl");
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& test_path,
                 const std::string& out_path) {
  cl::learner::SoftmaxRegression model = cl::learner::SoftmaxRegression::load_snapshot(model_path);
  cl::data::DatasetStore store = cl::data::load_manifest(test_path);
  cl::data::LabeledSet set =
      store.has_pool(cl::data::pool::kTest)
          ? cl::data::labeled_set_from_pool(store, cl::data::pool::kTest, "test")
          : assigned_labels_set(store, "test");
  cl::Examples test = cl::data::materialize(store, set);
  cl::metrics::MetricsReport report = cl::metrics::evaluate(model, test, store.num_classes());
  json rj = cl::metrics::report_to_json(report, store.taxonomy());
  json canon{{"op", "evaluate"}, {"model", model_path}, {"test", test_path}};
  rj["config_hash"] = args_hash(canon);
  rj["seed"] = 0;
  write_text(out_path, rj.dump(2) + "\n");
  log_verbose("accuracy " + cl::format_percent(100.0 * report.accuracy) + "%");
  return 0;
}

int cmd_run_experiment(const std::string& config_path, const std::string& out_override) {
  cl::pipeline::PipelineConfig cfg = cl::pipeline::config_from_file(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  cl::pipeline::ExperimentResult result = cl::pipeline::run_experiment(cfg);
  std::cout << "wrote " << (fs::path(cfg.out_dir) / "summary.json").string()
            << " (status: " << cl::ssl::ssl_status_name(result.status)
            << ", iterations: " << result.iterations << ")\n";
  return result.status == cl::ssl::SslStatus::Stalled ? 4 : 0;
}

int guarded(const std::string& stage, const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const cl::Error& e) {
    std::cerr << "conlabel: " << stage << ": " << e.what() << std::endl;
    return e.code() == cl::ErrorCode::ConfigError ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "conlabel: " << stage << ": " << e.what() << std::endl;
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iterative dual-learner labeling pipeline"};
  app.require_subcommand(1);

  std::string spec_path, out_path, in_path, report_path, out_manifest, config_path;
  std::string s1_path, s2_path, n1_path, n2_path, model_path, test_path, out_dir;
  size_t train = 0, val = 0, test_n = 0;
  uint64_t seed = 0;
  bool strict = true;
  int threshold = 4;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic feature dataset");
  synth->add_option("--spec", spec_path, "spec JSON file")->required();
  synth->add_option("--out", out_path, "output manifest path")->required();

  CLI::App* dedup = app.add_subcommand("dedup", "drop near-duplicate images by perceptual hash");
  dedup->add_option("--in", in_path, "image manifest")->required();
  dedup->add_option("--threshold", threshold, "max Hamming distance to count as duplicate")
      ->capture_default_str();
  dedup->add_option("--out", report_path, "report JSON path")->required();
  dedup->add_option("--out-manifest", out_manifest, "optional deduplicated manifest path");

  CLI::App* partition = app.add_subcommand("partition", "balanced seed/validation/test split");
  partition->add_option("--in", in_path, "input manifest")->required();
  partition->add_option("--train", train, "seed set size")->required();
  partition->add_option("--val", val, "validation set size")->required();
  partition->add_option("--test", test_n, "test set size")->required();
  partition->add_option("--seed", seed, "shuffle seed")->capture_default_str();
  partition->add_flag("--strict,!--no-strict", strict,
                      "require counts divisible by the class count");
  partition->add_option("--out", out_path, "output manifest path")->required();

  CLI::App* run_ssl = app.add_subcommand("run-ssl", "iterative pseudo-labeling loop");
  run_ssl->add_option("--config", config_path, "pipeline config JSON")->required();
  run_ssl->add_option("--in", in_path, "partitioned manifest (overrides input_manifest)");
  run_ssl->add_option("--out-dir", out_dir, "artifact directory (overrides out_dir)");

  CLI::App* concordance =
      app.add_subcommand("concordance", "keep set members both models agree on");
  concordance->add_option("--in", in_path, "partitioned manifest with features")->required();
  concordance->add_option("--s1", s1_path, "network-1 set manifest")->required();
  concordance->add_option("--s2", s2_path, "network-2 set manifest")->required();
  concordance->add_option("--n1", n1_path, "network-1 model snapshot")->required();
  concordance->add_option("--n2", n2_path, "network-2 model snapshot")->required();
  concordance->add_option("--out", out_path, "output set manifest")->required();

  CLI::App* baselines = app.add_subcommand("baselines", "train and score the baseline table");
  baselines->add_option("--config", config_path, "pipeline config JSON")->required();
  baselines->add_option("--out", out_dir, "output directory")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "score a model snapshot on a test manifest");
  evaluate->add_option("--model", model_path, "model snapshot JSON")->required();
  evaluate->add_option("--test", test_path, "test manifest")->required();
  evaluate->add_option("--out", out_path, "report JSON path")->required();

  CLI::App* run_experiment = app.add_subcommand("run-experiment", "full pipeline, one config");
  run_experiment->add_option("--config", config_path, "pipeline config JSON")->required();
  run_experiment->add_option("--out-dir", out_dir, "artifact directory (overrides out_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (app.got_subcommand(synth)) return guarded("synth", [&] { return cmd_synth(spec_path, out_path); });
  if (app.got_subcommand(dedup))
    return guarded("dedup", [&] { return cmd_dedup(in_path, threshold, report_path, out_manifest); });
  if (app.got_subcommand(partition))
    return guarded("partition",
                   [&] { return cmd_partition(in_path, train, val, test_n, seed, strict, out_path); });
  if (app.got_subcommand(run_ssl))
    return guarded("run-ssl", [&] { return cmd_run_ssl(config_path, in_path, out_dir); });
  if (app.got_subcommand(concordance))
    return guarded("concordance", [&] {
      return cmd_concordance(in_path, s1_path, s2_path, n1_path, n2_path, out_path);
    });
  if (app.got_subcommand(baselines))
    return guarded("baselines", [&] { return cmd_baselines(config_path, out_dir); });
  if (app.got_subcommand(evaluate))
    return guarded("evaluate", [&] { return cmd_evaluate(model_path, test_path, out_path); });
  if (app.got_subcommand(run_experiment))
    return guarded("run-experiment", [&] { return cmd_run_experiment(config_path, out_dir); });
  return 2;
}

#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "conlabel/common.hpp"

namespace conlabel::data {

using json = nlohmann::ordered_json;

// true_label value for synthetic noise samples that belong to no class;
// they never count in error-rate denominators
inline constexpr int kUnattributable = -1;

enum class ProvenanceKind { SeedLabeled, PseudoLabeled, OracleCorrected };

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::SeedLabeled;
  int iteration = 0;       // pseudo-labeled only, >= 1
  int network = 0;         // pseudo-labeled only, 1 or 2
  double confidence = 0.0; // pseudo-labeled only, in [0,1]

  static Provenance seed() { return {ProvenanceKind::SeedLabeled, 0, 0, 0.0}; }
  static Provenance pseudo(int iteration, int network, double confidence) {
    return {ProvenanceKind::PseudoLabeled, iteration, network, confidence};
  }
  static Provenance oracle() { return {ProvenanceKind::OracleCorrected, 0, 0, 0.0}; }

  bool operator==(const Provenance&) const = default;
};

struct Instance {
  std::string id;
  std::vector<double> features;  // feature payload
  std::string image_path;        // image payload
  std::optional<int> true_label;
  std::optional<int> assigned_label;
  std::optional<Provenance> provenance;

  bool operator==(const Instance&) const = default;
};

struct ClassTaxonomy {
  std::vector<std::string> names;

  int size() const { return static_cast<int>(names.size()); }

  void validate() const {
    if (names.size() < 2) fail(ErrorCode::ConfigError, "taxonomy needs at least 2 classes");
    std::set<std::string> uniq(names.begin(), names.end());
    if (uniq.size() != names.size()) fail(ErrorCode::ConfigError, "taxonomy names must be unique");
  }

  bool operator==(const ClassTaxonomy&) const = default;
};

enum class PayloadKind { Features, Images };

// Pool name conventions used across the pipeline.
namespace pool {
inline constexpr const char* kLabeled = "D_l";
inline constexpr const char* kUnlabeled = "D_u";
inline constexpr const char* kSeed = "S_i";
inline constexpr const char* kValidation = "V1";
inline constexpr const char* kTest = "T1";
inline constexpr const char* kS1 = "S1";
inline constexpr const char* kS2 = "S2";
inline constexpr const char* kS3 = "S3";
inline constexpr const char* kS4 = "S4";
inline constexpr const char* kConcordance = "S_tr";
}  // namespace pool

class DatasetStore {
 public:
  DatasetStore() = default;
  DatasetStore(ClassTaxonomy taxonomy, PayloadKind payload, size_t dim)
      : taxonomy_(std::move(taxonomy)), payload_(payload), dim_(dim) {
    taxonomy_.validate();
  }

  const ClassTaxonomy& taxonomy() const { return taxonomy_; }
  int num_classes() const { return taxonomy_.size(); }
  PayloadKind payload() const { return payload_; }
  size_t dim() const { return dim_; }
  size_t size() const { return order_.size(); }
  const std::vector<std::string>& ids_in_order() const { return order_; }

  bool has(const std::string& id) const { return instances_.count(id) != 0; }

  const Instance& instance(const std::string& id) const {
    auto it = instances_.find(id);
    if (it == instances_.end()) fail(ErrorCode::InternalError, "unknown instance id '" + id + "'");
    return it->second;
  }

  Instance& mutable_instance(const std::string& id) {
    auto it = instances_.find(id);
    if (it == instances_.end()) fail(ErrorCode::InternalError, "unknown instance id '" + id + "'");
    return it->second;
  }

  void add_instance(Instance inst) {
    if (inst.id.empty()) fail(ErrorCode::ParseError, "instance with empty id");
    if (has(inst.id)) fail(ErrorCode::DuplicateId, "duplicate instance id '" + inst.id + "'");
    if (payload_ == PayloadKind::Features && inst.features.size() != dim_)
      fail(ErrorCode::DimensionMismatch,
           "instance '" + inst.id + "' has dimension " + std::to_string(inst.features.size()) +
               ", store dimension is " + std::to_string(dim_));
    if (payload_ == PayloadKind::Images && inst.image_path.empty())
      fail(ErrorCode::ParseError, "instance '" + inst.id + "' lacks an image path");
    order_.push_back(inst.id);
    instances_.emplace(inst.id, std::move(inst));
  }

  bool has_pool(const std::string& name) const { return pools_.count(name) != 0; }

  const std::vector<std::string>& pool(const std::string& name) const {
    auto it = pools_.find(name);
    if (it == pools_.end()) fail(ErrorCode::ConfigError, "pool '" + name + "' is not defined");
    return it->second;
  }

  void set_pool(const std::string& name, std::vector<std::string> ids) {
    std::set<std::string> uniq;
    for (const auto& id : ids) {
      if (!has(id)) fail(ErrorCode::InternalError, "pool '" + name + "' references unknown id '" + id + "'");
      if (!uniq.insert(id).second)
        fail(ErrorCode::DuplicateId, "pool '" + name + "' lists id '" + id + "' twice");
    }
    pools_[name] = std::move(ids);
  }

  const std::map<std::string, std::vector<std::string>>& pools() const { return pools_; }

  // extra header fields carried through save/load (seed, config_hash, ...)
  const std::map<std::string, std::string>& annotations() const { return annotations_; }
  void set_annotation(const std::string& key, const std::string& value) { annotations_[key] = value; }

  // id -> instance stays injective by construction; this checks pool
  // referential integrity and the evaluation-set separation rules
  void validate() const {
    for (const auto& [name, ids] : pools_) {
      std::set<std::string> uniq;
      for (const auto& id : ids) {
        if (!has(id)) fail(ErrorCode::InternalError, "pool '" + name + "' references unknown id '" + id + "'");
        if (!uniq.insert(id).second)
          fail(ErrorCode::DuplicateId, "pool '" + name + "' lists id '" + id + "' twice");
      }
    }
    auto disjoint = [&](const char* a, const char* b) {
      if (!has_pool(a) || !has_pool(b)) return;
      const auto& pa = pool(a);
      std::set<std::string> sa(pa.begin(), pa.end());
      for (const auto& id : pool(b))
        if (sa.count(id))
          fail(ErrorCode::InternalError,
               std::string("pools ") + a + " and " + b + " share instance '" + id + "'");
    };
    disjoint(pool::kValidation, pool::kTest);
    disjoint(pool::kSeed, pool::kValidation);
    disjoint(pool::kSeed, pool::kTest);
  }

  bool operator==(const DatasetStore& o) const {
    return taxonomy_ == o.taxonomy_ && payload_ == o.payload_ && dim_ == o.dim_ &&
           order_ == o.order_ && instances_ == o.instances_ && pools_ == o.pools_ &&
           annotations_ == o.annotations_;
  }

 private:
  ClassTaxonomy taxonomy_;
  PayloadKind payload_ = PayloadKind::Features;
  size_t dim_ = 0;
  std::vector<std::string> order_;
  std::unordered_map<std::string, Instance> instances_;
  std::map<std::string, std::vector<std::string>> pools_;
  std::map<std::string, std::string> annotations_;
};

// A training set as the pipeline passes it around: ids with the labels this
// set assigns them. The same instance can carry different labels in
// different sets (one per network), so labels live here and not on Instance.
struct LabeledItem {
  std::string id;
  int label = 0;
  Provenance provenance;

  bool operator==(const LabeledItem&) const = default;
};

struct LabeledSet {
  std::string name;
  std::vector<LabeledItem> items;

  size_t size() const { return items.size(); }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back(it.id);
    return out;
  }
};

// Seed a LabeledSet from a pool whose instances carry assigned labels.
inline LabeledSet labeled_set_from_pool(const DatasetStore& store, const std::string& pool_name,
                                        const std::string& set_name) {
  LabeledSet out;
  out.name = set_name;
  for (const auto& id : store.pool(pool_name)) {
    const Instance& inst = store.instance(id);
    if (!inst.assigned_label)
      fail(ErrorCode::InternalError, "instance '" + id + "' in pool '" + pool_name + "' has no label");
    out.items.push_back({id, *inst.assigned_label,
                         inst.provenance.value_or(Provenance::seed())});
  }
  return out;
}

inline Examples materialize(const DatasetStore& store, const LabeledSet& set) {
  Examples ex;
  ex.x = Matrix(set.items.size(), store.dim());
  ex.y.resize(set.items.size());
  for (size_t i = 0; i < set.items.size(); ++i) {
    const Instance& inst = store.instance(set.items[i].id);
    std::copy(inst.features.begin(), inst.features.end(), ex.x.row(i).begin());
    ex.y[i] = set.items[i].label;
  }
  return ex;
}

inline Matrix feature_rows(const DatasetStore& store, const std::vector<std::string>& ids) {
  Matrix m(ids.size(), store.dim());
  for (size_t i = 0; i < ids.size(); ++i) {
    const Instance& inst = store.instance(ids[i]);
    std::copy(inst.features.begin(), inst.features.end(), m.row(i).begin());
  }
  return m;
}

// --- balanced partitioning ---

struct PartitionCounts {
  size_t train = 0;
  size_t val = 0;
  size_t test = 0;
};

struct PartitionResult {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

// Strict mode demands counts divisible by K and yields exactly uniform class
// histograms. Non-strict floors the per-class count and hands the remainder
// out round-robin by class index.
inline PartitionResult partition_balanced(const DatasetStore& store,
                                          const std::vector<std::string>& labeled_ids,
                                          PartitionCounts counts, uint64_t seed,
                                          bool strict = true) {
  const int k = store.num_classes();
  auto per_class = [&](size_t total, const char* split) -> std::vector<size_t> {
    std::vector<size_t> need(static_cast<size_t>(k), total / static_cast<size_t>(k));
    size_t rem = total % static_cast<size_t>(k);
    if (rem != 0) {
      if (strict)
        fail(ErrorCode::UnbalancedRequest, std::string(split) + " count " + std::to_string(total) +
                                               " is not divisible by " + std::to_string(k) + " classes");
      for (size_t c = 0; c < rem; ++c) need[c] += 1;
    }
    return need;
  };
  std::vector<size_t> need_train = per_class(counts.train, "train");
  std::vector<size_t> need_val = per_class(counts.val, "val");
  std::vector<size_t> need_test = per_class(counts.test, "test");

  std::vector<std::vector<std::string>> members(static_cast<size_t>(k));
  for (const auto& id : labeled_ids) {
    const Instance& inst = store.instance(id);
    if (!inst.assigned_label)
      fail(ErrorCode::InternalError, "unlabeled instance '" + id + "' in partition input");
    int label = *inst.assigned_label;
    if (label < 0 || label >= k)
      fail(ErrorCode::LabelOutOfRange, "instance '" + id + "' has label " + std::to_string(label));
    members[static_cast<size_t>(label)].push_back(id);
  }

  PartitionResult result;
  Rng rng(seed);
  for (int c = 0; c < k; ++c) {
    auto& ids = members[static_cast<size_t>(c)];
    size_t needed = need_train[c] + need_val[c] + need_test[c];
    if (ids.size() < needed)
      fail(ErrorCode::InsufficientClassMembers,
           "class '" + store.taxonomy().names[static_cast<size_t>(c)] + "' needs " +
               std::to_string(needed) + " members, has " + std::to_string(ids.size()));
    // sort first so the split depends on (ids, seed) and not on input order
    std::sort(ids.begin(), ids.end());
    rng.shuffle(ids);
    size_t pos = 0;
    for (size_t i = 0; i < need_train[c]; ++i) result.train.push_back(ids[pos++]);
    for (size_t i = 0; i < need_val[c]; ++i) result.val.push_back(ids[pos++]);
    for (size_t i = 0; i < need_test[c]; ++i) result.test.push_back(ids[pos++]);
  }
  return result;
}

// --- baseline set construction (S3 keeps correct pseudo-labels, S4 corrects
// the wrong ones) ---

struct BaselineSets {
  LabeledSet s3;
  LabeledSet s4;
};

inline BaselineSets build_baseline_sets(const LabeledSet& s1,
                                        const std::unordered_map<std::string, int>& oracle) {
  BaselineSets out;
  out.s3.name = pool::kS3;
  out.s4.name = pool::kS4;
  for (const auto& item : s1.items) {
    auto it = oracle.find(item.id);
    if (it == oracle.end())
      fail(ErrorCode::MissingOracleLabel, "no oracle label for instance '" + item.id + "'");
    int truth = it->second;
    if (truth == kUnattributable) continue;  // no valid class to correct to
    if (item.label == truth) {
      out.s3.items.push_back(item);
      out.s4.items.push_back(item);
    } else {
      LabeledItem corrected = item;
      corrected.label = truth;
      corrected.provenance = Provenance::oracle();
      out.s4.items.push_back(corrected);
    }
  }
  return out;
}

inline std::unordered_map<std::string, int> oracle_from_store(const DatasetStore& store,
                                                              const std::vector<std::string>& ids) {
  std::unordered_map<std::string, int> out;
  for (const auto& id : ids) {
    const Instance& inst = store.instance(id);
    if (!inst.true_label)
      fail(ErrorCode::MissingOracleLabel, "instance '" + id + "' has no true label");
    out[id] = *inst.true_label;
  }
  return out;
}

// two-column CSV: id,label (label as class index or taxonomy name)
inline std::unordered_map<std::string, int> load_oracle_csv(const std::string& path,
                                                            const ClassTaxonomy& taxonomy) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open labels file '" + path + "'");
  std::unordered_map<std::string, int> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      fail(ErrorCode::ParseError, "labels line " + std::to_string(line_no) + ": expected id,label");
    std::string id = line.substr(0, comma);
    std::string label_str = line.substr(comma + 1);
    int label = 0;
    try {
      size_t consumed = 0;
      label = std::stoi(label_str, &consumed);
      if (consumed != label_str.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      auto it = std::find(taxonomy.names.begin(), taxonomy.names.end(), label_str);
      if (it == taxonomy.names.end())
        fail(ErrorCode::ParseError,
             "labels line " + std::to_string(line_no) + ": unknown class '" + label_str + "'");
      label = static_cast<int>(it - taxonomy.names.begin());
    }
    out[id] = label;
  }
  return out;
}

// --- manifest I/O: one header line, then one JSON record per instance ---

inline json provenance_to_json(const Provenance& p) {
  json j;
  switch (p.kind) {
    case ProvenanceKind::SeedLabeled:
      j["kind"] = "seed-labeled";
      break;
    case ProvenanceKind::PseudoLabeled:
      j["kind"] = "pseudo-labeled";
      j["iteration"] = p.iteration;
      j["network"] = p.network;
      j["confidence"] = p.confidence;
      break;
    case ProvenanceKind::OracleCorrected:
      j["kind"] = "oracle-corrected";
      break;
  }
  return j;
}

inline Provenance provenance_from_json(const json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "seed-labeled") return Provenance::seed();
  if (kind == "oracle-corrected") return Provenance::oracle();
  if (kind == "pseudo-labeled")
    return Provenance::pseudo(j.at("iteration").get<int>(), j.at("network").get<int>(),
                              j.at("confidence").get<double>());
  fail(ErrorCode::ParseError, "unknown provenance kind '" + kind + "'");
}

inline void save_manifest(const DatasetStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write manifest '" + path + "'");
  json header;
  header["taxonomy"] = store.taxonomy().names;
  header["dim"] = store.dim();
  header["payload"] = store.payload() == PayloadKind::Features ? "features" : "images";
  json pools = json::object();
  for (const auto& [name, ids] : store.pools()) pools[name] = ids;
  header["pools"] = pools;
  if (!store.annotations().empty()) {
    json ann = json::object();
    for (const auto& [key, val] : store.annotations()) ann[key] = val;
    header["annotations"] = ann;
  }
  out << header.dump() << "\n";
  for (const auto& id : store.ids_in_order()) {
    const Instance& inst = store.instance(id);
    json line;
    line["id"] = inst.id;
    if (store.payload() == PayloadKind::Features)
      line["features"] = inst.features;
    else
      line["image"] = inst.image_path;
    line["true_label"] = inst.true_label ? json(*inst.true_label) : json(nullptr);
    line["assigned_label"] = inst.assigned_label ? json(*inst.assigned_label) : json(nullptr);
    line["provenance"] = inst.provenance ? provenance_to_json(*inst.provenance) : json(nullptr);
    out << line.dump() << "\n";
  }
}

inline DatasetStore load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open manifest '" + path + "'");
  std::string line;
  size_t line_no = 0;
  auto parse_line = [&](const std::string& text) -> json {
    try {
      return json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  };
  if (!std::getline(in, line)) fail(ErrorCode::ParseError, "manifest '" + path + "' is empty");
  ++line_no;
  json header = parse_line(line);
  DatasetStore store;
  try {
    ClassTaxonomy taxonomy{header.at("taxonomy").get<std::vector<std::string>>()};
    std::string payload_str = header.at("payload").get<std::string>();
    PayloadKind payload = payload_str == "images" ? PayloadKind::Images : PayloadKind::Features;
    store = DatasetStore(taxonomy, payload, header.at("dim").get<size_t>());
    if (header.contains("annotations"))
      for (const auto& [key, val] : header.at("annotations").items())
        store.set_annotation(key, val.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("manifest header: ") + e.what());
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(line);
    Instance inst;
    try {
      inst.id = j.at("id").get<std::string>();
      if (store.payload() == PayloadKind::Features)
        inst.features = j.at("features").get<std::vector<double>>();
      else
        inst.image_path = j.at("image").get<std::string>();
      if (j.contains("true_label") && !j.at("true_label").is_null())
        inst.true_label = j.at("true_label").get<int>();
      if (j.contains("assigned_label") && !j.at("assigned_label").is_null())
        inst.assigned_label = j.at("assigned_label").get<int>();
      if (j.contains("provenance") && !j.at("provenance").is_null())
        inst.provenance = provenance_from_json(j.at("provenance"));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    store.add_instance(std::move(inst));
  }
  try {
    for (const auto& [name, ids] : header.at("pools").items())
      store.set_pool(name, ids.get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("manifest pools: ") + e.what());
  }
  return store;
}

// Copy the members of a labeled set into a standalone store whose instances
// carry the set's labels; used to emit s1/s2/S_tr/S3/S4 manifests.
inline DatasetStore materialize_store(const DatasetStore& source, const LabeledSet& set) {
  DatasetStore out(source.taxonomy(), source.payload(), source.dim());
  std::vector<std::string> ids;
  for (const auto& item : set.items) {
    Instance inst = source.instance(item.id);
    inst.assigned_label = item.label;
    inst.provenance = item.provenance;
    out.add_instance(std::move(inst));
    ids.push_back(item.id);
  }
  out.set_pool(set.name, std::move(ids));
  return out;
}

inline LabeledSet labeled_set_from_store(const DatasetStore& store, const std::string& pool_name) {
  return labeled_set_from_pool(store, pool_name, pool_name);
}

}  // namespace conlabel::data

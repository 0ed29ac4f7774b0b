#pragma once

#include <string>
#include <vector>

#include "conlabel/common.hpp"
#include "conlabel/data.hpp"

// Desk-scale stand-in corpus: one unit-variance Gaussian cluster per class,
// means on orthogonal axes so separability is an analytic function of the
// separation knob.

namespace conlabel::synth {

struct SynthSpec {
  int num_classes = 12;
  int dim = 16;
  int labeled_per_class = 15;
  int unlabeled_per_class = 150;
  double separation = 4.0;   // distance of each class mean from the origin, in cluster stds
  double label_noise = 0.0;  // fraction of seed labels flipped to a different class
  uint64_t seed = 0;

  void validate() const {
    if (num_classes < 2) fail(ErrorCode::ConfigError, "num_classes must be >= 2");
    if (dim < num_classes)
      fail(ErrorCode::DimensionTooSmall, "dim " + std::to_string(dim) +
                                             " < num_classes " + std::to_string(num_classes) +
                                             " (means sit on orthogonal axes)");
    if (labeled_per_class < 1) fail(ErrorCode::ConfigError, "labeled_per_class must be >= 1");
    if (unlabeled_per_class < 0) fail(ErrorCode::ConfigError, "unlabeled_per_class must be >= 0");
    if (separation < 0) fail(ErrorCode::ConfigError, "separation must be >= 0");
    if (!(label_noise >= 0 && label_noise < 1))
      fail(ErrorCode::ConfigError, "label_noise must be in [0,1)");
  }
};

inline std::vector<double> class_mean(const SynthSpec& spec, int c) {
  std::vector<double> mean(static_cast<size_t>(spec.dim), 0.0);
  mean[static_cast<size_t>(c)] = spec.separation;
  return mean;
}

inline std::string padded_id(char prefix, size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return std::string(1, prefix) + digits;
}

inline data::DatasetStore generate(const SynthSpec& spec) {
  spec.validate();
  std::vector<std::string> names;
  for (int c = 0; c < spec.num_classes; ++c) names.push_back("class_" + std::to_string(c));
  data::DatasetStore store(data::ClassTaxonomy{names}, data::PayloadKind::Features,
                           static_cast<size_t>(spec.dim));
  Rng rng(spec.seed);

  auto draw = [&](int c) {
    std::vector<double> x = class_mean(spec, c);
    for (double& v : x) v += rng.next_gaussian();
    return x;
  };

  std::vector<std::string> labeled_ids;
  size_t counter = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int i = 0; i < spec.labeled_per_class; ++i) {
      data::Instance inst;
      inst.id = padded_id('L', counter++);
      inst.features = draw(c);
      inst.true_label = c;
      inst.assigned_label = c;
      inst.provenance = data::Provenance::seed();
      labeled_ids.push_back(inst.id);
      store.add_instance(std::move(inst));
    }
  }
  std::vector<std::string> unlabeled_ids;
  counter = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int i = 0; i < spec.unlabeled_per_class; ++i) {
      data::Instance inst;
      inst.id = padded_id('U', counter++);
      inst.features = draw(c);
      inst.true_label = c;  // generator truth, hidden from the learners
      unlabeled_ids.push_back(inst.id);
      store.add_instance(std::move(inst));
    }
  }

  if (spec.label_noise > 0) {
    size_t flips = static_cast<size_t>(
        std::llround(spec.label_noise * static_cast<double>(labeled_ids.size())));
    for (size_t pos : rng.sample_indices(labeled_ids.size(), flips)) {
      data::Instance& inst = store.mutable_instance(labeled_ids[pos]);
      int truth = *inst.true_label;
      int offset = 1 + static_cast<int>(rng.uniform_index(
                           static_cast<size_t>(spec.num_classes - 1)));
      inst.assigned_label = (truth + offset) % spec.num_classes;
    }
  }

  store.set_pool(data::pool::kLabeled, std::move(labeled_ids));
  store.set_pool(data::pool::kUnlabeled, std::move(unlabeled_ids));
  return store;
}

// Replace a fraction of the unlabeled pool with samples from midpoints
// between pairs of class means: plausible-looking instances that belong to no
// class, which a confidence threshold ought to pass over.
inline void corrupt_pool(data::DatasetStore& store, const SynthSpec& spec, double fraction,
                         uint64_t seed) {
  if (!(fraction >= 0 && fraction <= 1))
    fail(ErrorCode::ConfigError, "corrupt fraction must be in [0,1]");
  if (fraction == 0) return;
  const auto& pool = store.pool(data::pool::kUnlabeled);
  Rng rng(seed);
  size_t count =
      static_cast<size_t>(std::llround(fraction * static_cast<double>(pool.size())));
  for (size_t pos : rng.sample_indices(pool.size(), count)) {
    data::Instance& inst = store.mutable_instance(pool[pos]);
    int a = static_cast<int>(rng.uniform_index(static_cast<size_t>(spec.num_classes)));
    int b = static_cast<int>(rng.uniform_index(static_cast<size_t>(spec.num_classes - 1)));
    if (b >= a) ++b;
    std::vector<double> ma = class_mean(spec, a);
    std::vector<double> mb = class_mean(spec, b);
    for (size_t j = 0; j < ma.size(); ++j)
      inst.features[j] = 0.5 * (ma[j] + mb[j]) + rng.next_gaussian();
    inst.true_label = data::kUnattributable;
  }
}

}  // namespace conlabel::synth

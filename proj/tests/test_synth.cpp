#include <catch2/catch_amalgamated.hpp>

#include <limits>
#include <string>
#include <vector>

#include "conlabel/synth.hpp"

using namespace conlabel;
using synth::SynthSpec;

namespace {

SynthSpec small_spec() {
  SynthSpec spec;
  spec.num_classes = 4;
  spec.dim = 5;
  spec.labeled_per_class = 6;
  spec.unlabeled_per_class = 10;
  spec.separation = 4.0;
  spec.label_noise = 0.0;
  spec.seed = 9;
  return spec;
}

// classify the unlabeled pool by distance to labeled-pool class means
double nearest_mean_transfer_accuracy(const data::DatasetStore& store, int classes) {
  size_t dim = store.dim();
  Matrix means(static_cast<size_t>(classes), dim);
  std::vector<long> counts(static_cast<size_t>(classes), 0);
  for (const auto& id : store.pool(data::pool::kLabeled)) {
    const auto& inst = store.instance(id);
    auto c = static_cast<size_t>(*inst.true_label);
    counts[c] += 1;
    for (size_t d = 0; d < dim; ++d) means[c][d] += inst.features[d];
  }
  for (size_t c = 0; c < static_cast<size_t>(classes); ++c)
    for (size_t d = 0; d < dim; ++d) means[c][d] /= static_cast<double>(counts[c]);

  size_t correct = 0, total = 0;
  for (const auto& id : store.pool(data::pool::kUnlabeled)) {
    const auto& inst = store.instance(id);
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int c = 0; c < classes; ++c) {
      double d2 = 0.0;
      for (size_t d = 0; d < dim; ++d) {
        double diff = inst.features[d] - means[static_cast<size_t>(c)][d];
        d2 += diff * diff;
      }
      if (d2 < best_d2) {
        best_d2 = d2;
        best = c;
      }
    }
    ++total;
    if (best == *inst.true_label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("generated corpus has the requested shape") {
  auto store = synth::generate(small_spec());
  CHECK(store.size() == 64);
  CHECK(store.dim() == 5);
  CHECK(store.num_classes() == 4);
  CHECK(store.taxonomy().names[0] == "class_0");
  REQUIRE(store.pool(data::pool::kLabeled).size() == 24);
  REQUIRE(store.pool(data::pool::kUnlabeled).size() == 40);
  CHECK(store.pool(data::pool::kLabeled).front() == "L000000");
  CHECK(store.pool(data::pool::kLabeled).back() == "L000023");
  CHECK(store.pool(data::pool::kUnlabeled).front() == "U000000");
  store.validate();

  // labeled: seed provenance, assignment matching truth; class blocks in order
  int idx = 0;
  for (const auto& id : store.pool(data::pool::kLabeled)) {
    const auto& inst = store.instance(id);
    CHECK(*inst.true_label == idx / 6);
    CHECK(*inst.assigned_label == *inst.true_label);
    CHECK(inst.provenance == data::Provenance::seed());
    ++idx;
  }
  // unlabeled: generator truth recorded, no assignment
  idx = 0;
  for (const auto& id : store.pool(data::pool::kUnlabeled)) {
    const auto& inst = store.instance(id);
    CHECK(*inst.true_label == idx / 10);
    CHECK(!inst.assigned_label.has_value());
    CHECK(!inst.provenance.has_value());
    ++idx;
  }
}

TEST_CASE("identifier padding is six digits wide") {
  CHECK(synth::padded_id('L', 0) == "L000000");
  CHECK(synth::padded_id('U', 42) == "U000042");
  CHECK(synth::padded_id('U', 1234567) == "U1234567");
}

TEST_CASE("generation is a pure function of the spec") {
  auto a = synth::generate(small_spec());
  auto b = synth::generate(small_spec());
  CHECK(a == b);
  SynthSpec other = small_spec();
  other.seed = 10;
  CHECK(!(a == synth::generate(other)));
}

TEST_CASE("separation controls transfer separability") {
  SynthSpec wide = small_spec();
  wide.separation = 8.0;
  wide.unlabeled_per_class = 50;
  CHECK(nearest_mean_transfer_accuracy(synth::generate(wide), 4) >= 0.99);

  SynthSpec collapsed = small_spec();
  collapsed.separation = 0.0;
  collapsed.unlabeled_per_class = 50;
  double chance_level = nearest_mean_transfer_accuracy(synth::generate(collapsed), 4);
  CHECK(chance_level < 0.45);  // 1/K plus sampling slack
}

TEST_CASE("label noise flips an exact count of seed labels") {
  SynthSpec spec;
  spec.num_classes = 4;
  spec.dim = 4;
  spec.labeled_per_class = 2500;  // 10000 labeled overall
  spec.unlabeled_per_class = 5;
  spec.label_noise = 0.1;
  spec.seed = 123;
  auto store = synth::generate(spec);

  long flipped = 0;
  for (const auto& id : store.pool(data::pool::kLabeled)) {
    const auto& inst = store.instance(id);
    CHECK(inst.true_label.has_value());
    CHECK(*inst.true_label >= 0);
    if (*inst.assigned_label != *inst.true_label) {
      ++flipped;
      // a flip always lands on a different class, never out of range
      CHECK(*inst.assigned_label >= 0);
      CHECK(*inst.assigned_label < 4);
    }
    CHECK(inst.provenance == data::Provenance::seed());  // noise hides in plain sight
  }
  CHECK(flipped == 1000);
}

TEST_CASE("pool corruption replaces an exact fraction with class-less samples") {
  SynthSpec spec = small_spec();
  auto pristine = synth::generate(spec);

  auto untouched = pristine;
  synth::corrupt_pool(untouched, spec, 0.0, 55);
  CHECK(untouched == pristine);

  auto quarter = pristine;
  synth::corrupt_pool(quarter, spec, 0.25, 55);
  const auto& pool = quarter.pool(data::pool::kUnlabeled);
  CHECK(pool == pristine.pool(data::pool::kUnlabeled));  // ids keep their place
  long unattributable = 0;
  for (const auto& id : pool) {
    const auto& inst = quarter.instance(id);
    CHECK(inst.features.size() == 5);
    if (*inst.true_label == data::kUnattributable)
      ++unattributable;
    else
      CHECK(inst.features == pristine.instance(id).features);
  }
  CHECK(unattributable == 10);  // exactly a quarter of 40
  // the labeled pool is never corrupted
  for (const auto& id : quarter.pool(data::pool::kLabeled))
    CHECK(quarter.instance(id) == pristine.instance(id));

  auto total = pristine;
  synth::corrupt_pool(total, spec, 1.0, 55);
  for (const auto& id : total.pool(data::pool::kUnlabeled))
    CHECK(*total.instance(id).true_label == data::kUnattributable);
}

TEST_CASE("spec validation rejects impossible corpora") {
  SynthSpec spec = small_spec();
  spec.dim = 3;  // fewer axes than classes
  try {
    synth::generate(spec);
    FAIL("expected DimensionTooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionTooSmall);
  }

  spec = small_spec();
  spec.label_noise = 1.0;
  CHECK_THROWS_AS(synth::generate(spec), Error);
  spec = small_spec();
  spec.separation = -1.0;
  CHECK_THROWS_AS(synth::generate(spec), Error);
  spec = small_spec();
  spec.num_classes = 1;
  CHECK_THROWS_AS(synth::generate(spec), Error);

  auto store = synth::generate(small_spec());
  CHECK_THROWS_AS(synth::corrupt_pool(store, small_spec(), -0.1, 1), Error);
  CHECK_THROWS_AS(synth::corrupt_pool(store, small_spec(), 1.5, 1), Error);
}

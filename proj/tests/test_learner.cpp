#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "conlabel/learner.hpp"

using namespace conlabel;
using learner::LearnerConfig;
using learner::SoftmaxRegression;

namespace {

Examples make_blobs(int classes, size_t dim, int per_class, double separation, uint64_t seed) {
  Examples ex;
  ex.x = Matrix(static_cast<size_t>(classes * per_class), dim);
  ex.y.resize(static_cast<size_t>(classes * per_class));
  Rng rng(seed);
  size_t row = 0;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i, ++row) {
      for (size_t d = 0; d < dim; ++d)
        ex.x[row][d] = (d == static_cast<size_t>(c) ? separation : 0.0) + rng.next_gaussian();
      ex.y[row] = c;
    }
  return ex;
}

double nearest_mean_accuracy(const Examples& train, const Examples& test, int classes) {
  size_t dim = train.dim();
  Matrix means(static_cast<size_t>(classes), dim);
  std::vector<long> counts(static_cast<size_t>(classes), 0);
  for (size_t i = 0; i < train.size(); ++i) {
    auto c = static_cast<size_t>(train.y[i]);
    counts[c] += 1;
    for (size_t d = 0; d < dim; ++d) means[c][d] += train.x[i][d];
  }
  for (int c = 0; c < classes; ++c)
    for (size_t d = 0; d < dim; ++d) means[static_cast<size_t>(c)][d] /= static_cast<double>(counts[static_cast<size_t>(c)]);
  size_t correct = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int c = 0; c < classes; ++c) {
      double d2 = 0.0;
      for (size_t d = 0; d < dim; ++d) {
        double diff = test.x[i][d] - means[static_cast<size_t>(c)][d];
        d2 += diff * diff;
      }
      if (d2 < best_d2) {
        best_d2 = d2;
        best = c;
      }
    }
    if (best == test.y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

double batch_loss(std::span<const double> theta, const Examples& ex,
                  std::span<const size_t> batch, size_t dim, int classes) {
  double total = 0.0;
  for (size_t idx : batch) {
    std::vector<double> z = learner::detail::logits(theta, ex.x.row(idx), dim, classes);
    learner::softmax_in_place(z);
    total += learner::cross_entropy_loss(z, ex.y[idx]);
  }
  return total / static_cast<double>(batch.size());
}

// numeric-vs-analytic comparison: absolute for small entries, relative above 1
double max_gradient_error(std::vector<double> theta, const Examples& ex, size_t dim, int classes) {
  std::vector<size_t> batch(ex.size());
  std::iota(batch.begin(), batch.end(), 0);
  std::vector<double> analytic =
      learner::gradient_of_batch(theta, ex, batch, dim, classes);
  const double h = 1e-5;
  double worst = 0.0;
  for (size_t i = 0; i < theta.size(); ++i) {
    double saved = theta[i];
    theta[i] = saved + h;
    double up = batch_loss(theta, ex, batch, dim, classes);
    theta[i] = saved - h;
    double down = batch_loss(theta, ex, batch, dim, classes);
    theta[i] = saved;
    double numeric = (up - down) / (2.0 * h);
    double err = std::abs(numeric - analytic[i]) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace

TEST_CASE("cross entropy of pinned distributions") {
  std::vector<double> uniform4{0.25, 0.25, 0.25, 0.25};
  CHECK(learner::cross_entropy_loss(uniform4, 2) ==
        Catch::Approx(std::log(4.0)).epsilon(1e-12));
  std::vector<double> skewed{0.2, 0.8};
  CHECK(learner::cross_entropy_loss(skewed, 0) ==
        Catch::Approx(1.6094379124341003).epsilon(1e-12));
  // the floor keeps a zero-probability target finite
  std::vector<double> confident{1.0, 0.0};
  CHECK(learner::cross_entropy_loss(confident, 1) ==
        Catch::Approx(-std::log(1e-12)).epsilon(1e-12));
}

TEST_CASE("cross entropy rejects malformed inputs") {
  std::vector<double> not_normalized{0.5, 0.6};
  try {
    learner::cross_entropy_loss(not_normalized, 0);
    FAIL("expected BadDistribution");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadDistribution);
  }
  std::vector<double> fine{0.5, 0.5};
  CHECK_THROWS_AS(learner::cross_entropy_loss(fine, 2), Error);
  CHECK_THROWS_AS(learner::cross_entropy_loss(fine, -1), Error);
}

TEST_CASE("adamax first step matches the closed form") {
  LearnerConfig cfg;
  std::vector<double> theta{0.0};
  std::vector<double> grad{1.0};
  learner::AdamaxState state(1);
  learner::adamax_step(theta, grad, state, cfg, /*epoch=*/0);
  // m=0.1, u=1, scale=0.001/0.1 -> delta = -0.001/(1+1e-8)
  double expected = -0.001 / (1.0 + 1e-8);
  CHECK(std::abs(theta[0] - expected) < 1e-9);
  CHECK(state.t == 1);

  // learning-rate decay divides alpha by (1 + decay*epoch)
  std::vector<double> theta2{0.0};
  learner::AdamaxState state2(1);
  learner::adamax_step(theta2, grad, state2, cfg, /*epoch=*/3);
  CHECK(std::abs(theta2[0] - expected / (1.0 + 0.003)) < 1e-9);
}

TEST_CASE("adamax ignores a zero gradient and opposes the gradient sign") {
  LearnerConfig cfg;
  std::vector<double> theta{0.4, -0.2, 1.5};
  std::vector<double> before = theta;
  std::vector<double> zeros(3, 0.0);
  learner::AdamaxState state(3);
  learner::adamax_step(theta, zeros, state, cfg, 0);
  CHECK(theta == before);

  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> params{rng.next_gaussian()};
    std::vector<double> grad{rng.next_gaussian()};
    if (grad[0] == 0.0) continue;
    double start = params[0];
    learner::AdamaxState fresh(1);
    learner::adamax_step(params, grad, fresh, cfg, 0);
    CHECK((params[0] - start) * grad[0] < 0.0);
  }
}

TEST_CASE("adamax rejects mismatched shapes") {
  LearnerConfig cfg;
  std::vector<double> theta{0.0, 0.0};
  std::vector<double> grad{1.0};
  learner::AdamaxState state(2);
  CHECK_THROWS_AS(learner::adamax_step(theta, grad, state, cfg, 0), Error);
}

TEST_CASE("analytic gradient agrees with central differences on a pinned case") {
  Examples ex;
  ex.x = Matrix(4, 2);
  double values[4][2] = {{0.5, -1.2}, {2.0, 0.3}, {-0.7, 0.9}, {1.1, 1.4}};
  for (size_t i = 0; i < 4; ++i)
    for (size_t d = 0; d < 2; ++d) ex.x[i][d] = values[i][d];
  ex.y = {0, 1, 2, 1};
  std::vector<double> theta{0.1, -0.2, 0.3, 0.05, -0.4, 0.25, 0.0, 0.1, -0.1};
  CHECK(max_gradient_error(theta, ex, 2, 3) < 1e-5);
}

TEST_CASE("analytic gradient agrees with central differences on random draws") {
  Rng rng(2024);
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    size_t dim = 1 + rng.uniform_index(6);
    int classes = 2 + static_cast<int>(rng.uniform_index(4));
    size_t n = 1 + rng.uniform_index(8);
    Examples ex;
    ex.x = Matrix(n, dim);
    ex.y.resize(n);
    for (size_t i = 0; i < n; ++i) {
      for (size_t d = 0; d < dim; ++d) ex.x[i][d] = rng.next_gaussian();
      ex.y[i] = static_cast<int>(rng.uniform_index(static_cast<size_t>(classes)));
    }
    std::vector<double> theta(dim * static_cast<size_t>(classes) + static_cast<size_t>(classes));
    for (double& v : theta) v = 0.5 * rng.next_gaussian();
    worst = std::max(worst, max_gradient_error(theta, ex, dim, classes));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("flat parameter layout is [W row-per-class, then biases]") {
  SoftmaxRegression model = SoftmaxRegression::from_snapshot(
      {{"kind", "softmax-regression"},
       {"dim", 2},
       {"classes", 2},
       {"theta", std::vector<double>{1.0, 0.0, 0.0, 1.0, 0.5, -0.5}}});
  Matrix x(1, 2);
  x[0][0] = 2.0;
  x[0][1] = 3.0;
  Matrix probs = model.predict(x);
  // z0 = 2 + 0.5 = 2.5 and z1 = 3 - 0.5 = 2.5: a tie
  CHECK(probs[0][0] == 0.5);
  CHECK(probs[0][1] == 0.5);

  x[0][0] = 1.0;
  x[0][1] = 0.0;
  probs = model.predict(x);  // z = (1.5, -0.5)
  CHECK(probs[0][0] == Catch::Approx(std::exp(1.5) / (std::exp(1.5) + std::exp(-0.5))).epsilon(1e-12));
}

TEST_CASE("zero epochs keeps the zero-initialized model with uniform output") {
  SoftmaxRegression model(3, 4);
  Examples train = make_blobs(4, 3, 5, 3.0, 11);
  Examples val = make_blobs(4, 3, 3, 3.0, 12);
  LearnerConfig cfg;
  auto result = model.fit(train, val, 0, cfg);
  CHECK(result.best_epoch == 0);
  CHECK(result.trace.empty());
  Matrix probs = model.predict(val.x);
  for (size_t i = 0; i < probs.rows; ++i)
    for (int k = 0; k < 4; ++k) CHECK(probs[i][static_cast<size_t>(k)] == 0.25);
  // uniform probabilities argmax to class 0, so val accuracy is the class-0 share
  double class0 = static_cast<double>(std::count(val.y.begin(), val.y.end(), 0)) /
                  static_cast<double>(val.size());
  CHECK(result.best_val_accuracy == Catch::Approx(class0));
}

TEST_CASE("training separates gaussian blobs") {
  const int classes = 3;
  Examples train = make_blobs(classes, 4, 30, 4.0, 101);
  Examples val = make_blobs(classes, 4, 10, 4.0, 202);
  Examples test = make_blobs(classes, 4, 12, 4.0, 303);
  // the data itself must be separable before we ask the model to separate it
  REQUIRE(nearest_mean_accuracy(train, test, classes) >= 0.95);

  SoftmaxRegression model(4, classes);
  LearnerConfig cfg;
  cfg.seed = 7;
  auto result = model.fit(train, val, 60, cfg);
  CHECK(result.trace.size() == 60);
  CHECK(result.best_epoch >= 1);
  CHECK(learner::accuracy_of(model, test) >= 0.95);
}

TEST_CASE("fit is deterministic for a fixed seed") {
  Examples train = make_blobs(3, 4, 20, 3.0, 55);
  Examples val = make_blobs(3, 4, 8, 3.0, 56);
  LearnerConfig cfg;
  cfg.seed = 31;
  SoftmaxRegression a(4, 3), b(4, 3);
  auto ra = a.fit(train, val, 25, cfg);
  auto rb = b.fit(train, val, 25, cfg);
  CHECK(ra.best_epoch == rb.best_epoch);
  CHECK(std::vector<double>(a.parameters().begin(), a.parameters().end()) ==
        std::vector<double>(b.parameters().begin(), b.parameters().end()));
}

TEST_CASE("checkpoint keeps the earliest epoch of a validation plateau") {
  Examples train = make_blobs(2, 3, 25, 6.0, 77);
  Examples val = make_blobs(2, 3, 10, 6.0, 78);
  SoftmaxRegression model(3, 2);
  LearnerConfig cfg;
  cfg.seed = 5;
  auto result = model.fit(train, val, 40, cfg);
  double best = 0.0;
  for (const auto& stats : result.trace) best = std::max(best, stats.val_accuracy);
  int first_best = 0;
  for (const auto& stats : result.trace)
    if (stats.val_accuracy == best) {
      first_best = stats.epoch;
      break;
    }
  CHECK(result.best_val_accuracy == best);
  CHECK(result.best_epoch == first_best);
  REQUIRE(result.best_epoch < 40);  // the plateau must actually exist for this to bite
}

TEST_CASE("epoch trace is 1-based and consecutive") {
  Examples train = make_blobs(2, 2, 6, 3.0, 9);
  Examples val = make_blobs(2, 2, 4, 3.0, 10);
  SoftmaxRegression model(2, 2);
  auto result = model.fit(train, val, 5, LearnerConfig{});
  REQUIRE(result.trace.size() == 5);
  for (int e = 0; e < 5; ++e) CHECK(result.trace[static_cast<size_t>(e)].epoch == e + 1);
}

TEST_CASE("predict emits probability rows") {
  Examples train = make_blobs(3, 4, 15, 2.0, 13);
  Examples val = make_blobs(3, 4, 5, 2.0, 14);
  SoftmaxRegression model(4, 3);
  model.fit(train, val, 10, LearnerConfig{});
  Matrix probs = model.predict(val.x);
  REQUIRE(probs.rows == val.size());
  REQUIRE(probs.cols == 3);
  for (size_t i = 0; i < probs.rows; ++i) CHECK(is_probability_vector(probs.row(i)));
}

TEST_CASE("fit and predict reject malformed inputs") {
  SoftmaxRegression model(3, 3);
  Examples empty;
  empty.x = Matrix(0, 3);
  Examples val = make_blobs(3, 3, 2, 3.0, 1);
  try {
    model.fit(empty, val, 5, LearnerConfig{});
    FAIL("expected EmptyTrainingSet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyTrainingSet);
  }

  Examples bad_label = make_blobs(3, 3, 2, 3.0, 2);
  bad_label.y[0] = 7;
  try {
    model.fit(bad_label, val, 5, LearnerConfig{});
    FAIL("expected LabelOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LabelOutOfRange);
  }

  Examples wrong_dim = make_blobs(3, 4, 2, 3.0, 3);
  try {
    model.fit(wrong_dim, val, 5, LearnerConfig{});
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
  CHECK_THROWS_AS(model.predict(Matrix(2, 5)), Error);

  LearnerConfig bad_cfg;
  bad_cfg.learning_rate = 0.0;
  Examples train = make_blobs(3, 3, 2, 3.0, 4);
  CHECK_THROWS_AS(model.fit(train, val, 5, bad_cfg), Error);
}

TEST_CASE("snapshots round trip through json and disk") {
  Examples train = make_blobs(3, 4, 20, 3.0, 21);
  Examples val = make_blobs(3, 4, 5, 3.0, 22);
  SoftmaxRegression model(4, 3);
  LearnerConfig cfg;
  cfg.seed = 77;
  model.fit(train, val, 15, cfg);

  SoftmaxRegression copy = SoftmaxRegression::from_snapshot(model.snapshot());
  CHECK(std::vector<double>(copy.parameters().begin(), copy.parameters().end()) ==
        std::vector<double>(model.parameters().begin(), model.parameters().end()));
  CHECK(copy.predict(val.x) == model.predict(val.x));

  auto path = (std::filesystem::temp_directory_path() / "conlabel_model_test.json").string();
  model.save_snapshot(path);
  SoftmaxRegression loaded = SoftmaxRegression::load_snapshot(path);
  CHECK(loaded.predict(val.x) == model.predict(val.x));

  CHECK_THROWS_AS(SoftmaxRegression::from_snapshot({{"kind", "other"}}), Error);
  CHECK_THROWS_AS(SoftmaxRegression::from_snapshot({{"kind", "softmax-regression"},
                                                    {"dim", 2},
                                                    {"classes", 2},
                                                    {"theta", std::vector<double>{1.0}}}),
                  Error);
}

TEST_CASE("jitter augmentation") {
  Matrix x(50, 3);
  Rng rng(8);
  for (double& v : x.data) v = rng.next_gaussian();

  CHECK(learner::augment_jitter(x, 0.0, 123) == x);

  Matrix a = learner::augment_jitter(x, 0.5, 123);
  Matrix b = learner::augment_jitter(x, 0.5, 123);
  CHECK(a == b);
  CHECK(a != x);
  Matrix c = learner::augment_jitter(x, 0.5, 124);
  CHECK(!(a == c));

  // statistics of the added noise
  Matrix zeros(1000, 4);
  Matrix noisy = learner::augment_jitter(zeros, 0.5, 31);
  double sum = 0.0, sq = 0.0;
  for (double v : noisy.data) {
    sum += v;
    sq += v * v;
  }
  double n = static_cast<double>(noisy.data.size());
  double mean = sum / n;
  double stddev = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean) < 0.05);
  CHECK(stddev == Catch::Approx(0.5).margin(0.05));
}

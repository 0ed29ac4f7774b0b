#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conlabel/common.hpp"

// Multinomial logistic regression trained with mini-batch adamax and
// cross-entropy, plus the classifier interface the SSL loop works against.

namespace conlabel::learner {

using json = nlohmann::ordered_json;

struct LearnerConfig {
  double learning_rate = 0.001;
  double decay = 0.001;  // per-epoch learning-rate decay
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch_size = 40;
  double epsilon = 1e-8;
  uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0)) fail(ErrorCode::ConfigError, "learning_rate must be > 0");
    if (!(beta1 >= 0 && beta1 < 1)) fail(ErrorCode::ConfigError, "beta1 must be in [0,1)");
    if (!(beta2 >= 0 && beta2 < 1)) fail(ErrorCode::ConfigError, "beta2 must be in [0,1)");
    if (batch_size < 1) fail(ErrorCode::ConfigError, "batch_size must be >= 1");
    if (!(epsilon > 0)) fail(ErrorCode::ConfigError, "epsilon must be > 0");
    if (!(decay >= 0)) fail(ErrorCode::ConfigError, "decay must be >= 0");
  }
};

inline void softmax_in_place(std::span<double> z) {
  double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

inline double cross_entropy_loss(std::span<const double> probs, int target) {
  if (target < 0 || static_cast<size_t>(target) >= probs.size())
    fail(ErrorCode::BadDistribution, "target class " + std::to_string(target) + " out of range");
  if (!is_probability_vector(probs))
    fail(ErrorCode::BadDistribution, "probabilities do not form a distribution");
  constexpr double kFloor = 1e-12;
  return -std::log(std::max(probs[static_cast<size_t>(target)], kFloor));
}

// --- adamax ---

struct AdamaxState {
  std::vector<double> m;  // first moment
  std::vector<double> u;  // infinity norm
  long t = 0;

  explicit AdamaxState(size_t n) : m(n, 0.0), u(n, 0.0) {}
};

// m <- b1*m + (1-b1)*g ; u <- max(b2*u, |g|) ;
// theta <- theta - (alpha_t / (1 - b1^t)) * m / (u + eps),
// with alpha_t = alpha / (1 + decay*epoch).
inline void adamax_step(std::span<double> params, std::span<const double> grads,
                        AdamaxState& state, const LearnerConfig& cfg, int epoch) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.u.size())
    fail(ErrorCode::ShapeMismatch, "params/grads/state sizes disagree");
  state.t += 1;
  double alpha_t = cfg.learning_rate / (1.0 + cfg.decay * static_cast<double>(epoch));
  double correction = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double scale = alpha_t / correction;
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.u[i] = std::max(cfg.beta2 * state.u[i], std::abs(grads[i]));
    params[i] -= scale * state.m[i] / (state.u[i] + cfg.epsilon);
  }
}

// --- softmax-regression internals on a flat parameter vector [W (K*d), b (K)] ---

namespace detail {

inline std::vector<double> logits(std::span<const double> theta, std::span<const double> x,
                                  size_t dim, int classes) {
  std::vector<double> z(static_cast<size_t>(classes));
  const double* bias = theta.data() + static_cast<size_t>(classes) * dim;
  for (int k = 0; k < classes; ++k) {
    const double* w = theta.data() + static_cast<size_t>(k) * dim;
    double acc = bias[k];
    for (size_t j = 0; j < dim; ++j) acc += w[j] * x[j];
    z[static_cast<size_t>(k)] = acc;
  }
  return z;
}

}  // namespace detail

// Mean (softmax(logits) - one_hot) x^T over the batch for W, mean residual for b.
inline std::vector<double> gradient_of_batch(std::span<const double> theta, const Examples& ex,
                                             std::span<const size_t> batch, size_t dim,
                                             int classes) {
  if (batch.empty()) fail(ErrorCode::EmptyTrainingSet, "gradient of an empty batch");
  std::vector<double> grad(theta.size(), 0.0);
  double* gw = grad.data();
  double* gb = grad.data() + static_cast<size_t>(classes) * dim;
  for (size_t idx : batch) {
    std::vector<double> p = detail::logits(theta, ex.x.row(idx), dim, classes);
    softmax_in_place(p);
    p[static_cast<size_t>(ex.y[idx])] -= 1.0;
    const double* x = ex.x[idx];
    for (int k = 0; k < classes; ++k) {
      double pk = p[static_cast<size_t>(k)];
      double* wrow = gw + static_cast<size_t>(k) * dim;
      for (size_t j = 0; j < dim; ++j) wrow[j] += pk * x[j];
      gb[k] += pk;
    }
  }
  double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= inv;
  return grad;
}

inline Matrix augment_jitter(const Matrix& x, double sigma, uint64_t seed) {
  Matrix out = x;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (double& v : out.data) v += sigma * rng.next_gaussian();
  return out;
}

// --- classifier interface ---

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct FitResult {
  int best_epoch = 0;  // 0 means the untrained initial model
  double best_val_accuracy = 0.0;
  std::vector<EpochStats> trace;
};

// fit() replaces any previous model state; after it returns the learner holds
// the parameters of the best-validation epoch.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual FitResult fit(const Examples& train, const Examples& val, int epochs,
                        const LearnerConfig& cfg) = 0;
  virtual Matrix predict_proba(const Matrix& x) = 0;
  virtual size_t feature_dim() const = 0;
  virtual int num_classes() const = 0;
};

inline double accuracy_of(Learner& model, const Examples& ex) {
  if (ex.size() == 0) return 0.0;
  Matrix probs = model.predict_proba(ex.x);
  size_t correct = 0;
  for (size_t i = 0; i < ex.size(); ++i)
    if (argmax(probs.row(i)) == ex.y[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(ex.size());
}

class SoftmaxRegression : public Learner {
 public:
  SoftmaxRegression(size_t dim, int classes)
      : dim_(dim), classes_(classes),
        theta_(dim * static_cast<size_t>(classes) + static_cast<size_t>(classes), 0.0) {
    if (classes < 2) fail(ErrorCode::ConfigError, "need at least 2 classes");
  }

  size_t feature_dim() const override { return dim_; }
  int num_classes() const override { return classes_; }
  std::span<const double> parameters() const { return theta_; }

  FitResult fit(const Examples& train, const Examples& val, int epochs,
                const LearnerConfig& cfg) override {
    cfg.validate();
    if (train.size() == 0) fail(ErrorCode::EmptyTrainingSet, "fit on an empty training set");
    check_examples(train, "train");
    check_examples(val, "val");

    std::fill(theta_.begin(), theta_.end(), 0.0);
    AdamaxState state(theta_.size());
    Rng rng(cfg.seed);

    FitResult result;
    result.best_epoch = 0;
    std::vector<double> best_theta = theta_;
    if (epochs == 0) {
      result.best_val_accuracy = val_accuracy(val);
      return result;
    }
    result.best_val_accuracy = -1.0;

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < epochs; ++epoch) {
      rng.shuffle(order);
      size_t batch = static_cast<size_t>(cfg.batch_size);
      for (size_t start = 0; start < order.size(); start += batch) {
        size_t len = std::min(batch, order.size() - start);
        std::span<const size_t> chunk(order.data() + start, len);
        std::vector<double> grad = gradient_of_batch(theta_, train, chunk, dim_, classes_);
        adamax_step(theta_, grad, state, cfg, epoch);
      }
      EpochStats stats;
      stats.epoch = epoch + 1;
      stats.train_loss = mean_loss(train);
      stats.val_accuracy = val_accuracy(val);
      result.trace.push_back(stats);
      if (stats.val_accuracy > result.best_val_accuracy) {
        result.best_val_accuracy = stats.val_accuracy;
        result.best_epoch = stats.epoch;
        best_theta = theta_;
      }
    }
    theta_ = std::move(best_theta);
    return result;
  }

  Matrix predict_proba(const Matrix& x) override { return predict(x); }

  Matrix predict(const Matrix& x) const {
    if (x.cols != dim_)
      fail(ErrorCode::DimensionMismatch, "input dimension " + std::to_string(x.cols) +
                                             ", model dimension " + std::to_string(dim_));
    Matrix probs(x.rows, static_cast<size_t>(classes_));
    for (size_t i = 0; i < x.rows; ++i) {
      std::vector<double> z = detail::logits(theta_, x.row(i), dim_, classes_);
      softmax_in_place(z);
      std::copy(z.begin(), z.end(), probs.row(i).begin());
    }
    return probs;
  }

  json snapshot() const {
    json j;
    j["kind"] = "softmax-regression";
    j["dim"] = dim_;
    j["classes"] = classes_;
    j["theta"] = theta_;
    return j;
  }

  static SoftmaxRegression from_snapshot(const json& j) {
    if (j.value("kind", "") != std::string("softmax-regression"))
      fail(ErrorCode::ParseError, "snapshot is not a softmax-regression model");
    SoftmaxRegression model(j.at("dim").get<size_t>(), j.at("classes").get<int>());
    model.theta_ = j.at("theta").get<std::vector<double>>();
    if (model.theta_.size() != model.dim_ * static_cast<size_t>(model.classes_) +
                                   static_cast<size_t>(model.classes_))
      fail(ErrorCode::ParseError, "snapshot parameter count does not match dim/classes");
    return model;
  }

  void save_snapshot(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write model snapshot '" + path + "'");
    out << snapshot().dump(2) << "\n";
  }

  static SoftmaxRegression load_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open model snapshot '" + path + "'");
    json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, std::string("model snapshot: ") + e.what());
    }
    return from_snapshot(j);
  }

 private:
  void check_examples(const Examples& ex, const char* what) const {
    if (ex.size() == 0) return;
    if (ex.dim() != dim_)
      fail(ErrorCode::DimensionMismatch, std::string(what) + " dimension " +
                                             std::to_string(ex.dim()) + ", model dimension " +
                                             std::to_string(dim_));
    for (int label : ex.y)
      if (label < 0 || label >= classes_)
        fail(ErrorCode::LabelOutOfRange,
             std::string(what) + " label " + std::to_string(label) + " outside 0.." +
                 std::to_string(classes_ - 1));
  }

  double mean_loss(const Examples& ex) const {
    double total = 0.0;
    for (size_t i = 0; i < ex.size(); ++i) {
      std::vector<double> z = detail::logits(theta_, ex.x.row(i), dim_, classes_);
      softmax_in_place(z);
      constexpr double kFloor = 1e-12;
      total += -std::log(std::max(z[static_cast<size_t>(ex.y[i])], kFloor));
    }
    return total / static_cast<double>(ex.size());
  }

  double val_accuracy(const Examples& val) const {
    if (val.size() == 0) return 0.0;
    size_t correct = 0;
    for (size_t i = 0; i < val.size(); ++i) {
      std::vector<double> z = detail::logits(theta_, val.x.row(i), dim_, classes_);
      if (argmax(z) == val.y[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(val.size());
  }

  size_t dim_;
  int classes_;
  std::vector<double> theta_;
};

}  // namespace conlabel::learner

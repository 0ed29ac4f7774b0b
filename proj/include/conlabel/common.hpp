#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace conlabel {

enum class ErrorCode {
  EmptyImage,
  DuplicateId,
  UnsupportedImage,
  InsufficientClassMembers,
  UnbalancedRequest,
  MissingOracleLabel,
  ParseError,
  DimensionMismatch,
  BadDistribution,
  ShapeMismatch,
  EmptyTrainingSet,
  LabelOutOfRange,
  EmptyTestSet,
  DegenerateTruth,
  EmptySet,
  DimensionTooSmall,
  ExternalLearnerFailure,
  ProtocolError,
  ConfigError,
  IoError,
  InternalError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::EmptyImage: return "EmptyImage";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnsupportedImage: return "UnsupportedImage";
    case ErrorCode::InsufficientClassMembers: return "InsufficientClassMembers";
    case ErrorCode::UnbalancedRequest: return "UnbalancedRequest";
    case ErrorCode::MissingOracleLabel: return "MissingOracleLabel";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadDistribution: return "BadDistribution";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::DegenerateTruth: return "DegenerateTruth";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::DimensionTooSmall: return "DimensionTooSmall";
    case ErrorCode::ExternalLearnerFailure: return "ExternalLearnerFailure";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InternalError: return "InternalError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

// --- seeding helpers ---

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) { return mix_seed(mix_seed(a, b), c); }

// Deterministic RNG: mt19937_64 engine (sequence fixed by the standard) with
// hand-rolled distributions, so identical seeds give identical streams on any
// platform. Do not swap in std::uniform_* here: their mappings are
// implementation-defined and would break byte-identical reruns.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // uniform in [0,1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in (0,1]
  double next_double_open() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // unbiased uniform index in [0,n)
  size_t uniform_index(size_t n) {
    if (n == 0) fail(ErrorCode::InternalError, "uniform_index(0)");
    uint64_t limit = UINT64_MAX - (UINT64_MAX % n + 1) % n;
    uint64_t x = next_u64();
    while (x > limit) x = next_u64();
    return static_cast<size_t>(x % n);
  }

  double next_gaussian() {
    double u1 = next_double_open();
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // first k positions of a seeded permutation of 0..n-1
  std::vector<size_t> sample_indices(size_t n, size_t k) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    if (k > n) k = n;
    for (size_t i = 0; i < k; ++i) {
      size_t j = i + uniform_index(n - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  std::mt19937_64 eng_;
};

// --- dense row-major matrix, sized for desk-scale training ---

struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* operator[](size_t r) { return data.data() + r * cols; }
  const double* operator[](size_t r) const { return data.data() + r * cols; }
  std::span<double> row(size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix& o) const = default;
};

// feature rows plus integer class labels
struct Examples {
  Matrix x;
  std::vector<int> y;

  size_t size() const { return x.rows; }
  size_t dim() const { return x.cols; }
};

// lowest index wins ties
inline int argmax(std::span<const double> v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

inline bool is_probability_vector(std::span<const double> v, double tol = 1e-9) {
  double sum = 0.0;
  for (double p : v) {
    if (!(p >= 0.0) || !(p <= 1.0 + tol)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

// --- provenance hashing for output artifacts ---

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string to_hex(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

// percent with one decimal, the precision reports use
inline std::string format_percent(double value) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << value;
  return os.str();
}

inline bool verbose_logging() {
  static const bool on = [] {
    const char* v = std::getenv("CONLABEL_VERBOSE");
    return v != nullptr && v[0] != '\0' && v[0] != '0';
  }();
  return on;
}

}  // namespace conlabel

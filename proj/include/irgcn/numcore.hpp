#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace irgcn {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using Index = Eigen::Index;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string shape_string(Index rows, Index cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

template <typename Derived>
std::string shape_string(const Eigen::DenseBase<Derived>& m) {
  return shape_string(m.rows(), m.cols());
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

/// Checked matrix product. Throws DimensionError naming both shapes
/// instead of tripping an Eigen assertion.
template <typename A, typename B>
MatrixX<typename A::Scalar> matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: shape mismatch " + shape_string(a) + " x " + shape_string(b));
  }
  return a * b;
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

/// Gradient of relu given the cached forward input. The subgradient at
/// exactly zero is zero.
template <typename A, typename B>
MatrixX<typename A::Scalar> relu_backward(const Eigen::MatrixBase<A>& input,
                                          const Eigen::MatrixBase<B>& upstream) {
  if (input.rows() != upstream.rows() || input.cols() != upstream.cols()) {
    throw DimensionError("relu_backward: input " + shape_string(input) + " vs upstream " +
                         shape_string(upstream));
  }
  using Scalar = typename A::Scalar;
  return (input.array() > Scalar(0)).select(upstream, Scalar(0));
}

// Deterministic random stream. Distribution transforms are written out here
// rather than taken from <random>, whose distributions are not specified
// bit-for-bit across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (no cached second variate).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Independent child stream; depends only on (seed, stream), never on how
  /// many draws this stream has made.
  Rng derive(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

template <typename RandomIt>
void shuffle(RandomIt first, RandomIt last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = rng.below(i);
    std::iter_swap(first + (i - 1), first + j);
  }
}

struct AdamParams {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamState(Index rows, Index cols, AdamParams p = {})
      : m(Matrix::Zero(rows, cols)), v(Matrix::Zero(rows, cols)), params(p) {}

  Matrix m;
  Matrix v;
  std::int64_t t = 0;
  AdamParams params;
};

/// One bias-corrected Adam update. Refuses non-finite gradients.
void adam_step(Matrix& param, const Matrix& grad, AdamState& state);

/// Inverted-dropout mask with entries in {0, 1/(1-rate)}.
Matrix dropout_mask(Index rows, Index cols, double rate, Rng& rng);

/// Max relative error between analytic and central-difference gradients,
/// |a - n| / max(|a|, |n|, 1e-8) over all entries.
double finite_diff_check(const std::function<double(const Matrix&)>& loss, const Matrix& param,
                         const Matrix& analytic, double h = 1e-5);

// FNV-1a, used for config and file fingerprints.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace irgcn

#include "irgcn/numcore.hpp"

#include <algorithm>
#include <numbers>

namespace irgcn {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: empty range");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::derive(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

void adam_step(Matrix& param, const Matrix& grad, AdamState& state) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
    throw DimensionError("adam_step: param " + shape_string(param) + " vs grad " +
                         shape_string(grad));
  }
  if (state.m.rows() != param.rows() || state.m.cols() != param.cols()) {
    throw DimensionError("adam_step: state " + shape_string(state.m) + " vs param " +
                         shape_string(param));
  }
  if (!all_finite(grad)) throw NumericError("adam_step: non-finite gradient, update refused");

  const auto& p = state.params;
  state.t += 1;
  state.m = p.beta1 * state.m + (1.0 - p.beta1) * grad;
  state.v = p.beta2 * state.v + (1.0 - p.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.t));
  param.array() -= p.lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + p.eps);
}

Matrix dropout_mask(Index rows, Index cols, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  Matrix mask(rows, cols);
  if (rate == 0.0) {
    mask.setOnes();
    return mask;
  }
  const double keep = 1.0 / (1.0 - rate);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? 0.0 : keep;
  return mask;
}

double finite_diff_check(const std::function<double(const Matrix&)>& loss, const Matrix& param,
                         const Matrix& analytic, double h) {
  if (param.rows() != analytic.rows() || param.cols() != analytic.cols()) {
    throw DimensionError("finite_diff_check: param " + shape_string(param) + " vs gradient " +
                         shape_string(analytic));
  }
  Matrix probe = param;
  double worst = 0.0;
  for (Index i = 0; i < probe.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = loss(probe);
    probe.data()[i] = orig - h;
    const double down = loss(probe);
    probe.data()[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.data()[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace irgcn

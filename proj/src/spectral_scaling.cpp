#include "blockshampoo/spectral_scaling.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "blockshampoo/errors.hpp"

namespace blockshampoo {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kRetrySalt = 0xD1B54A32D192ED03ULL;

Matrix starting_vectors(std::size_t n, std::size_t pool, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix x(n, pool);
  for (std::size_t j = 0; j < pool; ++j) {
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x(i, j) = dist(rng);
      norm += x(i, j) * x(i, j);
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      x(0, j) = 1.0;
      norm = 1.0;
    }
    for (std::size_t i = 0; i < n; ++i) x(i, j) /= norm;
  }
  return x;
}

std::vector<double> column(const Matrix& x, std::size_t j) {
  std::vector<double> v(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) v[i] = x(i, j);
  return v;
}

SpectralEstimate run_pool(const Matrix& a, std::size_t pool, std::size_t iters, std::uint64_t seed) {
  const std::size_t n = a.rows();
  Matrix x = starting_vectors(n, pool, seed);
  for (std::size_t step = 0; step < iters; ++step) {
    const Matrix y = matmul(a, x);
    for (std::size_t j = 0; j < pool; ++j) {
      double norm = 0.0;
      for (std::size_t i = 0; i < n; ++i) norm += y(i, j) * y(i, j);
      norm = std::sqrt(norm);
      // A column mapped to zero stays where it was; its quotient is then 0.
      if (norm == 0.0 || !std::isfinite(norm)) continue;
      for (std::size_t i = 0; i < n; ++i) x(i, j) = y(i, j) / norm;
    }
  }
  SpectralEstimate best;
  best.lambda = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < pool; ++j) {
    std::vector<double> v = column(x, j);
    const double rq = rayleigh_quotient(a, v);
    if (rq > best.lambda) {
      best.lambda = rq;
      best.vector = std::move(v);
    }
  }
  return best;
}

}  // namespace

double rayleigh_quotient(const Matrix& a, std::span<const double> x) {
  if (!a.is_square() || a.rows() != x.size()) throw std::invalid_argument("rayleigh_quotient: size mismatch");
  double xx = 0.0;
  double xax = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx += x[i] * x[i];
    double ax = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) ax += a(i, j) * x[j];
    xax += x[i] * ax;
  }
  if (xx == 0.0) throw std::invalid_argument("rayleigh_quotient: zero vector");
  return xax / xx;
}

SpectralEstimate multi_power_iteration(const Matrix& a, std::size_t pool, std::size_t iters, std::uint64_t seed) {
  if (!a.is_square() || a.rows() == 0) throw std::invalid_argument("multi_power_iteration: need a square matrix");
  if (pool == 0 || iters == 0) throw std::invalid_argument("multi_power_iteration: pool and iters must be >= 1");
  if (max_abs(a) == 0.0) {
    Matrix x = starting_vectors(a.rows(), 1, seed);
    return {0.0, column(x, 0)};
  }
  SpectralEstimate est = run_pool(a, pool, iters, seed);
  if (est.lambda > 0.0) return est;
  est = run_pool(a, pool, iters, seed ^ kRetrySalt);
  if (est.lambda > 0.0) return est;
  throw NumericalError("multi_power_iteration: every starting vector collapsed into the null space");
}

std::uint64_t block_seed(std::uint64_t seed, std::size_t index) noexcept {
  return seed + static_cast<std::uint64_t>(index) * kGolden;
}

std::vector<SpectralEstimate> batched_multi_power_iteration(const BatchedTensor& a, std::size_t pool,
                                                            std::size_t iters, std::uint64_t seed) {
  std::vector<SpectralEstimate> out;
  out.reserve(a.batch());
  for (std::size_t i = 0; i < a.batch(); ++i) {
    out.push_back(multi_power_iteration(a.block(i), pool, iters, block_seed(seed, i)));
  }
  return out;
}

double scale_factor(const Matrix& a, const ScalingMode& mode, std::uint64_t seed) {
  if (max_abs(a) == 0.0) throw std::invalid_argument("scale_factor: zero matrix");
  if (mode.kind == ScalingMode::Kind::Frobenius) return frobenius_norm(a);
  const SpectralEstimate est = multi_power_iteration(a, mode.pool, mode.iters, seed);
  return 2.0 * est.lambda;
}

std::vector<double> batched_scale_factors(const BatchedTensor& a, const ScalingMode& mode, std::uint64_t seed) {
  std::vector<double> out;
  out.reserve(a.batch());
  for (std::size_t i = 0; i < a.batch(); ++i) out.push_back(scale_factor(a.block(i), mode, block_seed(seed, i)));
  return out;
}

}  // namespace blockshampoo

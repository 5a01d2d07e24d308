#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "blockshampoo/matrix.hpp"

namespace blockshampoo {

/// How a preconditioner block is normalized before an iterative solver.
struct ScalingMode {
  enum class Kind { Frobenius, PowerIteration };

  Kind kind = Kind::PowerIteration;
  std::size_t pool = 16;
  std::size_t iters = 30;

  static ScalingMode frobenius() { return {Kind::Frobenius, 0, 0}; }
  static ScalingMode power_iteration(std::size_t pool = 16, std::size_t iters = 30) {
    return {Kind::PowerIteration, pool, iters};
  }
};

/// Largest-eigenpair estimate: `lambda` is the Rayleigh quotient of the unit
/// vector `vector`.
struct SpectralEstimate {
  double lambda = 0.0;
  std::vector<double> vector;
};

/// x^T A x / x^T x. Throws std::invalid_argument for a zero vector.
double rayleigh_quotient(const Matrix& a, std::span<const double> x);

/// Power iteration on `pool` seeded starting vectors at once (one n x pool
/// product per step), returning the candidate with the largest Rayleigh
/// quotient. Start vector j only depends on (seed, j), so a larger pool
/// always contains the smaller pool's candidates.
///
/// A zero matrix yields lambda = 0. A non-zero matrix whose whole pool lands
/// in its null space is retried once with a derived seed before a
/// NumericalError is thrown.
SpectralEstimate multi_power_iteration(const Matrix& a, std::size_t pool, std::size_t iters, std::uint64_t seed);

/// Seed used for block `index` of a batch; block 0 uses `seed` itself.
std::uint64_t block_seed(std::uint64_t seed, std::size_t index) noexcept;

std::vector<SpectralEstimate> batched_multi_power_iteration(const BatchedTensor& a, std::size_t pool,
                                                            std::size_t iters, std::uint64_t seed);

/// ||A||_F for Frobenius mode, 2 * lambda_PI for PowerIteration mode.
/// Throws std::invalid_argument for a zero matrix.
double scale_factor(const Matrix& a, const ScalingMode& mode, std::uint64_t seed);

std::vector<double> batched_scale_factors(const BatchedTensor& a, const ScalingMode& mode, std::uint64_t seed);

}  // namespace blockshampoo

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "blockshampoo/chebyshev.hpp"
#include "blockshampoo/eigensolver.hpp"
#include "blockshampoo/iterative_roots.hpp"
#include "blockshampoo/matrix.hpp"
#include "blockshampoo/spectral_scaling.hpp"

namespace blockshampoo {

enum class RootMethod { Evd, CoupledNewton, NewtonDB, Chebyshev };

const char* to_string(RootMethod method) noexcept;
/// Accepts the CLI spellings evd, cn, ndb, cbshv.
RootMethod parse_root_method(std::string_view name);

struct SolverConfig {
  RootMethod method = RootMethod::Evd;
  ScalingMode scaling = ScalingMode::power_iteration();
  double tolerance = 1e-10;
  std::size_t max_iters = 100;
  std::optional<std::size_t> fixed_iters;
  Precision precision = Precision::Full64;
  /// EVD only.
  Dampening dampening = Dampening::CorrectedAbs;

  std::size_t cheb_degree = 60;
  std::size_t cheb_points = 1000;
  double cheb_lower = 1e-10;
  double cheb_upper = 1.0 + 1e-10;
  bool cheb_optimized = true;
  /// Pre-fitted coefficients (e.g. loaded from a cache file). A fit whose
  /// root order matches the request is used instead of fitting anew.
  std::vector<ChebCoefficients> cheb_fits;
};

struct BatchedRoots {
  BatchedTensor roots;
  std::vector<IterationReport> reports;
  /// Per-block scale applied before the iterative solvers (1 for EVD and
  /// for all-zero blocks).
  std::vector<double> scales;
};

/// Inverse p-th root (p in {2, 4}) of every block of A + eps I.
///
/// EVD hands epsilon to the dampening heuristic. The iterative methods add
/// eps I, divide block i by its scale (seeded with block_seed(seed, i)),
/// solve, and multiply by scale^{-1/p}. A block that is exactly zero gets a
/// zero root and a converged report with 0 iterations.
///
/// Per-block solver failures are returned in `reports`, not thrown.
/// Newton-Denman-Beavers only runs in Full64 (std::invalid_argument
/// otherwise).
BatchedRoots batched_inverse_root(const BatchedTensor& blocks, int p, double epsilon, const SolverConfig& cfg,
                                  std::uint64_t seed);

/// Single-matrix form of batched_inverse_root. Throws NumericalError when
/// the solver diverges or produces non-finite values.
Matrix inverse_root(const Matrix& a, int p, double epsilon, const SolverConfig& cfg, std::uint64_t seed,
                    IterationReport* report = nullptr);

/// Fit used by the Chebyshev method for root order p, shared per process.
const ChebCoefficients& chebyshev_fit_for(const SolverConfig& cfg, int p);

/// Index of the first block whose report is Diverged, NonFinite or Degenerate.
std::optional<std::size_t> first_failure(const std::vector<IterationReport>& reports);

}  // namespace blockshampoo

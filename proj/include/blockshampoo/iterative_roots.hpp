#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "blockshampoo/matrix.hpp"

namespace blockshampoo {

/// Degenerate is only produced by the EVD path, when dampening removes the
/// whole spectrum.
enum class IterationStatus { Converged, MaxIterations, Diverged, NonFinite, Degenerate };

const char* to_string(IterationStatus status) noexcept;

/// Early-stop bookkeeping for one solve. `residual` is the method's
/// convergence metric at exit: ||M_k - I||_max for Coupled-Newton,
/// ||E_k - I||_max for Newton-Denman-Beavers.
struct IterationReport {
  std::size_t iterations = 0;
  double residual = 0.0;
  bool converged = false;
  IterationStatus status = IterationStatus::MaxIterations;
};

struct CnConfig {
  int p = 2;
  /// Defaults to (1 + p)^{-1/p}, so eigenvalues must lie in (0, 1).
  std::optional<double> c;
  double tolerance = 1e-10;
  std::size_t max_iters = 100;
  /// Run exactly this many iterations instead of stopping early.
  std::optional<std::size_t> fixed_iters;

  double constant() const;
};

struct NdbConfig {
  double tolerance = 1e-10;
  std::size_t max_iters = 100;
  std::optional<std::size_t> fixed_iters;
};

struct RootResult {
  Matrix root;
  IterationReport report;
};

struct NdbResult {
  Matrix sqrt;
  Matrix inv_sqrt;
  IterationReport report;
};

/// Coupled-Newton iteration for A^{-1/p}, p in {2, 4}:
///   X_0 = I/c, M_0 = A/c^p, C_k = (1 + 1/p) I - M_k/p,
///   X_{k+1} = X_k C_k, M_{k+1} = C_k^p M_k.
/// Three products per iteration for p = 2, four for p = 4.
///
/// The spectrum of `a` must lie in (0, (p+1) c^p); scale first. Throws
/// NumericalError on divergence or non-finite iterates. Hitting the cap is
/// reported, not thrown.
RootResult coupled_newton(const Matrix& a, const CnConfig& cfg, Precision mode = Precision::Full64);

/// Newton-Denman-Beavers iteration for A^{1/2} and A^{-1/2}. The first
/// iteration is taken in closed form (E_1 = 3I/2 - A/2, Y_1 = A E_1,
/// Z_1 = E_1, one product); later iterations cost three products.
/// Requires ||I - A||_2 < 1.
NdbResult newton_db(const Matrix& a, const NdbConfig& cfg);

/// (A^{1/2})^{-1/2} through two Newton-Denman-Beavers solves. The report
/// sums iterations over both calls.
RootResult ndb_inverse_fourth_root(const Matrix& a, const NdbConfig& cfg);

struct BatchedRootResult {
  BatchedTensor root;
  std::vector<IterationReport> reports;
};

struct BatchedNdbResult {
  BatchedTensor sqrt;
  BatchedTensor inv_sqrt;
  std::vector<IterationReport> reports;
};

// Batched variants share one iteration loop across the stack. A block that
// converges, diverges or turns non-finite is frozen, so every block ends
// exactly where its own unbatched solve would. Failures are reported per
// block and never thrown.

BatchedRootResult batched_coupled_newton(const BatchedTensor& a, const CnConfig& cfg,
                                         Precision mode = Precision::Full64);
BatchedNdbResult batched_newton_db(const BatchedTensor& a, const NdbConfig& cfg);
BatchedRootResult batched_ndb_inverse_fourth_root(const BatchedTensor& a, const NdbConfig& cfg);

enum class ScalarMethod { CoupledNewton, NewtonDB };

struct ScalarCount {
  std::size_t iterations = 0;
  bool converged = false;
};

/// Iterations the 1x1 instance of `method` needs until
/// |iterate - x^{-1/p}| <= tolerance * x^{-1/p}. Newton-Denman-Beavers
/// counts its closed-form first step as iteration 1; for p = 4 it chains
/// two solves and reports the sum. Returns {cap, false} if the cap is hit.
ScalarCount scalar_iteration_count(double x, ScalarMethod method, int p = 2, double tolerance = 1e-10,
                                   std::size_t cap = 100);

}  // namespace blockshampoo

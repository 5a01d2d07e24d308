#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "blockshampoo/matrix.hpp"

namespace blockshampoo {

/// Eigenvalues ascending; column i of `eigenvectors` pairs with eigenvalue i.
struct EigenDecomposition {
  std::vector<double> eigenvalues;
  Matrix eigenvectors;
};

struct JacobiOptions {
  std::size_t max_sweeps = 100;
  /// Stop once the off-diagonal Frobenius norm is <= tolerance * ||A||_F.
  double tolerance = 1e-12;
  /// Extra sweeps after the tolerance is met; they tighten the small
  /// eigenpairs of ill-conditioned inputs.
  std::size_t polish_sweeps = 1;
  /// Inputs with ||A - A^T||_F > symmetry_tolerance * ||A||_F are rejected.
  double symmetry_tolerance = 1e-8;
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Throws std::invalid_argument for non-square or non-symmetric input and
/// NumericalError if the sweep cap is reached.
EigenDecomposition eigh(const Matrix& a, const JacobiOptions& options = {});

/// Q * diag(values) * Q^T, exactly symmetric by construction.
Matrix compose_spectral(const Matrix& eigenvectors, std::span<const double> values);

/// Applies f to the spectrum: Q * diag(f(lambda)) * Q^T.
Matrix spectral_function(const EigenDecomposition& evd, const std::function<double(double)>& f);

enum class Dampening {
  /// eigh(A + eps I), then lambda - min(lambda_min, 0) + eps. Adds eps twice
  /// to a non-negative lambda_min.
  DistributedShampooLegacy,
  /// Corrected spectrum lambda - eps, then ReLU(lambda - eps); zeroed
  /// eigenvalues drop out of the inverse (rank r_eps result).
  CorrectedShiftedReLU,
  /// |corrected spectrum| + eps.
  CorrectedAbs,
};

struct DampeningHeuristic {
  Dampening kind = Dampening::CorrectedAbs;
  double epsilon = 1e-10;
};

/// Maps the spectrum of (A + eps I) to the spectrum that gets inverted.
/// Entries equal to 0 mean "excluded from the inverse".
std::vector<double> dampen_spectrum(std::span<const double> regularized, const DampeningHeuristic& heuristic);

/// Q * diag(processed^{-1/p}) * Q^T over the dampened spectrum of A + eps I.
/// Throws NumericalError when the heuristic zeroes every eigenvalue.
Matrix evd_inverse_root(const Matrix& a, int p, const DampeningHeuristic& heuristic);

BatchedTensor batched_evd_inverse_root(const BatchedTensor& a, int p, const DampeningHeuristic& heuristic);

}  // namespace blockshampoo

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "blockshampoo/matrix.hpp"

namespace blockshampoo {

/// Chebyshev series sum_k coeffs[k] T_k(t) fitted on [lower, upper]; inputs
/// are mapped affinely onto t in [-1, 1] before evaluation.
struct ChebCoefficients {
  std::size_t degree = 0;
  std::size_t points = 0;
  double lower = -1.0;
  double upper = 1.0;
  /// Root order for x^{-1/p} fits; 0 for an arbitrary function.
  int p = 0;
  std::vector<double> coeffs;

  /// Affine map of [lower, upper] onto [-1, 1].
  double to_unit(double x) const noexcept { return (2.0 * x - (lower + upper)) / (upper - lower); }
};

/// Discrete cosine fit at N Chebyshev nodes:
///   theta_v = (2v + 1) pi / (2N), x_v = (b - a)/2 cos(theta_v) + (b + a)/2,
///   c_k = 2/N sum_v f(x_v) cos(k theta_v), then c_0 halved.
/// Throws std::invalid_argument if upper <= lower or points < degree + 1.
ChebCoefficients cheb_fit(const std::function<double(double)>& f, std::size_t degree, std::size_t points,
                          double lower, double upper, int p = 0);

/// Fit of x^{-1/p}; additionally requires lower > 0.
ChebCoefficients cheb_fit_inverse_root(int p, std::size_t degree = 60, std::size_t points = 1000,
                                       double lower = 1e-10, double upper = 1.0 + 1e-10);

/// Clenshaw recurrence b_k = 2t b_{k+1} - b_{k+2} + c_k, result b_0 - t b_1.
double clenshaw_scalar(double x, const ChebCoefficients& c);

/// Matrix Clenshaw on S = (2 A/scale - (lower + upper) I) / (upper - lower).
/// The naive form runs the full recurrence (degree + 2 products); the
/// optimized form seeds B_d, B_{d-1} in closed form and folds the last step
/// into S B_1 - B_2 + c_0 I (degree - 1 products).
///
/// The polynomial approximates f(A/scale). For inverse-root fits (p > 0) the
/// result is multiplied by scale^{-1/p} so it approximates A^{-1/p}.
/// Emulated32 rounds the S * B products; the B_k stay double.
/// Throws NumericalError on non-finite output.
Matrix clenshaw_matrix(const Matrix& a, const ChebCoefficients& c, double scale,
                       Precision mode = Precision::Full64, bool optimized = true);

/// Per-block clenshaw_matrix over one shared recurrence, one scale per block.
BatchedTensor batched_clenshaw_matrix(const BatchedTensor& a, const ChebCoefficients& c,
                                      std::span<const double> scales, Precision mode = Precision::Full64,
                                      bool optimized = true);

// Cache file: header line "d N a b p", then d + 1 coefficient lines.
void write_cheb_cache(std::ostream& out, const ChebCoefficients& c);
ChebCoefficients read_cheb_cache(std::istream& in);
void write_cheb_cache_file(const std::filesystem::path& path, const ChebCoefficients& c);
ChebCoefficients read_cheb_cache_file(const std::filesystem::path& path);

}  // namespace blockshampoo

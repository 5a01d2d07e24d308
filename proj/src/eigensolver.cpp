#include "blockshampoo/eigensolver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "blockshampoo/errors.hpp"

namespace blockshampoo {

namespace {

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

void rotate(Matrix& a, Matrix& v, std::size_t p, std::size_t q) {
  const double apq = a(p, q);
  if (apq == 0.0) return;
  const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
  double t = 0.0;
  if (std::abs(theta) > 1e150) {
    t = 0.5 / theta;
  } else {
    t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  }
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;
  const std::size_t n = a.rows();
  for (std::size_t k = 0; k < n; ++k) {
    if (k == p || k == q) continue;
    const double akp = a(k, p);
    const double akq = a(k, q);
    const double new_kp = c * akp - s * akq;
    const double new_kq = s * akp + c * akq;
    a(k, p) = new_kp;
    a(p, k) = new_kp;
    a(k, q) = new_kq;
    a(q, k) = new_kq;
  }
  a(p, p) -= t * apq;
  a(q, q) += t * apq;
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double vkp = v(k, p);
    const double vkq = v(k, q);
    v(k, p) = c * vkp - s * vkq;
    v(k, q) = s * vkp + c * vkq;
  }
}

}  // namespace

EigenDecomposition eigh(const Matrix& input, const JacobiOptions& options) {
  if (!input.is_square()) throw std::invalid_argument("eigh: matrix is not square");
  const double norm = frobenius_norm(input);
  if (asymmetry(input) > options.symmetry_tolerance * norm) {
    throw std::invalid_argument("eigh: matrix is not symmetric within tolerance");
  }
  const std::size_t n = input.rows();
  Matrix a = symmetrize(input);
  Matrix v = Matrix::identity(n);

  bool converged = false;
  for (std::size_t sweep = 0; sweep <= options.max_sweeps; ++sweep) {
    if (off_diagonal_norm(a) <= options.tolerance * norm) {
      converged = true;
      break;
    }
    if (sweep == options.max_sweeps) break;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) rotate(a, v, p, q);
  }
  for (std::size_t extra = 0; converged && extra < options.polish_sweeps; ++extra)
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) rotate(a, v, p, q);
  if (!converged) {
    throw NumericalError("eigh: Jacobi sweeps did not converge within " + std::to_string(options.max_sweeps));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

  EigenDecomposition out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t c = 0; c < n; ++c) {
    out.eigenvalues[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, c) = v(r, order[c]);
  }
  return out;
}

Matrix compose_spectral(const Matrix& q, std::span<const double> values) {
  const std::size_t n = q.rows();
  if (q.cols() != values.size()) throw std::invalid_argument("compose_spectral: size mismatch");
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < values.size(); ++k) {
        if (values[k] != 0.0) s += q(i, k) * values[k] * q(j, k);
      }
      out(i, j) = s;
      out(j, i) = s;
    }
  }
  return out;
}

Matrix spectral_function(const EigenDecomposition& evd, const std::function<double(double)>& f) {
  std::vector<double> mapped(evd.eigenvalues.size());
  std::transform(evd.eigenvalues.begin(), evd.eigenvalues.end(), mapped.begin(), f);
  return compose_spectral(evd.eigenvectors, mapped);
}

std::vector<double> dampen_spectrum(std::span<const double> regularized, const DampeningHeuristic& heuristic) {
  if (!(heuristic.epsilon > 0.0)) throw std::invalid_argument("dampening epsilon must be > 0");
  const double eps = heuristic.epsilon;
  std::vector<double> out(regularized.begin(), regularized.end());
  switch (heuristic.kind) {
    case Dampening::DistributedShampooLegacy: {
      const double lambda_min = out.empty() ? 0.0 : *std::min_element(out.begin(), out.end());
      const double shift = eps - std::min(lambda_min, 0.0);
      for (double& l : out) l += shift;
      break;
    }
    case Dampening::CorrectedShiftedReLU:
      for (double& l : out) l = std::max((l - eps) - eps, 0.0);
      break;
    case Dampening::CorrectedAbs:
      for (double& l : out) l = std::abs(l - eps) + eps;
      break;
  }
  return out;
}

Matrix evd_inverse_root(const Matrix& a, int p, const DampeningHeuristic& heuristic) {
  if (p != 2 && p != 4) throw std::invalid_argument("evd_inverse_root: p must be 2 or 4");
  if (!a.is_square()) throw std::invalid_argument("evd_inverse_root: matrix is not square");
  const EigenDecomposition evd = eigh(add_identity(a, heuristic.epsilon));
  std::vector<double> spectrum = dampen_spectrum(evd.eigenvalues, heuristic);
  bool any = false;
  for (double& l : spectrum) {
    if (l > 0.0) {
      l = std::pow(l, -1.0 / p);
      any = true;
    } else {
      l = 0.0;
    }
  }
  if (!any && !spectrum.empty()) throw NumericalError("evd_inverse_root: dampening zeroed the entire spectrum");
  return compose_spectral(evd.eigenvectors, spectrum);
}

BatchedTensor batched_evd_inverse_root(const BatchedTensor& a, int p, const DampeningHeuristic& heuristic) {
  BatchedTensor out(a.batch(), a.dim());
  for (std::size_t i = 0; i < a.batch(); ++i) out.set_block(i, evd_inverse_root(a.block(i), p, heuristic));
  return out;
}

}  // namespace blockshampoo

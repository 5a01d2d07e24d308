#pragma once

// Shared fixtures for the test binaries. Reference values come from Eigen,
// which has no code in common with the library under test.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "blockshampoo/matrix.hpp"
#include "blockshampoo/shampoo.hpp"

namespace testing_support {

using blockshampoo::Matrix;

inline Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

inline Matrix from_eigen(const Eigen::MatrixXd& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  Matrix out(rows, cols);
  for (double& v : out.data()) v = dist(rng);
  return out;
}

inline Eigen::MatrixXd random_orthogonal(std::size_t n, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(to_eigen(random_matrix(n, n, rng)));
  return qr.householderQ();
}

/// Q diag(values) Q^T with a random orthogonal Q.
inline Matrix with_spectrum(const std::vector<double>& values, std::mt19937_64& rng) {
  const Eigen::MatrixXd q = random_orthogonal(values.size(), rng);
  Eigen::VectorXd d(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) d(i) = values[i];
  Eigen::MatrixXd a = q * d.asDiagonal() * q.transpose();
  a = 0.5 * (a + a.transpose()).eval();
  return from_eigen(a);
}

/// SPD matrix with eigenvalues log-uniform in [top / cond, top]; the extreme
/// values are always present so the condition number is exact.
inline Matrix random_spd(std::size_t n, double cond, std::mt19937_64& rng, double top = 1.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = top * std::pow(cond, -u(rng));
  values[0] = top;
  if (n > 1) values[1] = top / cond;
  return with_spectrum(values, rng);
}

/// SPD matrix whose spectrum is mostly in [top/2, top] plus one eigenvalue
/// at top / cond, so ||A||_F is several times lambda_max for n >= 48.
inline Matrix flat_spd(std::size_t n, double cond, std::mt19937_64& rng, double top = 1.0) {
  std::uniform_real_distribution<double> u(0.5, 1.0);
  std::vector<double> values(n);
  for (double& v : values) v = top * u(rng);
  values[0] = top;
  values[1] = top / cond;
  return with_spectrum(values, rng);
}

/// A^{-1/p} (or any spectral power) through Eigen's symmetric solver.
inline Matrix oracle_power(const Matrix& a, double exponent) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(a));
  const Eigen::VectorXd d = es.eigenvalues().array().pow(exponent);
  return from_eigen(es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose());
}

inline std::vector<double> oracle_eigenvalues(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(a), Eigen::EigenvaluesOnly);
  return {es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size()};
}

inline double relative_error(const Matrix& got, const Matrix& want) {
  return blockshampoo::frobenius_distance(got, want) / blockshampoo::frobenius_norm(want);
}

/// First step of a single-layer, single-block optimizer from a zero state,
/// written out from the formulas with Eigen (EVD roots, Adam grafting).
inline Matrix reference_shampoo_step(const Matrix& theta, const Matrix& g, const blockshampoo::ShampooConfig& cfg) {
  const Eigen::MatrixXd G = to_eigen(g);
  const Eigen::MatrixXd L = (1.0 - cfg.beta_lr) * G * G.transpose();
  const Eigen::MatrixXd R = (1.0 - cfg.beta_lr) * G.transpose() * G;
  auto root = [&](const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd reg = m + cfg.epsilon * Eigen::MatrixXd::Identity(m.rows(), m.cols());
    return to_eigen(oracle_power(from_eigen(reg), -0.25));
  };
  const Eigen::MatrixXd U = root(L) * G * root(R);
  const Eigen::ArrayXXd A = (1.0 - cfg.graft.beta2) * G.array().square() / (1.0 - cfg.graft.beta2);
  const Eigen::MatrixXd P = (G.array() / (cfg.graft.eps + A.sqrt())).matrix();
  const double s = P.norm() / U.norm();
  return from_eigen(to_eigen(theta) - cfg.lr.base * s * U);
}

}  // namespace testing_support

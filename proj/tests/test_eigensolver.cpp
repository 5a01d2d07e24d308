#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "blockshampoo/eigensolver.hpp"
#include "blockshampoo/errors.hpp"
#include "support.hpp"

using namespace blockshampoo;
using namespace testing_support;

namespace {

double orthogonality_error(const Matrix& q) {
  return frobenius_distance(matmul(q.transposed(), q), Matrix::identity(q.rows()));
}

}  // namespace

TEST_CASE("eigh of a diagonal matrix") {
  const std::vector<double> d{3, 1, 2};
  const EigenDecomposition evd = eigh(Matrix::diagonal(d));
  CHECK(evd.eigenvalues == std::vector<double>{1, 2, 3});
  // Q is a signed permutation: each column has a single +-1 entry.
  for (std::size_t c = 0; c < 3; ++c) {
    int ones = 0;
    for (std::size_t r = 0; r < 3; ++r) {
      const double v = std::abs(evd.eigenvectors(r, c));
      CHECK((v == 0.0 || v == 1.0));
      ones += v == 1.0;
    }
    CHECK(ones == 1);
  }
}

TEST_CASE("eigh of the 2x2 [[2,1],[1,2]]") {
  const EigenDecomposition evd = eigh(Matrix{{2, 1}, {1, 2}});
  CHECK(evd.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(evd.eigenvalues[1] == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("eigh reconstruction and orthogonality on random symmetric input") {
  std::mt19937_64 rng(21);
  for (std::size_t n : {1u, 2u, 5u, 16u, 33u}) {
    const Matrix a = symmetrize(random_matrix(n, n, rng));
    const EigenDecomposition evd = eigh(a);
    CHECK(orthogonality_error(evd.eigenvectors) < 1e-10);
    const Matrix rebuilt = compose_spectral(evd.eigenvectors, evd.eigenvalues);
    CHECK(frobenius_distance(rebuilt, a) < 1e-10 * frobenius_norm(a));
    CHECK(std::is_sorted(evd.eigenvalues.begin(), evd.eigenvalues.end()));
    const std::vector<double> ref = oracle_eigenvalues(a);
    for (std::size_t i = 0; i < n; ++i) CHECK(evd.eigenvalues[i] == doctest::Approx(ref[i]).epsilon(1e-11).scale(1.0));
  }
}

TEST_CASE("eigh polishing keeps small eigenpairs accurate on ill-conditioned input") {
  std::mt19937_64 rng(47);
  const Matrix a = random_spd(32, 1e8, rng);
  const Matrix want = oracle_power(a, -0.25);
  const EigenDecomposition polished = eigh(a);
  const Matrix root = spectral_function(polished, [](double l) { return std::pow(l, -0.25); });
  CHECK(relative_error(root, want) < 1e-8);

  JacobiOptions bare;
  bare.polish_sweeps = 0;
  const EigenDecomposition unpolished = eigh(a, bare);
  const Matrix rough = spectral_function(unpolished, [](double l) { return std::pow(l, -0.25); });
  CHECK(relative_error(root, want) <= relative_error(rough, want));
}

TEST_CASE("eigh rejects bad input") {
  CHECK_THROWS_AS(eigh(Matrix(2, 3)), std::invalid_argument);
  CHECK_THROWS_AS(eigh(Matrix{{1, 2}, {0, 1}}), std::invalid_argument);
  CHECK_NOTHROW(eigh(Matrix{{1, 1}, {1 + 1e-12, 1}}));
  CHECK_NOTHROW(eigh(Matrix(3, 3)));
  JacobiOptions one_sweep;
  one_sweep.max_sweeps = 0;
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(eigh(symmetrize(random_matrix(6, 6, rng)), one_sweep), NumericalError);
}

TEST_CASE("evd inverse root of a scaled identity") {
  const Matrix root = evd_inverse_root(4.0 * Matrix::identity(2), 2, {Dampening::CorrectedShiftedReLU, 1e-10});
  CHECK(max_abs_diff(root, 0.5 * Matrix::identity(2)) < 1e-9);

  const BatchedTensor batch = BatchedTensor::stack(std::vector<Matrix>{4.0 * Matrix::identity(3), 4.0 * Matrix::identity(3)});
  const BatchedTensor roots = batched_evd_inverse_root(batch, 2, {});
  for (std::size_t i = 0; i < 2; ++i) CHECK(max_abs_diff(roots.block(i), 0.5 * Matrix::identity(3)) < 1e-9);
}

TEST_CASE("shifted ReLU dampening of a nearly singular corrected spectrum") {
  const double eps = 1e-10;
  // dampen_spectrum takes the spectrum of A + eps I; the corrected spectrum
  // is that minus eps.
  const std::vector<double> regularized{-1e-12 + eps, 0.5 + eps};
  const std::vector<double> out = dampen_spectrum(regularized, {Dampening::CorrectedShiftedReLU, eps});
  CHECK(out[0] == 0.0);
  CHECK(out[1] == doctest::Approx(0.5 - eps).epsilon(1e-15));
  CHECK(std::count_if(out.begin(), out.end(), [](double v) { return v > 0.0; }) == 1);
}

TEST_CASE("shifted ReLU property on random spectra") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1e-9, 1e-9);
  const double eps = 1e-10;
  std::vector<double> reg(50);
  for (double& v : reg) v = u(rng);
  const std::vector<double> out = dampen_spectrum(reg, {Dampening::CorrectedShiftedReLU, eps});
  for (std::size_t i = 0; i < reg.size(); ++i) {
    CHECK(out[i] >= 0.0);
    CHECK(out[i] == std::max(reg[i] - eps - eps, 0.0));
  }
}

TEST_CASE("absolute-value dampening") {
  const double eps = 1e-10;
  const std::vector<double> out = dampen_spectrum(std::vector<double>{-0.3 + eps}, {Dampening::CorrectedAbs, eps});
  CHECK(out[0] == doctest::Approx(0.3 + eps).epsilon(1e-14));
}

TEST_CASE("legacy dampening adds epsilon twice to a non-negative minimum") {
  const double eps = 1e-4;
  const std::vector<double> d{0.25, 0.0, 2.0};
  const EigenDecomposition evd = eigh(add_identity(Matrix::diagonal(d), eps));
  const std::vector<double> out = dampen_spectrum(evd.eigenvalues, {Dampening::DistributedShampooLegacy, eps});
  CHECK(out[0] == doctest::Approx(0.0 + 2 * eps).epsilon(1e-12));

  // A negative minimum is lifted to eps.
  const std::vector<double> neg = dampen_spectrum(std::vector<double>{-0.5, 1.0}, {Dampening::DistributedShampooLegacy, eps});
  CHECK(neg[0] == doctest::Approx(eps).epsilon(1e-12));
  CHECK(neg[1] == doctest::Approx(1.5 + eps).epsilon(1e-12));
}

TEST_CASE("evd inverse root matches the oracle and stays symmetric PSD") {
  std::mt19937_64 rng(31);
  for (int p : {2, 4}) {
    for (Dampening kind : {Dampening::DistributedShampooLegacy, Dampening::CorrectedShiftedReLU, Dampening::CorrectedAbs}) {
      const double eps = 1e-6;
      const Matrix a = random_spd(12, 100.0, rng);
      // Net shift of the spectrum of A for a positive definite input.
      const double shift = kind == Dampening::DistributedShampooLegacy ? 2 * eps
                           : kind == Dampening::CorrectedShiftedReLU  ? -eps
                                                                      : eps;
      const Matrix root = evd_inverse_root(a, p, {kind, eps});
      CHECK(relative_error(root, oracle_power(add_identity(a, shift), -1.0 / p)) < 1e-11);
      CHECK(asymmetry(root) <= 1e-10 * frobenius_norm(root));
      for (double l : oracle_eigenvalues(root)) CHECK(l >= -1e-10);
    }
  }
}

TEST_CASE("shifted ReLU gives a rank-limited inverse on a singular matrix") {
  const std::vector<double> d{0.0, 0.0, 4.0};
  const Matrix root = evd_inverse_root(Matrix::diagonal(d), 2, {Dampening::CorrectedShiftedReLU, 1e-10});
  CHECK(root(0, 0) == 0.0);
  CHECK(root(1, 1) == 0.0);
  CHECK(root(2, 2) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK_THROWS_AS(evd_inverse_root(Matrix(3, 3), 2, {Dampening::CorrectedShiftedReLU, 1e-10}), NumericalError);
  CHECK_THROWS_AS(evd_inverse_root(Matrix::identity(2), 3, {}), std::invalid_argument);
}

TEST_CASE("batched evd equals sequential calls") {
  std::mt19937_64 rng(41);
  std::vector<Matrix> blocks;
  for (int i = 0; i < 4; ++i) blocks.push_back(random_spd(6, 50.0, rng));
  const DampeningHeuristic h{Dampening::CorrectedAbs, 1e-8};
  const BatchedTensor out = batched_evd_inverse_root(BatchedTensor::stack(blocks), 4, h);
  for (int i = 0; i < 4; ++i) CHECK(out.block(i) == evd_inverse_root(blocks[i], 4, h));
  const BatchedTensor one = batched_evd_inverse_root(BatchedTensor::stack(std::span(blocks).first(1)), 4, h);
  CHECK(one.block(0) == evd_inverse_root(blocks[0], 4, h));
}

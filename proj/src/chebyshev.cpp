#include "blockshampoo/chebyshev.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>

#include "blockshampoo/errors.hpp"

namespace blockshampoo {

namespace {

// dst = alpha * src + beta * I (+ gamma * extra when given), block-wise.
void combine_into(BatchedTensor& dst, double alpha, const BatchedTensor& src, double beta,
                  const BatchedTensor* extra = nullptr, double gamma = 0.0) {
  const std::size_t n = dst.dim();
  for (std::size_t k = 0; k < dst.batch(); ++k) {
    auto d = dst.block_data(k);
    auto s = src.block_data(k);
    for (std::size_t i = 0; i < n * n; ++i) {
      d[i] = alpha * s[i];
      if (extra) d[i] += gamma * extra->block_data(k)[i];
    }
    for (std::size_t i = 0; i < n; ++i) d[i * n + i] += beta;
  }
}

BatchedTensor scaled_identity(std::size_t batch, std::size_t dim, double value) {
  BatchedTensor t(batch, dim);
  for (std::size_t k = 0; k < batch; ++k) {
    auto d = t.block_data(k);
    for (std::size_t i = 0; i < dim; ++i) d[i * dim + i] = value;
  }
  return t;
}

}  // namespace

ChebCoefficients cheb_fit(const std::function<double(double)>& f, std::size_t degree, std::size_t points,
                          double lower, double upper, int p) {
  if (!(upper > lower)) throw std::invalid_argument("cheb_fit: interval must satisfy lower < upper");
  if (points < degree + 1) throw std::invalid_argument("cheb_fit: need at least degree + 1 points");
  std::vector<double> theta(points);
  std::vector<double> fx(points);
  for (std::size_t v = 0; v < points; ++v) {
    theta[v] = (2.0 * static_cast<double>(v) + 1.0) * std::numbers::pi / (2.0 * static_cast<double>(points));
    const double x = 0.5 * (upper - lower) * std::cos(theta[v]) + 0.5 * (upper + lower);
    fx[v] = f(x);
  }
  ChebCoefficients out{degree, points, lower, upper, p, std::vector<double>(degree + 1, 0.0)};
  for (std::size_t k = 0; k <= degree; ++k) {
    double s = 0.0;
    for (std::size_t v = 0; v < points; ++v) s += fx[v] * std::cos(static_cast<double>(k) * theta[v]);
    out.coeffs[k] = 2.0 / static_cast<double>(points) * s;
  }
  out.coeffs[0] *= 0.5;
  return out;
}

ChebCoefficients cheb_fit_inverse_root(int p, std::size_t degree, std::size_t points, double lower, double upper) {
  if (p <= 0) throw std::invalid_argument("cheb_fit_inverse_root: p must be positive");
  if (!(lower > 0.0)) throw std::invalid_argument("cheb_fit_inverse_root: interval must be positive");
  const double exponent = -1.0 / p;
  return cheb_fit([exponent](double x) { return std::pow(x, exponent); }, degree, points, lower, upper, p);
}

double clenshaw_scalar(double x, const ChebCoefficients& c) {
  const double t = c.to_unit(x);
  double b1 = 0.0;  // b_{k+1}
  double b2 = 0.0;  // b_{k+2}
  for (std::size_t k = c.coeffs.size(); k-- > 0;) {
    const double bk = 2.0 * t * b1 - b2 + c.coeffs[k];
    b2 = b1;
    b1 = bk;
  }
  // b1 now holds b_0 and b2 holds b_1.
  return b1 - t * b2;
}

BatchedTensor batched_clenshaw_matrix(const BatchedTensor& a, const ChebCoefficients& c,
                                      std::span<const double> scales, Precision mode, bool optimized) {
  if (scales.size() != a.batch()) throw std::invalid_argument("clenshaw_matrix: one scale per block required");
  if (c.coeffs.empty()) throw std::invalid_argument("clenshaw_matrix: empty coefficient vector");
  const std::size_t batch = a.batch();
  const std::size_t n = a.dim();
  const std::size_t d = c.coeffs.size() - 1;
  const auto& cf = c.coeffs;

  BatchedTensor s(batch, n);
  const double width = c.upper - c.lower;
  for (std::size_t k = 0; k < batch; ++k) {
    if (!(scales[k] > 0.0)) throw std::invalid_argument("clenshaw_matrix: scale must be > 0");
    auto src = a.block_data(k);
    auto dst = s.block_data(k);
    for (std::size_t i = 0; i < n * n; ++i) dst[i] = 2.0 * src[i] / scales[k] / width;
    for (std::size_t i = 0; i < n; ++i) dst[i * n + i] -= (c.lower + c.upper) / width;
  }

  BatchedTensor result(batch, n);
  if (optimized) {
    if (d == 0) {
      result = scaled_identity(batch, n, cf[0]);
    } else {
      // b_next = B_{k+1}, b_next2 = B_{k+2}
      BatchedTensor b_next2 = scaled_identity(batch, n, cf[d]);
      BatchedTensor b_next(batch, n);
      combine_into(b_next, 2.0 * cf[d], s, cf[d - 1]);
      if (d == 1) {
        // B_1 = c_1 I + ... collapses: result = c_0 I + c_1 S.
        combine_into(result, cf[1], s, cf[0]);
      } else {
        for (std::size_t k = d - 2; k >= 1; --k) {
          const BatchedTensor prod = bmm(s, b_next, mode);
          BatchedTensor bk(batch, n);
          combine_into(bk, 2.0, prod, cf[k], &b_next2, -1.0);
          b_next2 = std::move(b_next);
          b_next = std::move(bk);
        }
        const BatchedTensor prod = bmm(s, b_next, mode);
        combine_into(result, 1.0, prod, cf[0], &b_next2, -1.0);
      }
    }
  } else {
    BatchedTensor b_next(batch, n);
    BatchedTensor b_next2(batch, n);
    for (std::size_t k = d + 1; k-- > 0;) {
      const BatchedTensor prod = bmm(s, b_next, mode);
      BatchedTensor bk(batch, n);
      combine_into(bk, 2.0, prod, cf[k], &b_next2, -1.0);
      b_next2 = std::move(b_next);
      b_next = std::move(bk);
    }
    // b_next = B_0, b_next2 = B_1
    const BatchedTensor prod = bmm(s, b_next2, mode);
    combine_into(result, 1.0, b_next, 0.0, &prod, -1.0);
  }

  if (c.p > 0) {
    for (std::size_t k = 0; k < batch; ++k) {
      const double factor = std::pow(scales[k], -1.0 / c.p);
      for (double& v : result.block_data(k)) v *= factor;
    }
  }
  for (double v : result.data()) {
    if (!std::isfinite(v)) throw NumericalError("clenshaw_matrix: non-finite result (spectrum outside fit interval?)");
  }
  return result;
}

Matrix clenshaw_matrix(const Matrix& a, const ChebCoefficients& c, double scale, Precision mode, bool optimized) {
  if (!a.is_square()) throw std::invalid_argument("clenshaw_matrix: matrix is not square");
  BatchedTensor t(1, a.rows());
  t.set_block(0, a);
  const double scales[1] = {scale};
  return batched_clenshaw_matrix(t, c, scales, mode, optimized).block(0);
}

void write_cheb_cache(std::ostream& out, const ChebCoefficients& c) {
  const auto old_precision = out.precision();
  out << std::setprecision(17);
  out << c.degree << ' ' << c.points << ' ' << c.lower << ' ' << c.upper << ' ' << c.p << '\n';
  for (double v : c.coeffs) out << v << '\n';
  out.precision(old_precision);
}

ChebCoefficients read_cheb_cache(std::istream& in) {
  ChebCoefficients c;
  if (!(in >> c.degree >> c.points >> c.lower >> c.upper >> c.p)) {
    throw std::runtime_error("chebyshev cache: header must be 'd N a b p'");
  }
  if (!(c.upper > c.lower)) throw std::runtime_error("chebyshev cache: invalid interval");
  c.coeffs.resize(c.degree + 1);
  for (std::size_t k = 0; k <= c.degree; ++k) {
    if (!(in >> c.coeffs[k]) || !std::isfinite(c.coeffs[k])) {
      throw std::runtime_error("chebyshev cache: expected " + std::to_string(c.degree + 1) + " coefficients");
    }
  }
  return c;
}

void write_cheb_cache_file(const std::filesystem::path& path, const ChebCoefficients& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_cheb_cache(out, c);
}

ChebCoefficients read_cheb_cache_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_cheb_cache(in);
}

}  // namespace blockshampoo

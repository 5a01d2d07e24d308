#include "blockshampoo/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

namespace blockshampoo {

namespace {

void require_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("matrix data contains NaN or Inf");
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

// c (m x n) = a (m x k) * b (k x n); c must be zeroed. i-k-j order so that
// every output entry accumulates its k terms in ascending k.
void gemm_kernel(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                 Precision mode) {
  if (mode == Precision::Full64) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = a[i * k + p];
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
    return;
  }
  std::vector<float> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0f);
    for (std::size_t p = 0; p < k; ++p) {
      const float aip = static_cast<float>(a[i * k + p]);
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const float prod = aip * static_cast<float>(brow[j]);
        acc[j] = acc[j] + prod;
      }
    }
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = static_cast<double>(acc[j]);
  }
}

thread_local OpCounts tls_counts;

}  // namespace

OpCounts& thread_op_counts() noexcept { return tls_counts; }

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("matrix data length " + std::to_string(data_.size()) + " != " +
                                std::to_string(rows_) + "x" + std::to_string(cols_));
  }
  require_finite(data_);
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw std::invalid_argument("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  require_finite(data_);
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  require_finite(values);
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b, Precision mode) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + ")");
  }
  Matrix c(a.rows(), b.cols());
  gemm_kernel(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.cols(), mode);
  ++tls_counts.matmuls;
  return c;
}

double frobenius_norm(const Matrix& a) noexcept {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const Matrix& a) noexcept {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double frobenius_distance(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frobenius_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

Matrix symmetrize(const Matrix& a) {
  if (!a.is_square()) throw std::invalid_argument("symmetrize: matrix is not square");
  Matrix s(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    s(i, i) = a(i, i);
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

double asymmetry(const Matrix& a) {
  if (!a.is_square()) throw std::invalid_argument("asymmetry: matrix is not square");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double d = a(i, j) - a(j, i);
      s += d * d;
    }
  return std::sqrt(s);
}

Matrix add_identity(Matrix a, double s) {
  if (!a.is_square()) throw std::invalid_argument("add_identity: matrix is not square");
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += s;
  return a;
}

BatchedTensor::BatchedTensor(std::size_t batch, std::size_t dim)
    : batch_(batch), dim_(dim), data_(batch * dim * dim, 0.0) {}

BatchedTensor::BatchedTensor(std::size_t batch, std::size_t dim, std::vector<double> data)
    : batch_(batch), dim_(dim), data_(std::move(data)) {
  if (data_.size() != batch_ * dim_ * dim_) throw std::invalid_argument("batched tensor data length mismatch");
  require_finite(data_);
}

BatchedTensor BatchedTensor::identity(std::size_t batch, std::size_t dim) {
  BatchedTensor t(batch, dim);
  for (std::size_t b = 0; b < batch; ++b) {
    auto blk = t.block_data(b);
    for (std::size_t i = 0; i < dim; ++i) blk[i * dim + i] = 1.0;
  }
  return t;
}

BatchedTensor BatchedTensor::stack(std::span<const Matrix> blocks) {
  if (blocks.empty()) return {};
  const std::size_t dim = blocks.front().rows();
  BatchedTensor t(blocks.size(), dim);
  for (std::size_t b = 0; b < blocks.size(); ++b) t.set_block(b, blocks[b]);
  return t;
}

Matrix BatchedTensor::block(std::size_t i) const {
  auto blk = block_data(i);
  Matrix m(dim_, dim_);
  std::copy(blk.begin(), blk.end(), m.data().begin());
  return m;
}

void BatchedTensor::set_block(std::size_t i, const Matrix& m) {
  if (m.rows() != dim_ || m.cols() != dim_) {
    throw std::invalid_argument("set_block: block must be " + std::to_string(dim_) + "x" + std::to_string(dim_));
  }
  if (i >= batch_) throw std::out_of_range("set_block: index out of range");
  std::copy(m.data().begin(), m.data().end(), block_data(i).begin());
}

std::vector<Matrix> BatchedTensor::unstack() const {
  std::vector<Matrix> out;
  out.reserve(batch_);
  for (std::size_t i = 0; i < batch_; ++i) out.push_back(block(i));
  return out;
}

void BatchedTensor::assign_blocks(const BatchedTensor& src, std::span<const std::uint8_t> active) {
  if (src.batch_ != batch_ || src.dim_ != dim_) throw std::invalid_argument("assign_blocks: shape mismatch");
  for (std::size_t i = 0; i < batch_; ++i) {
    if (active[i]) std::copy(src.block_data(i).begin(), src.block_data(i).end(), block_data(i).begin());
  }
}

namespace {

template <typename Fn>
void for_each_block(std::size_t batch, std::size_t dim, Fn&& fn) {
  // Threads only pay off once blocks carry real work.
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(hw, batch);
  if (workers <= 1 || dim < 24) {
    for (std::size_t i = 0; i < batch; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < batch; i += workers) fn(i);
    });
  }
}

}  // namespace

BatchedTensor bmm(const BatchedTensor& a, const BatchedTensor& b, Precision mode,
                  std::span<const std::uint8_t> active) {
  if (a.batch() != b.batch() || a.dim() != b.dim()) {
    throw std::invalid_argument("bmm: shape mismatch (" + std::to_string(a.batch()) + "," + std::to_string(a.dim()) +
                                ") vs (" + std::to_string(b.batch()) + "," + std::to_string(b.dim()) + ")");
  }
  if (!active.empty() && active.size() != a.batch()) throw std::invalid_argument("bmm: mask length mismatch");
  BatchedTensor c(a.batch(), a.dim());
  const std::size_t dim = a.dim();
  std::uint64_t issued = 0;
  for (std::size_t i = 0; i < a.batch(); ++i) issued += active.empty() || active[i] ? 1 : 0;
  // Blocks are disjoint slices of c, so the parallel loop has no shared writes.
  for_each_block(a.batch(), dim, [&](std::size_t i) {
    if (!active.empty() && !active[i]) return;
    gemm_kernel(a.block_data(i).data(), b.block_data(i).data(), c.block_data(i).data(), dim, dim, dim, mode);
  });
  tls_counts.matmuls += issued;
  ++tls_counts.bmm_calls;
  return c;
}

BatchedTensor bmm(const BatchedTensor& a, const BatchedTensor& b, Precision mode) {
  return bmm(a, b, mode, std::span<const std::uint8_t>{});
}

}  // namespace blockshampoo

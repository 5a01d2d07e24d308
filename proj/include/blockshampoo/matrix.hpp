#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace blockshampoo {

/// Arithmetic mode for products. Emulated32 rounds the operands and every
/// multiply-accumulate through IEEE single precision; storage stays double.
enum class Precision { Full64, Emulated32 };

/// Dense row-major matrix of doubles.
///
/// Constructors that take caller data reject non-finite entries. Results of
/// arithmetic are not re-validated; solvers check for NaN/Inf themselves.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(data_).subspan(i * cols_, cols_);
  }

  Matrix transposed() const;
  bool all_finite() const noexcept;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s) noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// Standard product. Throws std::invalid_argument when a.cols() != b.rows().
Matrix matmul(const Matrix& a, const Matrix& b, Precision mode = Precision::Full64);

double frobenius_norm(const Matrix& a) noexcept;
/// Largest absolute entry.
double max_abs(const Matrix& a) noexcept;
/// Largest absolute entry of a - b. Shapes must agree.
double max_abs_diff(const Matrix& a, const Matrix& b);
/// ||a - b||_F. Shapes must agree.
double frobenius_distance(const Matrix& a, const Matrix& b);

/// (a + a^T) / 2. Throws on non-square input.
Matrix symmetrize(const Matrix& a);
/// ||a - a^T||_F
double asymmetry(const Matrix& a);
/// a + s * I
Matrix add_identity(Matrix a, double s);

/// Stack of `batch` square dim x dim blocks stored contiguously, row-major
/// within each block.
class BatchedTensor {
 public:
  BatchedTensor() = default;
  BatchedTensor(std::size_t batch, std::size_t dim);
  BatchedTensor(std::size_t batch, std::size_t dim, std::vector<double> data);

  static BatchedTensor identity(std::size_t batch, std::size_t dim);
  /// All blocks must be square with the same dimension. An empty span gives
  /// an empty tensor of dim 0.
  static BatchedTensor stack(std::span<const Matrix> blocks);

  std::size_t batch() const noexcept { return batch_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t block_size() const noexcept { return dim_ * dim_; }

  std::span<const double> block_data(std::size_t i) const noexcept {
    return std::span<const double>(data_).subspan(i * block_size(), block_size());
  }
  std::span<double> block_data(std::size_t i) noexcept {
    return std::span<double>(data_).subspan(i * block_size(), block_size());
  }
  std::span<const double> data() const noexcept { return data_; }

  Matrix block(std::size_t i) const;
  void set_block(std::size_t i, const Matrix& m);
  std::vector<Matrix> unstack() const;

  /// Copies block i from `src` for every i with active[i] set.
  void assign_blocks(const BatchedTensor& src, std::span<const std::uint8_t> active);

  friend bool operator==(const BatchedTensor&, const BatchedTensor&) = default;

 private:
  std::size_t batch_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Block-wise product. Block i of the result is exactly matmul(a_i, b_i).
BatchedTensor bmm(const BatchedTensor& a, const BatchedTensor& b, Precision mode = Precision::Full64);

/// Masked variant: only blocks with active[i] != 0 are computed; the rest are
/// left zero. Callers that freeze converged blocks use this together with
/// BatchedTensor::assign_blocks.
BatchedTensor bmm(const BatchedTensor& a, const BatchedTensor& b, Precision mode,
                  std::span<const std::uint8_t> active);

/// Per-thread product counters. `matmuls` counts individual block products
/// (one per matmul call, one per active block in a bmm call).
struct OpCounts {
  std::uint64_t matmuls = 0;
  std::uint64_t bmm_calls = 0;
};

OpCounts& thread_op_counts() noexcept;

/// Snapshot of the thread's counters; reports products issued since
/// construction.
class ScopedOpCounter {
 public:
  ScopedOpCounter() noexcept : start_(thread_op_counts()) {}
  std::uint64_t matmuls() const noexcept { return thread_op_counts().matmuls - start_.matmuls; }
  std::uint64_t bmm_calls() const noexcept { return thread_op_counts().bmm_calls - start_.bmm_calls; }

 private:
  OpCounts start_;
};

}  // namespace blockshampoo

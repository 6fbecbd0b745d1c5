#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mlpgcn {

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  bool same_shape(const DenseMatrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;
  std::string shape_string() const;

  /// Exact elementwise equality (bitwise for non-NaN values).
  friend bool operator==(const DenseMatrix& a, const DenseMatrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// One stored entry of a symmetric sparse matrix, given once for i <= j.
struct SparseEntry {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Square symmetric matrix in compressed sparse row form. Both triangles are
/// stored so row access and products need no special casing.
class SparseSymMatrix {
 public:
  SparseSymMatrix() = default;

  /// Takes ownership of raw CSR arrays and validates every invariant:
  /// sorted unique columns per row, finite values, structural and numerical
  /// symmetry (values within 1e-12).
  SparseSymMatrix(std::size_t dim, std::vector<std::size_t> row_offsets,
                  std::vector<std::size_t> col_indices, std::vector<double> values);

  /// Assembles from upper-triangle entries (row <= col); each off-diagonal
  /// entry is mirrored. Duplicate coordinates are summed.
  static SparseSymMatrix from_upper(std::size_t dim, std::span<const SparseEntry> entries);
  static SparseSymMatrix identity(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t nnz() const noexcept { return values_.size(); }
  std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
  std::span<const std::size_t> col_indices() const noexcept { return col_indices_; }
  std::span<const double> values() const noexcept { return values_; }

  /// Stored value at (i, j), zero when the entry is structurally absent.
  double at(std::size_t i, std::size_t j) const;
  bool contains(std::size_t i, std::size_t j) const;
  std::vector<double> row_sums() const;
  DenseMatrix densify() const;

  /// Upper-triangle entries (row <= col) in row-major order.
  std::vector<SparseEntry> upper_entries() const;

  friend bool operator==(const SparseSymMatrix& a, const SparseSymMatrix& b) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
};

// Kernels. All are pure; shape violations throw ShapeError naming both shapes.

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// aᵀ·b without materializing the transpose.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
/// a·bᵀ without materializing the transpose.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix spmm(const SparseSymMatrix& s, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);

DenseMatrix relu(const DenseMatrix& a);
/// Row-wise softmax with per-row max subtraction.
DenseMatrix softmax_rows(const DenseMatrix& a);
DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double factor);
/// y += alpha·x, in place.
void axpy(double alpha, const DenseMatrix& x, DenseMatrix& y);

/// Σ a_ij·b_ij.
double frobenius_dot(const DenseMatrix& a, const DenseMatrix& b);
double frobenius_norm_sq(const DenseMatrix& a);

}  // namespace mlpgcn

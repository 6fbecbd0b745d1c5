#include "mlpgcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include <fmt/format.h>

#include "mlpgcn/error.hpp"

namespace mlpgcn {

namespace {

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, a.shape_string(),
                                 b.shape_string()));
  }
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError(fmt::format("DenseMatrix: {} values cannot fill a {}x{} matrix",
                                 data_.size(), rows_, cols_));
  }
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) throw ShapeError("DenseMatrix::from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return DenseMatrix(n, m, std::move(data));
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

bool DenseMatrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string DenseMatrix::shape_string() const { return fmt::format("{}x{}", rows_, cols_); }

// ---------------------------------------------------------------------------

SparseSymMatrix::SparseSymMatrix(std::size_t dim, std::vector<std::size_t> row_offsets,
                                 std::vector<std::size_t> col_indices,
                                 std::vector<double> values)
    : dim_(dim),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (row_offsets_.size() != dim_ + 1 || row_offsets_.front() != 0 ||
      row_offsets_.back() != col_indices_.size() || col_indices_.size() != values_.size()) {
    throw ShapeError("SparseSymMatrix: inconsistent CSR array lengths");
  }
  for (std::size_t i = 0; i < dim_; ++i) {
    if (row_offsets_[i] > row_offsets_[i + 1]) {
      throw ShapeError("SparseSymMatrix: row offsets must be nondecreasing");
    }
    for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
      if (col_indices_[k] >= dim_) {
        throw ShapeError(fmt::format("SparseSymMatrix: column {} out of range in row {}",
                                     col_indices_[k], i));
      }
      if (k > row_offsets_[i] && col_indices_[k] <= col_indices_[k - 1]) {
        throw ShapeError(fmt::format("SparseSymMatrix: row {} columns not strictly increasing", i));
      }
      if (!std::isfinite(values_[k])) {
        throw DataError(fmt::format("SparseSymMatrix: non-finite value at ({}, {})", i,
                                    col_indices_[k]));
      }
    }
  }
  for (std::size_t i = 0; i < dim_; ++i) {
    for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
      const std::size_t j = col_indices_[k];
      if (!contains(j, i) || std::abs(at(j, i) - values_[k]) > 1e-12) {
        throw ConsistencyError(
            fmt::format("SparseSymMatrix: entry ({}, {}) has no symmetric partner", i, j));
      }
    }
  }
}

SparseSymMatrix SparseSymMatrix::from_upper(std::size_t dim,
                                            std::span<const SparseEntry> entries) {
  std::vector<std::map<std::size_t, double>> rows(dim);
  for (const auto& e : entries) {
    if (e.row >= dim || e.col >= dim) {
      throw ShapeError(fmt::format("SparseSymMatrix::from_upper: ({}, {}) outside {}x{}", e.row,
                                   e.col, dim, dim));
    }
    if (e.row > e.col) {
      throw ParameterError("SparseSymMatrix::from_upper: entries must satisfy row <= col");
    }
    rows[e.row][e.col] += e.value;
    if (e.row != e.col) rows[e.col][e.row] += e.value;
  }
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  for (const auto& r : rows) {
    for (const auto& [j, v] : r) {
      cols.push_back(j);
      vals.push_back(v);
    }
    offsets.push_back(cols.size());
  }
  return SparseSymMatrix(dim, std::move(offsets), std::move(cols), std::move(vals));
}

SparseSymMatrix SparseSymMatrix::identity(std::size_t dim) {
  std::vector<std::size_t> offsets(dim + 1);
  std::vector<std::size_t> cols(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    offsets[i + 1] = i + 1;
    cols[i] = i;
  }
  return SparseSymMatrix(dim, std::move(offsets), std::move(cols), std::vector<double>(dim, 1.0));
}

bool SparseSymMatrix::contains(std::size_t i, std::size_t j) const {
  if (i >= dim_) return false;
  const auto first = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[i]);
  const auto last = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[i + 1]);
  return std::binary_search(first, last, j);
}

double SparseSymMatrix::at(std::size_t i, std::size_t j) const {
  if (i >= dim_ || j >= dim_) {
    throw ShapeError(fmt::format("SparseSymMatrix::at: ({}, {}) outside {}x{}", i, j, dim_, dim_));
  }
  const auto first = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[i]);
  const auto last = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[i + 1]);
  const auto it = std::lower_bound(first, last, j);
  if (it == last || *it != j) return 0.0;
  return values_[static_cast<std::size_t>(it - col_indices_.begin())];
}

std::vector<double> SparseSymMatrix::row_sums() const {
  std::vector<double> sums(dim_, 0.0);
  for (std::size_t i = 0; i < dim_; ++i) {
    for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) sums[i] += values_[k];
  }
  return sums;
}

DenseMatrix SparseSymMatrix::densify() const {
  DenseMatrix out(dim_, dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
      out(i, col_indices_[k]) = values_[k];
    }
  }
  return out;
}

std::vector<SparseEntry> SparseSymMatrix::upper_entries() const {
  std::vector<SparseEntry> out;
  for (std::size_t i = 0; i < dim_; ++i) {
    for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
      if (col_indices_[k] >= i) out.push_back({i, col_indices_[k], values_[k]});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError(
        fmt::format("matmul: inner dimensions differ ({} x {})", a.shape_string(), b.shape_string()));
  }
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError(fmt::format("matmul_tn: row counts differ ({}ᵀ x {})", a.shape_string(),
                                 b.shape_string()));
  }
  DenseMatrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto arow = a.row(k);
    const auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto out = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aki * brow[j];
    }
  }
  return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError(fmt::format("matmul_nt: column counts differ ({} x {}ᵀ)", a.shape_string(),
                                 b.shape_string()));
  }
  DenseMatrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  }
  return c;
}

DenseMatrix spmm(const SparseSymMatrix& s, const DenseMatrix& b) {
  if (s.dim() != b.rows()) {
    throw ShapeError(
        fmt::format("spmm: sparse {}x{} times {}", s.dim(), s.dim(), b.shape_string()));
  }
  const auto offsets = s.row_offsets();
  const auto cols = s.col_indices();
  const auto vals = s.values();
  DenseMatrix c(s.dim(), b.cols());
  for (std::size_t i = 0; i < s.dim(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
      const double v = vals[k];
      const auto brow = b.row(cols[k]);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += v * brow[j];
    }
  }
  return c;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

DenseMatrix relu(const DenseMatrix& a) {
  DenseMatrix out(a.rows(), a.cols());
  auto dst = out.data();
  const auto src = a.data();
  // Written as a comparison so that -0.0 and NaN both map to +0.0.
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  return out;
}

DenseMatrix softmax_rows(const DenseMatrix& a) {
  if (a.cols() == 0) throw ShapeError("softmax_rows: matrix has no columns");
  DenseMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto in = a.row(i);
    auto dst = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      dst[j] = std::exp(in[j] - mx);
      total += dst[j];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "hadamard");
  DenseMatrix out(a.rows(), a.cols());
  auto dst = out.data();
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = x[i] * y[i];
  return out;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "add");
  DenseMatrix out = a;
  axpy(1.0, b, out);
  return out;
}

DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "subtract");
  DenseMatrix out = a;
  axpy(-1.0, b, out);
  return out;
}

DenseMatrix scale(const DenseMatrix& a, double factor) {
  DenseMatrix out = a;
  for (double& v : out.data()) v *= factor;
  return out;
}

void axpy(double alpha, const DenseMatrix& x, DenseMatrix& y) {
  require_same_shape(x, y, "axpy");
  const auto src = x.data();
  auto dst = y.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
}

double frobenius_dot(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "frobenius_dot");
  const auto x = a.data();
  const auto y = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double frobenius_norm_sq(const DenseMatrix& a) { return frobenius_dot(a, a); }

}  // namespace mlpgcn

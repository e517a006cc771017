#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "graphfl/common.hpp"

namespace graphfl {

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// (row, col, value) entry used to assemble sparse matrices.
struct Triplet {
  std::uint32_t row;
  std::uint32_t col;
  double value;
};

/// Compressed-row sparse matrix. Column indices within a row are strictly
/// ascending; this fixes the accumulation order of every product.
class CsrMatrix {
 public:
  CsrMatrix() = default;
  CsrMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
            std::vector<std::uint32_t> col_idx, std::vector<double> values);

  /// Duplicates are summed. Rows are sorted by column.
  static CsrMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries);
  /// Keeps entries that are not exactly zero.
  static CsrMatrix from_dense(const DenseMatrix& dense);
  static CsrMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::uint32_t> row_cols(std::size_t r) const noexcept {
    return {col_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const noexcept {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const std::uint32_t> col_idx() const noexcept { return col_idx_; }
  std::span<const double> values() const noexcept { return values_; }

  /// Value at (r, c), or 0 when not stored.
  double at(std::size_t r, std::size_t c) const noexcept;

  DenseMatrix to_dense() const;

  friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::uint32_t> col_idx_;
  std::vector<double> values_;
};

/// Sparse-dense product S * X. Each output row is accumulated over the
/// stored entries of the corresponding row of S in ascending column order.
DenseMatrix spmm(const CsrMatrix& s, const DenseMatrix& x);

/// Row r of S * X written into `out` (length x.cols()). Bitwise identical to
/// the corresponding row of spmm(s, x).
void spmm_row(const CsrMatrix& s, const DenseMatrix& x, std::size_t r, std::span<double> out);

/// Dense product A * B with the i-k-j loop order.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

}  // namespace graphfl

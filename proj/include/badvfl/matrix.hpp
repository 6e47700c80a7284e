#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace badvfl {

// Dense row-major matrix of doubles; the single numeric carrier for
// features, activations, logits and gradients.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c);

  static Matrix zeros(int r, int c) { return Matrix(r, c); }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  std::span<double> row(int r) {
    return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;
  size_t size() const { return data.size(); }
};

Matrix matmul(const Matrix& a, const Matrix& b);     // a(m,k) * b(k,n)
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a(m,k) * b(n,k)^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a(k,m)^T * b(k,n)
Matrix hconcat(const std::vector<Matrix>& blocks);
std::vector<Matrix> hsplit(const Matrix& m, const std::vector<int>& widths);
Matrix gather_rows(const Matrix& m, std::span<const int> row_indices);

}  // namespace badvfl

#include "badvfl/matrix.hpp"

#include <cmath>
#include <string>

#include "badvfl/common.hpp"

namespace badvfl {

Matrix::Matrix(int r, int c) : rows(r), cols(c) {
  if (r < 0 || c < 0) throw InternalError("matrix with negative shape");
  data.assign(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0);
}

bool Matrix::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw InternalError("matmul shape mismatch: " + std::to_string(a.cols) + " vs " +
                        std::to_string(b.rows));
  Matrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.data.data() + static_cast<size_t>(i) * a.cols;
    double* cr = c.data.data() + static_cast<size_t>(i) * c.cols;
    for (int k = 0; k < a.cols; ++k) {
      double av = ar[k];
      if (av == 0.0) continue;
      const double* br = b.data.data() + static_cast<size_t>(k) * b.cols;
      for (int j = 0; j < b.cols; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols)
    throw InternalError("matmul_nt shape mismatch: " + std::to_string(a.cols) + " vs " +
                        std::to_string(b.cols));
  Matrix c(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.data.data() + static_cast<size_t>(i) * a.cols;
    double* cr = c.data.data() + static_cast<size_t>(i) * c.cols;
    for (int j = 0; j < b.rows; ++j) {
      const double* br = b.data.data() + static_cast<size_t>(j) * b.cols;
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += ar[k] * br[k];
      cr[j] = s;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows)
    throw InternalError("matmul_tn shape mismatch: " + std::to_string(a.rows) + " vs " +
                        std::to_string(b.rows));
  Matrix c(a.cols, b.cols);
  for (int k = 0; k < a.rows; ++k) {
    const double* ar = a.data.data() + static_cast<size_t>(k) * a.cols;
    const double* br = b.data.data() + static_cast<size_t>(k) * b.cols;
    for (int i = 0; i < a.cols; ++i) {
      double av = ar[i];
      if (av == 0.0) continue;
      double* cr = c.data.data() + static_cast<size_t>(i) * c.cols;
      for (int j = 0; j < b.cols; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

Matrix hconcat(const std::vector<Matrix>& blocks) {
  if (blocks.empty()) throw InternalError("hconcat of zero blocks");
  int rows = blocks[0].rows;
  int cols = 0;
  for (const auto& b : blocks) {
    if (b.rows != rows) throw InternalError("hconcat row mismatch");
    cols += b.cols;
  }
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    double* dst = out.data.data() + static_cast<size_t>(i) * cols;
    for (const auto& b : blocks) {
      const double* src = b.data.data() + static_cast<size_t>(i) * b.cols;
      for (int j = 0; j < b.cols; ++j) *dst++ = src[j];
    }
  }
  return out;
}

std::vector<Matrix> hsplit(const Matrix& m, const std::vector<int>& widths) {
  int total = 0;
  for (int w : widths) {
    if (w <= 0) throw InternalError("hsplit width <= 0");
    total += w;
  }
  if (total != m.cols)
    throw InternalError("hsplit widths sum " + std::to_string(total) + " != cols " +
                        std::to_string(m.cols));
  std::vector<Matrix> out;
  out.reserve(widths.size());
  int off = 0;
  for (int w : widths) {
    Matrix b(m.rows, w);
    for (int i = 0; i < m.rows; ++i) {
      const double* src = m.data.data() + static_cast<size_t>(i) * m.cols + off;
      double* dst = b.data.data() + static_cast<size_t>(i) * w;
      for (int j = 0; j < w; ++j) dst[j] = src[j];
    }
    out.push_back(std::move(b));
    off += w;
  }
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const int> row_indices) {
  Matrix out(static_cast<int>(row_indices.size()), m.cols);
  for (size_t i = 0; i < row_indices.size(); ++i) {
    int r = row_indices[i];
    if (r < 0 || r >= m.rows)
      throw InternalError("gather_rows index " + std::to_string(r) + " out of range");
    const double* src = m.data.data() + static_cast<size_t>(r) * m.cols;
    double* dst = out.data.data() + i * m.cols;
    for (int j = 0; j < m.cols; ++j) dst[j] = src[j];
  }
  return out;
}

}  // namespace badvfl

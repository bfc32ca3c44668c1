#include "dmsa/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dmsa {

namespace {

void require_finite(const Matrix& m, const char* op) {
  if (!m.all_finite()) {
    throw NumericalError(std::string(op) + ": non-finite entry in result " + m.shape_string());
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

// out(rows x n) += a(rows x k) * b(k x n), i-k-j order so the inner loop is a
// contiguous axpy. Zero entries of a are skipped; image batches are sparse.
void gemm_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t k_dim = a.cols();
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* __restrict out_row = out.row_span(i).data();
    const double* __restrict a_row = a.row_span(i).data();
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double av = a_row[k];
      if (av == 0.0) continue;
      const double* __restrict b_row = b.row_span(k).data();
      for (std::size_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
}

}  // namespace

Vector::Vector(std::size_t dim, double fill) : data_(dim, fill) {}

Vector::Vector(std::initializer_list<double> values) : data_(values) {}

Vector::Vector(std::vector<double> values) : data_(std::move(values)) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    std::ostringstream os;
    os << "Matrix: data length " << data_.size() << " does not match shape (" << rows << "x"
       << cols << ")";
    throw ShapeError(os.str());
  }
  require_finite(*this, "Matrix");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  require_finite(*this, "Matrix");
}

Matrix Matrix::column(const Vector& v) {
  return Matrix(v.dim(), 1, std::vector<double>(v.values().begin(), v.values().end()));
}

Matrix Matrix::row(const Vector& v) {
  return Matrix(1, v.dim(), std::vector<double>(v.values().begin(), v.values().end()));
}

Vector Matrix::row_vector(std::size_t r) const {
  auto s = row_span(r);
  return Vector(std::vector<double>(s.begin(), s.end()));
}

void Matrix::set_row(std::size_t r, const Vector& v) {
  if (v.dim() != cols_) throw ShapeError("set_row: vector length does not match column count");
  std::copy(v.values().begin(), v.values().end(), row_span(r).begin());
}

std::string Matrix::shape_string() const {
  std::ostringstream os;
  os << "(" << rows_ << "x" << cols_ << ")";
  return os.str();
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_string() + " x " +
                     b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  gemm_accumulate(a, b, out);
  require_finite(out, "matmul");
  return out;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_at: row counts differ, " + a.shape_string() + "^T x " +
                     b.shape_string());
  }
  Matrix out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t s = 0; s < a.rows(); ++s) {
    const double* __restrict a_row = a.row_span(s).data();
    const double* __restrict b_row = b.row_span(s).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = a_row[i];
      if (av == 0.0) continue;
      double* __restrict out_row = out.row_span(i).data();
      for (std::size_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
  require_finite(out, "matmul_at");
  return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_bt: column counts differ, " + a.shape_string() + " x " +
                     b.shape_string() + "^T");
  }
  Matrix out(a.rows(), b.rows());
  gemm_accumulate(a, transpose(b), out);
  require_finite(out, "matmul_bt");
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix outer(const Vector& p, const Vector& x) {
  Matrix out(p.dim(), x.dim());
  for (std::size_t i = 0; i < p.dim(); ++i)
    for (std::size_t j = 0; j < x.dim(); ++j) out(i, j) = p[i] * x[j];
  require_finite(out, "outer");
  return out;
}

double frobenius_norm_sq(const Matrix& a) { return norm_sq(a.values()); }

double inner(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "inner");
  return dot(a.values(), b.values());
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm_sq(std::span<const double> a) { return dot(a, a); }

Matrix elementwise(const Matrix& a, const std::function<double(double)>& f) {
  Matrix out(a.rows(), a.cols());
  std::transform(a.values().begin(), a.values().end(), out.values().begin(), f);
  require_finite(out, "elementwise");
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out(a.rows(), a.cols());
  std::transform(a.values().begin(), a.values().end(), b.values().begin(), out.values().begin(),
                 [](double x, double y) { return x * y; });
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  axpy(1.0, b, out);
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  axpy(-1.0, b, out);
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  require_finite(out, "scale");
  return out;
}

void axpy(double s, const Matrix& b, Matrix& a) {
  require_same_shape(a, b, "axpy");
  auto dst = a.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
  require_finite(a, "axpy");
}

Vector column_sums(const Matrix& a) {
  Vector out(a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row_span(r);
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += row[c];
  }
  return out;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace dmsa

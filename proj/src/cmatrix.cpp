#include "beamunfold/cmatrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "beamunfold/error.hpp"

namespace beamunfold {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NotHermitian: return "NotHermitian";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::NotScalar: return "NotScalar";
    case ErrorKind::NonPositiveDistance: return "NonPositiveDistance";
    case ErrorKind::NonPositiveStepsize: return "NonPositiveStepsize";
    case ErrorKind::BracketFailure: return "BracketFailure";
    case ErrorKind::MulticellUnsupported: return "MulticellUnsupported";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::DivergedTraining: return "DivergedTraining";
    case ErrorKind::WidthMismatch: return "WidthMismatch";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

CMatrix::CMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols) {
  if (rows == 0 || cols == 0) {
    throw Error(ErrorKind::DimensionMismatch, "matrix dimensions must be >= 1");
  }
}

CMatrix::CMatrix(std::size_t rows, std::size_t cols, std::vector<cplx> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  if (rows == 0 || cols == 0) {
    throw Error(ErrorKind::DimensionMismatch, "matrix dimensions must be >= 1");
  }
  if (data_.size() != rows * cols) {
    throw Error(ErrorKind::DimensionMismatch,
                "entry count " + std::to_string(data_.size()) + " != rows*cols");
  }
  if (!all_finite()) throw Error(ErrorKind::NonFinite, "matrix entries must be finite");
}

CMatrix::CMatrix(std::initializer_list<std::initializer_list<cplx>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  if (rows_ == 0 || cols_ == 0) {
    throw Error(ErrorKind::DimensionMismatch, "matrix dimensions must be >= 1");
  }
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorKind::DimensionMismatch, "ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  if (!all_finite()) throw Error(ErrorKind::NonFinite, "matrix entries must be finite");
}

CMatrix CMatrix::identity(std::size_t n) {
  CMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

CMatrix CMatrix::scalar(cplx value) {
  CMatrix m(1, 1);
  m[0] = value;
  return m;
}

CMatrix CMatrix::diagonal(std::span<const double> diag) {
  CMatrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

bool CMatrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](const cplx& z) {
    return std::isfinite(z.real()) && std::isfinite(z.imag());
  });
}

void require_same_shape(const CMatrix& a, const CMatrix& b, const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(where) + ": " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()));
  }
}

CMatrix& CMatrix::operator+=(const CMatrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

CMatrix& CMatrix::operator-=(const CMatrix& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

CMatrix& CMatrix::operator*=(double s) noexcept {
  for (auto& z : data_) z *= s;
  return *this;
}

CMatrix& CMatrix::operator*=(cplx s) noexcept {
  for (auto& z : data_) z *= s;
  return *this;
}

CMatrix operator+(const CMatrix& a, const CMatrix& b) {
  CMatrix out = a;
  out += b;
  return out;
}

CMatrix operator-(const CMatrix& a, const CMatrix& b) {
  CMatrix out = a;
  out -= b;
  return out;
}

CMatrix operator-(const CMatrix& a) {
  CMatrix out = a;
  for (auto& z : out.data()) z = -z;
  return out;
}

CMatrix operator*(const CMatrix& a, double s) {
  CMatrix out = a;
  out *= s;
  return out;
}

CMatrix operator*(double s, const CMatrix& a) { return a * s; }

CMatrix operator*(const CMatrix& a, cplx s) {
  CMatrix out = a;
  out *= s;
  return out;
}

CMatrix matmul(const CMatrix& a, const CMatrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorKind::ShapeMismatch,
                "matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  CMatrix c(n, p);
  const cplx* pa = a.data().data();
  const cplx* pb = b.data().data();
  cplx* pc = c.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    cplx* crow = pc + i * p;
    for (std::size_t k = 0; k < m; ++k) {
      const cplx aik = pa[i * m + k];
      const cplx* brow = pb + k * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

CMatrix matmul_adj_left(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "matmul_adj_left: row counts differ");
  }
  const std::size_t n = a.cols(), m = a.rows(), p = b.cols();
  CMatrix c(n, p);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const cplx aki = std::conj(a(k, i));
      for (std::size_t j = 0; j < p; ++j) c(i, j) += aki * b(k, j);
    }
  }
  return c;
}

CMatrix adjoint(const CMatrix& a) {
  CMatrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = std::conj(a(i, j));
  return out;
}

CMatrix scale(const CMatrix& a, double s) { return a * s; }

CMatrix gram(const CMatrix& a) {
  const std::size_t n = a.rows(), m = a.cols();
  CMatrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cplx acc = 0.0;
      for (std::size_t k = 0; k < m; ++k) acc += a(i, k) * std::conj(a(j, k));
      out(i, j) = acc;
    }
  }
  return out;
}

CMatrix add_identity(const CMatrix& a, double c) {
  if (!a.is_square()) throw Error(ErrorKind::DimensionMismatch, "add_identity: not square");
  CMatrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) out(i, i) += c;
  return out;
}

cplx trace(const CMatrix& a) {
  if (!a.is_square()) throw Error(ErrorKind::DimensionMismatch, "trace: not square");
  cplx t = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

CMatrix hermitian_part(const CMatrix& a) {
  if (!a.is_square()) throw Error(ErrorKind::DimensionMismatch, "hermitian_part: not square");
  CMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      out(i, j) = 0.5 * (a(i, j) + std::conj(a(j, i)));
  return out;
}

double hermitian_defect(const CMatrix& a) {
  if (!a.is_square()) throw Error(ErrorKind::DimensionMismatch, "hermitian_defect: not square");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i; j < a.cols(); ++j)
      worst = std::max(worst, std::abs(a(i, j) - std::conj(a(j, i))));
  return worst;
}

double max_abs(const CMatrix& a) {
  double m = 0.0;
  for (const auto& z : a.data()) m = std::max(m, std::abs(z));
  return m;
}

double max_abs_diff(const CMatrix& a, const CMatrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

cplx inner(const CMatrix& a, const CMatrix& b) {
  require_same_shape(a, b, "inner");
  cplx acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

}  // namespace beamunfold

#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace beamunfold {

using cplx = std::complex<double>;

/// Dense complex matrix, row-major. A default-constructed matrix is an empty
/// placeholder; every matrix produced by the library has rows, cols >= 1.
class CMatrix {
 public:
  CMatrix() = default;
  CMatrix(std::size_t rows, std::size_t cols);
  /// Validates size and finiteness of `entries`.
  CMatrix(std::size_t rows, std::size_t cols, std::vector<cplx> entries);
  CMatrix(std::initializer_list<std::initializer_list<cplx>> rows);

  static CMatrix identity(std::size_t n);
  static CMatrix scalar(cplx value);
  static CMatrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  cplx& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const cplx& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }
  cplx& operator[](std::size_t i) noexcept { return data_[i]; }
  const cplx& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<cplx> data() noexcept { return data_; }
  std::span<const cplx> data() const noexcept { return data_; }

  bool all_finite() const noexcept;

  CMatrix& operator+=(const CMatrix& other);
  CMatrix& operator-=(const CMatrix& other);
  CMatrix& operator*=(double s) noexcept;
  CMatrix& operator*=(cplx s) noexcept;

  friend bool operator==(const CMatrix& a, const CMatrix& b) noexcept {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<cplx> data_;
};

CMatrix operator+(const CMatrix& a, const CMatrix& b);
CMatrix operator-(const CMatrix& a, const CMatrix& b);
CMatrix operator-(const CMatrix& a);
CMatrix operator*(const CMatrix& a, double s);
CMatrix operator*(double s, const CMatrix& a);
CMatrix operator*(const CMatrix& a, cplx s);

CMatrix matmul(const CMatrix& a, const CMatrix& b);
/// a^H * b without forming a^H.
CMatrix matmul_adj_left(const CMatrix& a, const CMatrix& b);
CMatrix adjoint(const CMatrix& a);
CMatrix scale(const CMatrix& a, double s);
/// a * a^H.
CMatrix gram(const CMatrix& a);
/// a + c*I.
CMatrix add_identity(const CMatrix& a, double c);
cplx trace(const CMatrix& a);
/// (A + A^H) / 2.
CMatrix hermitian_part(const CMatrix& a);

/// Largest entrywise |a_ij - conj(a_ji)|.
double hermitian_defect(const CMatrix& a);
double max_abs(const CMatrix& a);
double max_abs_diff(const CMatrix& a, const CMatrix& b);

/// sum_ij conj(a_ij) b_ij, i.e. tr(a^H b).
cplx inner(const CMatrix& a, const CMatrix& b);

void require_same_shape(const CMatrix& a, const CMatrix& b, const char* where);

}  // namespace beamunfold

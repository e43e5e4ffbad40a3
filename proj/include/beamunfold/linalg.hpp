#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "beamunfold/cmatrix.hpp"

namespace beamunfold::linalg {

/// Symmetry tolerance, scaled by max(1, max|a_ij|).
inline constexpr double kHermitianTol = 1e-10;
inline constexpr double kEigenTol = 1e-9;
inline constexpr std::size_t kEigenMaxIters = 5000;

/// Throws NotHermitian unless `a` is square and Hermitian within kHermitianTol.
void require_hermitian(const CMatrix& a, const char* where);

/// Lower-triangular factor of (A + A^H)/2 after the symmetry check.
class Cholesky {
 public:
  explicit Cholesky(const CMatrix& a);

  std::size_t dim() const noexcept { return factor_.rows(); }
  const CMatrix& factor() const noexcept { return factor_; }

  /// A^{-1} B.
  CMatrix solve(const CMatrix& b) const;
  /// A^{-1}, returned exactly Hermitian.
  CMatrix inverse() const;
  /// ln det A = 2 sum ln l_ii.
  double logdet() const noexcept;

 private:
  CMatrix factor_;
};

CMatrix hermitian_inverse(const CMatrix& a);
double logdet_hermitian_pd(const CMatrix& a);
double frobenius_norm_sq(const CMatrix& a) noexcept;
double frobenius_norm(const CMatrix& a) noexcept;

struct EigenEstimate {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Power iteration for the largest eigenvalue of a Hermitian PSD matrix.
/// Starts from the normalized all-ones vector; when the Rayleigh quotient
/// stalls the iterate is perturbed with seeded noise once to escape an
/// invariant subspace that misses the dominant eigenvector.
EigenEstimate largest_eigenvalue(const CMatrix& a, double tol = kEigenTol,
                                 std::size_t max_iters = kEigenMaxIters,
                                 std::uint64_t seed = 0x9e3779b97f4a7c15ULL);

/// Largest eigenvalue by Householder tridiagonalization followed by Sturm
/// bisection on the resulting real tridiagonal matrix. O(n^3), accurate to a
/// few ulps of the spectral radius.
double largest_eigenvalue_dense(const CMatrix& a);

struct HermitianEig {
  std::vector<double> values;  // ascending
  CMatrix vectors;             // column i belongs to values[i]
};

/// Full eigendecomposition by cyclic complex Jacobi rotations. Throws
/// NotHermitian like the other routines.
HermitianEig hermitian_eig(const CMatrix& a);

}  // namespace beamunfold::linalg

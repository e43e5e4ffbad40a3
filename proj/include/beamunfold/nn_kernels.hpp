#pragma once

#include <span>

#include "beamunfold/cmatrix.hpp"

// Plain-value counterparts of the tape primitives, so layer code written once
// runs both with and without gradient recording.

namespace beamunfold {

/// max(Re x, 0) + i max(Im x, 0).
cplx complex_relu(cplx x) noexcept;
CMatrix complex_relu(const CMatrix& a);
/// Entrywise real part (imaginary parts set to zero).
CMatrix real_part(const CMatrix& a);
/// log(1 + exp(x)) of the real part of a 1x1 matrix.
double softplus(double x) noexcept;
double logistic(double x) noexcept;
CMatrix softplus(const CMatrix& a);
/// Column vector of all entries, inputs in order, each row-major.
CMatrix flatten_concat(std::span<const CMatrix> parts);
/// Entrywise sum of equally shaped matrices, accumulated left to right.
CMatrix sum(std::span<const CMatrix> parts);
/// v + dir / lambda; lambda <= 0 leaves v unchanged.
CMatrix step_towards(const CMatrix& v, const CMatrix& dir, double lambda);
CMatrix step_towards(const CMatrix& v, const CMatrix& dir, const CMatrix& lambda);
/// Inverse of (A + A^H)/2 via Cholesky.
CMatrix inverse_hpd(const CMatrix& a);
/// 1x1 matrix holding ln det((A + A^H)/2).
CMatrix logdet_hpd(const CMatrix& a);
/// 1x1 matrix holding the squared Frobenius norm.
CMatrix norm_sq(const CMatrix& a);
/// Relative overshoot tolerated before rescaling; keeps the projection
/// idempotent after rounding.
inline constexpr double kPowerScaleSlack = 1e-12;
/// sqrt(power / sum ||X_k||^2) when that sum exceeds the budget, else 1.
double power_scale_factor(std::span<const CMatrix> parts, double power);

/// 1x1 matrix holding the trace.
CMatrix trace_of(const CMatrix& a);
/// 1 / Re a for a real 1x1 matrix.
CMatrix reciprocal(const CMatrix& a);
/// a scaled by the real 1x1 matrix s.
CMatrix scale(const CMatrix& a, const CMatrix& s);

inline const CMatrix& value_of(const CMatrix& a) noexcept { return a; }

}  // namespace beamunfold

#include "beamunfold/nn_kernels.hpp"

#include <algorithm>
#include <cmath>

#include "beamunfold/error.hpp"
#include "beamunfold/linalg.hpp"

namespace beamunfold {

cplx complex_relu(cplx x) noexcept {
  return {std::max(x.real(), 0.0), std::max(x.imag(), 0.0)};
}

CMatrix complex_relu(const CMatrix& a) {
  CMatrix out = a;
  for (auto& z : out.data()) z = complex_relu(z);
  return out;
}

CMatrix real_part(const CMatrix& a) {
  CMatrix out = a;
  for (auto& z : out.data()) z = {z.real(), 0.0};
  return out;
}

double softplus(double x) noexcept {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

CMatrix softplus(const CMatrix& a) {
  CMatrix out = a;
  for (auto& z : out.data()) z = {softplus(z.real()), 0.0};
  return out;
}

CMatrix flatten_concat(std::span<const CMatrix> parts) {
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  CMatrix out(n, 1);
  std::size_t pos = 0;
  for (const auto& p : parts)
    for (const auto& z : p.data()) out[pos++] = z;
  return out;
}

CMatrix sum(std::span<const CMatrix> parts) {
  if (parts.empty()) throw Error(ErrorKind::InvalidArgument, "sum of an empty list");
  CMatrix out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out += parts[i];
  return out;
}

CMatrix step_towards(const CMatrix& v, const CMatrix& dir, double lambda) {
  if (!(lambda > 0.0)) return v;
  return v + dir * (1.0 / lambda);
}

CMatrix step_towards(const CMatrix& v, const CMatrix& dir, const CMatrix& lambda) {
  return step_towards(v, dir, lambda[0].real());
}

CMatrix trace_of(const CMatrix& a) { return CMatrix::scalar(trace(a)); }

CMatrix reciprocal(const CMatrix& a) { return CMatrix::scalar(1.0 / a[0].real()); }

CMatrix scale(const CMatrix& a, const CMatrix& s) { return a * s[0].real(); }

CMatrix inverse_hpd(const CMatrix& a) { return linalg::Cholesky(a).inverse(); }

CMatrix logdet_hpd(const CMatrix& a) { return CMatrix::scalar(linalg::Cholesky(a).logdet()); }

CMatrix norm_sq(const CMatrix& a) { return CMatrix::scalar(linalg::frobenius_norm_sq(a)); }

double power_scale_factor(std::span<const CMatrix> parts, double power) {
  double total = 0.0;
  for (const auto& p : parts) total += linalg::frobenius_norm_sq(p);
  return total > power * (1.0 + kPowerScaleSlack) ? std::sqrt(power / total) : 1.0;
}

}  // namespace beamunfold

#include "beamunfold/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "beamunfold/error.hpp"

namespace beamunfold::linalg {

void require_hermitian(const CMatrix& a, const char* where) {
  if (!a.is_square()) {
    throw Error(ErrorKind::DimensionMismatch, std::string(where) + ": matrix is not square");
  }
  const double defect = hermitian_defect(a);
  if (!(defect <= kHermitianTol * std::max(1.0, max_abs(a)))) {
    throw Error(ErrorKind::NotHermitian,
                std::string(where) + ": asymmetry " + std::to_string(defect));
  }
}

Cholesky::Cholesky(const CMatrix& a) {
  require_hermitian(a, "cholesky");
  const std::size_t n = a.rows();
  const CMatrix s = hermitian_part(a);
  factor_ = CMatrix(n, n);
  CMatrix& l = factor_;
  for (std::size_t j = 0; j < n; ++j) {
    double diag = s(j, j).real();
    for (std::size_t k = 0; k < j; ++k) diag -= std::norm(l(j, k));
    if (!(diag > 0.0) || !std::isfinite(diag)) {
      throw Error(ErrorKind::NotPositiveDefinite,
                  "cholesky pivot " + std::to_string(diag) + " at column " + std::to_string(j));
    }
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      cplx acc = s(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * std::conj(l(j, k));
      l(i, j) = acc / ljj;
    }
  }
}

CMatrix Cholesky::solve(const CMatrix& b) const {
  const std::size_t n = dim();
  if (b.rows() != n) throw Error(ErrorKind::ShapeMismatch, "cholesky solve: row mismatch");
  const CMatrix& l = factor_;
  CMatrix x = b;
  const std::size_t m = b.cols();
  // L y = b
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      cplx acc = x(i, c);
      for (std::size_t k = 0; k < i; ++k) acc -= l(i, k) * x(k, c);
      x(i, c) = acc / l(i, i).real();
    }
    // L^H x = y
    for (std::size_t ii = n; ii-- > 0;) {
      cplx acc = x(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) acc -= std::conj(l(k, ii)) * x(k, c);
      x(ii, c) = acc / l(ii, ii).real();
    }
  }
  return x;
}

CMatrix Cholesky::inverse() const {
  return hermitian_part(solve(CMatrix::identity(dim())));
}

double Cholesky::logdet() const noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) acc += std::log(factor_(i, i).real());
  return 2.0 * acc;
}

CMatrix hermitian_inverse(const CMatrix& a) { return Cholesky(a).inverse(); }

double logdet_hermitian_pd(const CMatrix& a) { return Cholesky(a).logdet(); }

double frobenius_norm_sq(const CMatrix& a) noexcept {
  double acc = 0.0;
  for (const auto& z : a.data()) acc += z.real() * z.real() + z.imag() * z.imag();
  return acc;
}

double frobenius_norm(const CMatrix& a) noexcept { return std::sqrt(frobenius_norm_sq(a)); }

namespace {

void matvec(const CMatrix& a, const std::vector<cplx>& x, std::vector<cplx>& y) {
  const std::size_t n = a.rows();
  for (std::size_t i = 0; i < n; ++i) {
    cplx acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += a(i, j) * x[j];
    y[i] = acc;
  }
}

double vnorm(const std::vector<cplx>& x) {
  double acc = 0.0;
  for (const auto& z : x) acc += std::norm(z);
  return std::sqrt(acc);
}

}  // namespace

EigenEstimate largest_eigenvalue(const CMatrix& a, double tol, std::size_t max_iters,
                                 std::uint64_t seed) {
  if (!a.is_square()) throw Error(ErrorKind::DimensionMismatch, "largest_eigenvalue: not square");
  require_hermitian(a, "largest_eigenvalue");
  if (!(tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "largest_eigenvalue: tol must be > 0");

  const std::size_t n = a.rows();
  const CMatrix s = hermitian_part(a);
  std::vector<cplx> v(n, cplx(1.0 / std::sqrt(static_cast<double>(n)), 0.0));
  std::vector<cplx> w(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  bool perturbed = false;

  auto perturb = [&](double magnitude) {
    for (auto& z : v) z += magnitude * cplx(normal(rng), normal(rng));
    const double nv = vnorm(v);
    for (auto& z : v) z /= nv;
  };

  EigenEstimate est;
  double previous = 0.0;
  bool have_previous = false;
  for (std::size_t it = 0; it < max_iters; ++it) {
    matvec(s, v, w);
    const double nw = vnorm(w);
    est.iterations = it + 1;
    if (nw == 0.0) {
      if (!perturbed) {
        perturbed = true;
        perturb(1.0);
        have_previous = false;
        continue;
      }
      // v and a seeded random vector both annihilated: treat A as zero.
      est.value = 0.0;
      est.converged = max_abs(s) == 0.0;
      return est;
    }
    // Rayleigh quotient of the current iterate (v has unit norm).
    double rq = 0.0;
    for (std::size_t i = 0; i < n; ++i) rq += (std::conj(v[i]) * w[i]).real();
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
    est.value = std::max(est.value, rq);
    if (have_previous && std::abs(rq - previous) <= tol * std::abs(rq)) {
      if (perturbed) {
        est.converged = true;
        return est;
      }
      perturbed = true;
      perturb(1e-3);
      have_previous = false;
      continue;
    }
    previous = rq;
    have_previous = true;
  }
  est.converged = false;
  return est;
}

double largest_eigenvalue_dense(const CMatrix& a) {
  require_hermitian(a, "largest_eigenvalue_dense");
  const std::size_t n = a.rows();
  CMatrix m = hermitian_part(a);
  std::vector<double> diag(n), off(n > 1 ? n - 1 : 0);
  std::vector<cplx> v(n), p(n), w(n);

  for (std::size_t k = 0; k + 2 < n; ++k) {
    const std::size_t len = n - k - 1;
    double xnorm = 0.0;
    for (std::size_t i = 0; i < len; ++i) xnorm += std::norm(m(k + 1 + i, k));
    xnorm = std::sqrt(xnorm);
    if (xnorm == 0.0) {
      off[k] = 0.0;
      continue;
    }
    const cplx x0 = m(k + 1, k);
    const cplx phase = std::abs(x0) > 0.0 ? x0 / std::abs(x0) : cplx(1.0, 0.0);
    const cplx alpha = -phase * xnorm;
    for (std::size_t i = 0; i < len; ++i) v[i] = m(k + 1 + i, k);
    v[0] -= alpha;
    double vn = 0.0;
    for (std::size_t i = 0; i < len; ++i) vn += std::norm(v[i]);
    vn = std::sqrt(vn);
    if (vn == 0.0) {
      off[k] = std::abs(alpha);
      continue;
    }
    for (std::size_t i = 0; i < len; ++i) v[i] /= vn;
    // Trailing block update A22 <- H A22 H with H = I - 2 v v^H.
    for (std::size_t i = 0; i < len; ++i) {
      cplx acc = 0.0;
      for (std::size_t j = 0; j < len; ++j) acc += m(k + 1 + i, k + 1 + j) * v[j];
      p[i] = acc;
    }
    double beta = 0.0;
    for (std::size_t i = 0; i < len; ++i) beta += (std::conj(v[i]) * p[i]).real();
    for (std::size_t i = 0; i < len; ++i) w[i] = p[i] - beta * v[i];
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        m(k + 1 + i, k + 1 + j) -= 2.0 * (v[i] * std::conj(w[j]) + w[i] * std::conj(v[j]));
      }
    }
    off[k] = std::abs(alpha);
  }
  for (std::size_t i = 0; i < n; ++i) diag[i] = m(i, i).real();
  if (n >= 2) off[n - 2] = std::abs(m(n - 1, n - 2));
  if (n == 1) return diag[0];

  // Gershgorin bracket.
  double lo = diag[0], hi = diag[0];
  for (std::size_t i = 0; i < n; ++i) {
    const double r = (i > 0 ? off[i - 1] : 0.0) + (i + 1 < n ? off[i] : 0.0);
    lo = std::min(lo, diag[i] - r);
    hi = std::max(hi, diag[i] + r);
  }
  const double scale = std::max(std::abs(lo), std::abs(hi));
  if (scale == 0.0) return 0.0;
  const double pivmin = std::numeric_limits<double>::min() * std::max(1.0, scale * scale);
  std::vector<double> off2(off.size());
  for (std::size_t i = 0; i < off.size(); ++i) off2[i] = off[i] * off[i];

  // Number of eigenvalues strictly below x (Sturm sequence via LDL^T).
  auto count_below = [&](double x) {
    std::size_t count = 0;
    double q = diag[0] - x;
    if (std::abs(q) < pivmin) q = -pivmin;
    if (q < 0.0) ++count;
    for (std::size_t i = 1; i < n; ++i) {
      q = diag[i] - x - off2[i - 1] / q;
      if (std::abs(q) < pivmin) q = -pivmin;
      if (q < 0.0) ++count;
    }
    return count;
  };

  lo -= 1e-14 * scale;
  hi += 1e-14 * scale;
  for (int it = 0; it < 200 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * scale;
       ++it) {
    const double mid = 0.5 * (lo + hi);
    if (count_below(mid) == n) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

HermitianEig hermitian_eig(const CMatrix& a) {
  require_hermitian(a, "hermitian_eig");
  const std::size_t n = a.rows();
  CMatrix m = hermitian_part(a);
  CMatrix v = CMatrix::identity(n);
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c)
        if (r != c) s += std::norm(m(r, c));
    return s;
  };
  const double total = frobenius_norm_sq(m);
  for (int sweep = 0; sweep < 100 && off_norm() > 1e-32 * total; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double g = std::abs(m(p, q));
        if (g == 0.0) continue;
        // Phase D = diag(1, conj(e)) makes the pivot real, then a real rotation.
        const cplx e = m(p, q) / g;
        const double app = m(p, p).real(), aqq = m(q, q).real();
        const double tau = (aqq - app) / (2.0 * g);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t), s = t * c;
        const cplx gpp = c, gpq = s, gqp = -s * std::conj(e), gqq = c * std::conj(e);
        for (std::size_t k = 0; k < n; ++k) {
          const cplx xp = m(k, p), xq = m(k, q);
          m(k, p) = xp * gpp + xq * gqp;
          m(k, q) = xp * gpq + xq * gqq;
          const cplx vp = v(k, p), vq = v(k, q);
          v(k, p) = vp * gpp + vq * gqp;
          v(k, q) = vp * gpq + vq * gqq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const cplx xp = m(p, k), xq = m(q, k);
          m(p, k) = std::conj(gpp) * xp + std::conj(gqp) * xq;
          m(q, k) = std::conj(gpq) * xp + std::conj(gqq) * xq;
        }
        m(p, q) = m(q, p) = 0.0;
        m(p, p) = m(p, p).real();
        m(q, q) = m(q, q).real();
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return m(x, x).real() < m(y, y).real(); });
  HermitianEig out;
  out.vectors = CMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values.push_back(m(order[j], order[j]).real());
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, j) = v(r, order[j]);
  }
  return out;
}

}  // namespace beamunfold::linalg

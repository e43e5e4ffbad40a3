#include "beamunfold/objective.hpp"

#include <string>

#include "beamunfold/error.hpp"
#include "beamunfold/layer.hpp"
#include "beamunfold/linalg.hpp"

namespace beamunfold {

namespace {

[[noreturn]] void shape_error(const std::string& what) {
  throw Error(ErrorKind::ShapeMismatch, what);
}

std::size_t cell_of(const NetworkConfig& cfg, std::size_t u) { return u / cfg.K; }

void require_user_list(const NetworkConfig& cfg, std::size_t n, std::size_t rows,
                       std::size_t cols, std::span<const CMatrix> list, const char* name) {
  if (list.size() != n) shape_error(std::string(name) + ": wrong number of matrices");
  for (const auto& m : list)
    if (m.rows() != rows || m.cols() != cols) shape_error(std::string(name) + ": wrong shape");
  (void)cfg;
}

}  // namespace

void require_shapes(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v) {
  if (ch.L != cfg.L || ch.K != cfg.K || ch.H.size() != cfg.users() * cfg.L)
    shape_error("channel tensor does not match the configuration");
  for (const auto& h : ch.H)
    if (h.rows() != cfg.Nr || h.cols() != cfg.Nt) shape_error("channel matrix is not Nr x Nt");
  require_user_list(cfg, cfg.users(), cfg.Nt, cfg.d, v, "beamformers");
}

double cell_power(const NetworkConfig& cfg, const BeamformerSet& v, std::size_t cell) {
  double total = 0.0;
  for (std::size_t k = 0; k < cfg.K; ++k) total += linalg::frobenius_norm_sq(v[cfg.user(cell, k)]);
  return total;
}

bool is_feasible(const NetworkConfig& cfg, const BeamformerSet& v, double slack) {
  for (std::size_t l = 0; l < cfg.L; ++l)
    if (!(cell_power(cfg, v, l) <= cfg.power[l] * (1.0 + slack))) return false;
  return true;
}

CMatrix interference_cov_F(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v,
                           std::size_t user) {
  require_shapes(ch, cfg, v);
  CMatrix f(cfg.Nr, cfg.Nr);
  for (std::size_t j = 0; j < cfg.users(); ++j) {
    if (j == user) continue;
    f += gram(matmul(ch.at(user, cell_of(cfg, j)), v[j]));
  }
  return add_identity(f, cfg.noise);
}

CMatrix total_cov_D(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v,
                    std::size_t user) {
  CMatrix d = interference_cov_F(ch, cfg, v, user);
  d += gram(matmul(ch.at(user, cell_of(cfg, user)), v[user]));
  return d;
}

double user_rate(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v,
                 std::size_t user) {
  const CMatrix f = interference_cov_F(ch, cfg, v, user);
  const CMatrix s = matmul(ch.at(user, cell_of(cfg, user)), v[user]);
  const CMatrix gamma = herm(matmul(adjoint(s), linalg::Cholesky(f).solve(s)));
  return linalg::logdet_hermitian_pd(add_identity(gamma, 1.0));
}

std::vector<double> user_rates(const ChannelSet& ch, const NetworkConfig& cfg,
                               const BeamformerSet& v) {
  require_shapes(ch, cfg, v);
  const PlainLift lift;
  const auto lc = lift_channels<CMatrix>(ch, lift);
  LayerState<CMatrix> st;
  compute_gamma(cfg, lc, v, lift, st);
  std::vector<double> out;
  out.reserve(cfg.users());
  for (const auto& r : rates_from_state(st)) out.push_back(r[0].real());
  return out;
}

double weighted_sum(const NetworkConfig& cfg, std::span<const double> rates) {
  double total = 0.0;
  for (std::size_t u = 0; u < rates.size(); ++u) total += cfg.weights[u] * rates[u];
  return total;
}

double wsr(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v) {
  const auto r = user_rates(ch, cfg, v);
  return weighted_sum(cfg, r);
}

CMatrix lambda_matrix(const ChannelSet& ch, const NetworkConfig& cfg, const CMatrix& y,
                      const CMatrix& gamma, std::size_t user) {
  const CMatrix& h = ch.at(user, cell_of(cfg, user));
  if (y.rows() != h.rows() || gamma.rows() != y.cols() || !gamma.is_square())
    shape_error("lambda_matrix: Y or Gamma has the wrong shape");
  return scale(matmul(adjoint(h), matmul(y, add_identity(gamma, 1.0))), cfg.weights[user]);
}

CMatrix weighted_covariance(const NetworkConfig& cfg, const CMatrix& y, const CMatrix& gamma,
                            std::size_t user) {
  if (gamma.rows() != y.cols() || !gamma.is_square())
    shape_error("weighted_covariance: Gamma has the wrong shape");
  return scale(matmul(y, matmul(add_identity(gamma, 1.0), adjoint(y))), cfg.weights[user]);
}

CMatrix gram_L_from_covariances(const ChannelSet& ch, std::span<const CMatrix> c,
                                std::size_t cell) {
  const std::size_t users = static_cast<std::size_t>(ch.L) * ch.K;
  if (c.size() != users) shape_error("gram_L: one covariance per user required");
  const std::size_t nt = ch.at(0, cell).cols();
  CMatrix out(nt, nt);
  for (std::size_t q = 0; q < users; ++q) {
    const CMatrix& h = ch.at(q, cell);
    out += matmul_adj_left(h, matmul(c[q], h));
  }
  return hermitian_part(out);
}

CMatrix gram_L(const ChannelSet& ch, const NetworkConfig& cfg, std::span<const CMatrix> y,
               std::span<const CMatrix> gamma, std::size_t cell) {
  require_user_list(cfg, cfg.users(), cfg.Nr, cfg.d, y, "gram_L Y");
  require_user_list(cfg, cfg.users(), cfg.d, cfg.d, gamma, "gram_L Gamma");
  std::vector<CMatrix> c;
  c.reserve(cfg.users());
  for (std::size_t u = 0; u < cfg.users(); ++u) c.push_back(weighted_covariance(cfg, y[u], gamma[u], u));
  return gram_L_from_covariances(ch, c, cell);
}

double f_q_eval(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v,
                std::span<const CMatrix> gamma, std::span<const CMatrix> y) {
  require_shapes(ch, cfg, v);
  require_user_list(cfg, cfg.users(), cfg.Nr, cfg.d, y, "f_q Y");
  require_user_list(cfg, cfg.users(), cfg.d, cfg.d, gamma, "f_q Gamma");
  double total = 0.0;
  for (std::size_t u = 0; u < cfg.users(); ++u) {
    const double w = cfg.weights[u];
    const CMatrix lam = lambda_matrix(ch, cfg, y[u], gamma[u], u);
    const CMatrix d = total_cov_D(ch, cfg, v, u);
    const CMatrix ig = add_identity(gamma[u], 1.0);
    double term = 2.0 * inner(v[u], lam).real();
    term -= w * trace(matmul(matmul_adj_left(y[u], matmul(d, y[u])), ig)).real();
    term += w * linalg::logdet_hermitian_pd(ig);
    term -= w * trace(gamma[u]).real();
    total += term;
  }
  return total;
}

double f_n_eval(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v,
                std::span<const CMatrix> gamma, std::span<const CMatrix> y,
                std::span<const CMatrix> z, std::span<const double> lambda) {
  require_shapes(ch, cfg, v);
  require_user_list(cfg, cfg.users(), cfg.Nr, cfg.d, y, "f_n Y");
  require_user_list(cfg, cfg.users(), cfg.d, cfg.d, gamma, "f_n Gamma");
  require_user_list(cfg, cfg.users(), cfg.Nt, cfg.d, z, "f_n Z");
  const bool per_user = lambda.size() == cfg.users();
  if (!per_user && lambda.size() != cfg.L)
    shape_error("f_n: lambda must have one value per user or per cell");
  for (double l : lambda)
    if (!(l > 0.0)) throw Error(ErrorKind::NonPositiveStepsize, "f_n: lambda must be positive");

  std::vector<CMatrix> lcell;
  lcell.reserve(cfg.L);
  for (std::size_t l = 0; l < cfg.L; ++l) lcell.push_back(gram_L(ch, cfg, y, gamma, l));

  double total = 0.0;
  for (std::size_t u = 0; u < cfg.users(); ++u) {
    const std::size_t cell = cell_of(cfg, u);
    const double lam_u = per_user ? lambda[u] : lambda[cell];
    const double w = cfg.weights[u];
    const CMatrix lam = lambda_matrix(ch, cfg, y[u], gamma[u], u);
    const CMatrix lz = matmul(lcell[cell], z[u]);
    const CMatrix ig = add_identity(gamma[u], 1.0);
    double term = 2.0 * inner(v[u], lam).real();
    term += 2.0 * inner(v[u], z[u] * lam_u - lz).real();
    term += inner(z[u], lz - z[u] * lam_u).real();
    term -= lam_u * linalg::frobenius_norm_sq(v[u]);
    term -= w * cfg.noise * trace(matmul(ig, matmul_adj_left(y[u], y[u]))).real();
    term += w * linalg::logdet_hermitian_pd(ig);
    term -= w * trace(gamma[u]).real();
    total += term;
  }
  return total;
}

BeamformerSet power_scale(const NetworkConfig& cfg, const BeamformerSet& v) {
  if (v.size() != cfg.users()) shape_error("power_scale: one matrix per user required");
  BeamformerSet out;
  out.reserve(v.size());
  for (std::size_t l = 0; l < cfg.L; ++l) {
    const std::span<const CMatrix> cell(v.data() + l * cfg.K, cfg.K);
    const double s = power_scale_factor(cell, cfg.power[l]);
    for (const auto& m : cell) out.push_back(s == 1.0 ? m : scale(m, s));
  }
  return out;
}

}  // namespace beamunfold

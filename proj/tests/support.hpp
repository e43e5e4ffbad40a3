#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "beamunfold/channel.hpp"
#include "beamunfold/cmatrix.hpp"
#include "beamunfold/error.hpp"
#include "beamunfold/layer.hpp"
#include "beamunfold/linalg.hpp"
#include "beamunfold/objective.hpp"
#include "beamunfold/random.hpp"

#define CHECK_THROWS_KIND(expr, expected)                  \
  do {                                                     \
    bool thrown_ = false;                                  \
    try {                                                  \
      (void)(expr);                                        \
    } catch (const beamunfold::Error& e_) {                \
      thrown_ = true;                                      \
      CHECK(e_.kind() == (expected));                      \
    }                                                      \
    CHECK(thrown_);                                        \
  } while (0)

namespace testing {

using beamunfold::ChannelSet;
using beamunfold::CMatrix;
using beamunfold::cplx;
using beamunfold::NetworkConfig;

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

inline CMatrix random_matrix(std::uint64_t seed, std::size_t r, std::size_t c) {
  beamunfold::Rng rng(seed);
  return beamunfold::complex_gaussian_matrix(rng, r, c);
}

/// G G^H + shift I, Hermitian positive definite for shift > 0.
inline CMatrix random_hpd(std::uint64_t seed, std::size_t n, double shift = 0.5) {
  return beamunfold::add_identity(beamunfold::gram(random_matrix(seed, n, n)), shift);
}

inline Eigen::MatrixXcd to_eigen(const CMatrix& a) {
  Eigen::MatrixXcd m(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) m(r, c) = a(r, c);
  return m;
}

/// Eigenvalues of a Hermitian matrix from Eigen's self-adjoint solver, ascending.
inline Eigen::VectorXd eigenvalues_oracle(const CMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(to_eigen(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double lambda_max_oracle(const CMatrix& a) {
  return eigenvalues_oracle(a).maxCoeff();
}

/// Every link equal to `h` (Nr x Nt), uniform weights, unit noise.
inline std::pair<NetworkConfig, ChannelSet> constant_instance(std::uint32_t L, std::uint32_t K,
                                                              const CMatrix& h, double power,
                                                              double noise) {
  NetworkConfig cfg;
  cfg.L = L;
  cfg.K = K;
  cfg.Nt = static_cast<std::uint32_t>(h.cols());
  cfg.Nr = static_cast<std::uint32_t>(h.rows());
  cfg.d = 1;
  cfg.weights.assign(cfg.users(), 1.0);
  cfg.power.assign(L, power);
  cfg.noise = noise;
  ChannelSet ch;
  ch.L = L;
  ch.K = K;
  ch.H.assign(cfg.users() * L, h);
  ch.user_positions.assign(cfg.users(), {});
  return {cfg, ch};
}

inline std::pair<NetworkConfig, ChannelSet> scalar_instance(double h = 1.0, double power = 1.0,
                                                            double noise = 1.0) {
  return constant_instance(1, 1, CMatrix::scalar(h), power, noise);
}

/// Rayleigh links (unit variance) with SNR around `snr` per unit power.
inline std::pair<NetworkConfig, ChannelSet> rayleigh_instance(std::uint32_t L, std::uint32_t K,
                                                              std::uint32_t Nt, std::uint32_t Nr,
                                                              std::uint32_t d, std::uint64_t seed,
                                                              double power = 10.0) {
  NetworkConfig cfg = NetworkConfig::make(L, K, Nt, Nr, d);
  cfg.power.assign(L, power);
  cfg.noise = 1.0;
  return {cfg, beamunfold::generate_rayleigh(cfg, seed)};
}

/// Shadowed multicell scenario in the physical units of the desk setup.
inline std::pair<NetworkConfig, ChannelSet> scenario_instance(std::uint32_t L, std::uint32_t K,
                                                              std::uint32_t Nt, std::uint32_t Nr,
                                                              std::uint32_t d,
                                                              std::uint64_t seed) {
  NetworkConfig cfg = NetworkConfig::make(L, K, Nt, Nr, d);
  return {cfg, beamunfold::generate_scenario(cfg, seed)};
}

inline double max_abs_diff_set(const beamunfold::BeamformerSet& a,
                               const beamunfold::BeamformerSet& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, beamunfold::max_abs_diff(a[i], b[i]));
  return m;
}

inline double max_abs_set(const beamunfold::BeamformerSet& a) {
  double m = 0.0;
  for (const auto& x : a) m = std::max(m, beamunfold::max_abs(x));
  return m;
}

/// max_u ||Dir_u - mu_l V_u||_F / ||Lambda_u||_F with mu_l the least-squares
/// multiplier of cell l. Zero at points where the direction is normal to the
/// active power constraint.
inline double projected_stationarity(const ChannelSet& ch, const NetworkConfig& cfg,
                                     const beamunfold::BeamformerSet& v) {
  using namespace beamunfold;
  const PlainLift lift;
  const auto st = layer_state(cfg, lift_channels<CMatrix>(ch, lift), v, lift);
  double worst = 0.0;
  for (std::size_t l = 0; l < cfg.L; ++l) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < cfg.K; ++k) {
      const std::size_t u = cfg.user(l, k);
      num += inner(v[u], st.Dir[u]).real();
      den += linalg::frobenius_norm_sq(v[u]);
    }
    const double mu = den > 0.0 ? num / den : 0.0;
    for (std::size_t k = 0; k < cfg.K; ++k) {
      const std::size_t u = cfg.user(l, k);
      const double lam = linalg::frobenius_norm(st.Lambda[u]);
      if (lam == 0.0) continue;
      worst = std::max(worst, linalg::frobenius_norm(st.Dir[u] - v[u] * mu) / lam);
    }
  }
  return worst;
}

}  // namespace testing

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "beamunfold/linalg.hpp"
#include "beamunfold/objective.hpp"
#include "beamunfold/solvers.hpp"
#include "support.hpp"

using namespace beamunfold;
using testing::rel_err;

namespace {

struct Aux {
  std::vector<CMatrix> Y, Gamma;
};

Aux optimal_aux(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v) {
  Aux a;
  for (std::size_t u = 0; u < cfg.users(); ++u) {
    a.Y.push_back(update_Y(ch, cfg, v, u));
    a.Gamma.push_back(update_Gamma(ch, cfg, v, u));
  }
  return a;
}

/// Random sizes up to L=3, Nt=8, Nr=2, K=3, d=2.
std::pair<NetworkConfig, ChannelSet> random_instance(std::uint64_t s) {
  Rng rng(derive_seed(0xab, s));
  auto pick = [&](std::uint32_t lo, std::uint32_t hi) {
    return std::uniform_int_distribution<std::uint32_t>(lo, hi)(rng);
  };
  const std::uint32_t L = pick(1, 3), K = pick(1, 3), d = pick(1, 2);
  const std::uint32_t Nr = pick(d, 2), Nt = pick(Nr, 8);
  if (s % 2 == 0) return testing::scenario_instance(L, K, Nt, Nr, d, s);
  return testing::rayleigh_instance(L, K, Nt, Nr, d, s);
}

}  // namespace

TEST_CASE("interference covariance examples") {
  {
    const auto [cfg, ch] = testing::rayleigh_instance(1, 1, 3, 2, 1, 1);
    const BeamformerSet v = initial_beamformers(cfg, 2);
    CHECK(max_abs_diff(interference_cov_F(ch, cfg, v, 0), scale(CMatrix::identity(2), cfg.noise)) == 0.0);
  }
  {
    const auto [cfg, ch] = testing::rayleigh_instance(2, 2, 3, 2, 1, 1);
    const BeamformerSet v(cfg.users(), CMatrix(3, 1));
    for (std::size_t u = 0; u < cfg.users(); ++u)
      CHECK(max_abs_diff(interference_cov_F(ch, cfg, v, u), CMatrix::identity(2)) == 0.0);
  }
  {
    const auto [cfg, ch] = testing::constant_instance(1, 2, CMatrix::scalar(1.0), 1.0, 1.0);
    const BeamformerSet v{CMatrix::scalar(1.0), CMatrix::scalar(1.0)};
    CHECK(interference_cov_F(ch, cfg, v, 0)[0] == cplx(2.0, 0.0));
  }
}

TEST_CASE("interference covariance agrees with a direct double sum") {
  const auto [cfg, ch] = testing::rayleigh_instance(3, 2, 4, 2, 2, 6);
  const BeamformerSet v = initial_beamformers(cfg, 1);
  for (std::size_t u = 0; u < cfg.users(); ++u) {
    CMatrix f = scale(CMatrix::identity(2), cfg.noise);
    for (std::size_t i = 0; i < cfg.L; ++i)
      for (std::size_t j = 0; j < cfg.K; ++j) {
        const std::size_t q = cfg.user(i, j);
        if (q == u) continue;
        const CMatrix hv = matmul(ch.at(u, i), v[q]);
        f += matmul(hv, adjoint(hv));
      }
    CHECK(max_abs_diff(interference_cov_F(ch, cfg, v, u), f) <= 1e-12 * max_abs(f));
  }
}

TEST_CASE("total covariance examples") {
  const auto [cfg, ch] = testing::scalar_instance();
  CHECK(total_cov_D(ch, cfg, {CMatrix::scalar(0.0)}, 0)[0] == cplx(1.0, 0.0));
  CHECK(total_cov_D(ch, cfg, {CMatrix::scalar(1.0)}, 0)[0] == cplx(2.0, 0.0));

  const auto [c2, h2] = testing::rayleigh_instance(2, 2, 5, 2, 1, 4);
  const BeamformerSet v = initial_beamformers(c2, 5);
  for (std::size_t u = 0; u < c2.users(); ++u) {
    const CMatrix diff = total_cov_D(h2, c2, v, u) - interference_cov_F(h2, c2, v, u);
    const auto ev = testing::eigenvalues_oracle(hermitian_part(diff));
    CHECK(ev.minCoeff() >= -1e-12 * ev.maxCoeff());
    int rank = 0;
    for (int i = 0; i < ev.size(); ++i) rank += ev[i] > 1e-10 * ev.maxCoeff() ? 1 : 0;
    CHECK(rank <= static_cast<int>(c2.d));
  }
}

TEST_CASE("shape checks") {
  const auto [cfg, ch] = testing::rayleigh_instance(1, 2, 3, 2, 1, 1);
  BeamformerSet v = initial_beamformers(cfg, 2);
  v[1] = CMatrix(2, 1);
  CHECK_THROWS_KIND(interference_cov_F(ch, cfg, v, 0), ErrorKind::ShapeMismatch);
  v.pop_back();
  CHECK_THROWS_KIND(wsr(ch, cfg, v), ErrorKind::ShapeMismatch);
  CHECK_THROWS_KIND(lambda_matrix(ch, cfg, CMatrix(3, 1), CMatrix(1, 1), 0), ErrorKind::ShapeMismatch);
}

TEST_CASE("user rate examples") {
  const auto [cfg, ch] = testing::scalar_instance();
  CHECK(user_rate(ch, cfg, {CMatrix::scalar(1.0)}, 0) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK(user_rate(ch, cfg, {CMatrix::scalar(0.0)}, 0) == 0.0);

  const auto [c2, h2] = testing::rayleigh_instance(1, 2, 2, 1, 1, 21);
  const BeamformerSet v = initial_beamformers(c2, 22);
  for (std::size_t u = 0; u < 2; ++u) {
    const double oracle = linalg::logdet_hermitian_pd(total_cov_D(h2, c2, v, u)) -
                          linalg::logdet_hermitian_pd(interference_cov_F(h2, c2, v, u));
    CHECK(rel_err(user_rate(h2, c2, v, u), oracle) <= 1e-12);
    CHECK(rel_err(user_rates(h2, c2, v)[u], oracle) <= 1e-12);
  }
}

TEST_CASE("weighted sum-rate examples") {
  auto [cfg, ch] = testing::rayleigh_instance(2, 2, 3, 2, 1, 9);
  const BeamformerSet v = initial_beamformers(cfg, 3);
  const auto r = user_rates(ch, cfg, v);
  double total = 0.0;
  for (double x : r) total += x;
  CHECK(rel_err(wsr(ch, cfg, v), total) <= 1e-14);
  cfg.weights.assign(cfg.users(), 0.0);
  CHECK(wsr(ch, cfg, v) == 0.0);

  auto [c1, h1] = testing::rayleigh_instance(1, 1, 3, 2, 1, 9);
  const BeamformerSet v1 = initial_beamformers(c1, 3);
  const double base = user_rate(h1, c1, v1, 0);
  c1.weights = {2.0};
  CHECK(wsr(h1, c1, v1) == 2.0 * base);
}

TEST_CASE("lambda matrix examples") {
  const auto [cfg, ch] = testing::scalar_instance();
  CHECK(lambda_matrix(ch, cfg, CMatrix::scalar(0.5), CMatrix::scalar(1.0), 0)[0] == cplx(1.0, 0.0));
  CHECK(max_abs(lambda_matrix(ch, cfg, CMatrix::scalar(0.0), CMatrix::scalar(1.0), 0)) == 0.0);
  const auto [c2, h2] = testing::rayleigh_instance(1, 2, 4, 2, 2, 3);
  const CMatrix y = testing::random_matrix(4, 2, 2);
  const CMatrix expect = scale(matmul(adjoint(h2.at(1, 0)), y), c2.weights[1]);
  CHECK(max_abs_diff(lambda_matrix(h2, c2, y, CMatrix(2, 2), 1), expect) <= 1e-15 * max_abs(expect));
}

TEST_CASE("gram L examples") {
  const auto [cfg, ch] = testing::scalar_instance();
  const std::vector<CMatrix> y{CMatrix::scalar(0.5)}, g{CMatrix::scalar(1.0)};
  CHECK(gram_L(ch, cfg, y, g, 0)[0] == cplx(0.5, 0.0));
  const std::vector<CMatrix> y0{CMatrix::scalar(0.0)};
  CHECK(max_abs(gram_L(ch, cfg, y0, g, 0)) == 0.0);

  const auto [c2, h2] = testing::rayleigh_instance(3, 3, 8, 2, 2, 12);
  const BeamformerSet v = initial_beamformers(c2, 13);
  const Aux a = optimal_aux(h2, c2, v);
  for (std::size_t l = 0; l < c2.L; ++l) {
    const CMatrix L = gram_L(h2, c2, a.Y, a.Gamma, l);
    CHECK(hermitian_defect(L) == 0.0);
    const double scale_ = testing::lambda_max_oracle(L);
    double min_rq = std::numeric_limits<double>::infinity();
    for (std::uint64_t t = 0; t < 100; ++t) {
      const CMatrix x = testing::random_matrix(900 + t, 8, 1);
      min_rq = std::min(min_rq, inner(x, matmul(L, x)).real() / linalg::frobenius_norm_sq(x));
    }
    CHECK(min_rq >= -1e-10 * scale_);
  }
}

TEST_CASE("gram L agrees with the explicit double sum") {
  const auto [cfg, ch] = testing::rayleigh_instance(2, 2, 4, 2, 1, 14);
  const BeamformerSet v = initial_beamformers(cfg, 15);
  const Aux a = optimal_aux(ch, cfg, v);
  for (std::size_t l = 0; l < cfg.L; ++l) {
    CMatrix expect(4, 4);
    for (std::size_t q = 0; q < cfg.users(); ++q) {
      const CMatrix hy = matmul(adjoint(ch.at(q, l)), a.Y[q]);
      expect += scale(matmul(hy, matmul(add_identity(a.Gamma[q], 1.0), adjoint(hy))), cfg.weights[q]);
    }
    CHECK(max_abs_diff(gram_L(ch, cfg, a.Y, a.Gamma, l), expect) <= 1e-12 * max_abs(expect));
  }
}

TEST_CASE("f_q examples") {
  const auto [cfg, ch] = testing::scalar_instance();
  const std::vector<CMatrix> y{CMatrix::scalar(0.5)}, g{CMatrix::scalar(1.0)};
  CHECK(f_q_eval(ch, cfg, {CMatrix::scalar(1.0)}, g, y) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  // Off the optimum: Y = 1, Gamma = 1/2 gives 3 - 3 + ln 1.5 - 0.5.
  const std::vector<CMatrix> y1{CMatrix::scalar(1.0)}, g1{CMatrix::scalar(0.5)};
  CHECK(f_q_eval(ch, cfg, {CMatrix::scalar(1.0)}, g1, y1) ==
        doctest::Approx(std::log(1.5) - 0.5).epsilon(1e-15));
  const std::vector<CMatrix> z{CMatrix::scalar(0.0)};
  CHECK(f_q_eval(ch, cfg, {CMatrix::scalar(0.0)}, z, z) == 0.0);
}

TEST_CASE("f_q equals the sum-rate after the optimal auxiliary updates") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto [cfg, ch] = random_instance(s);
    const BeamformerSet v = initial_beamformers(cfg, s + 1);
    const Aux a = optimal_aux(ch, cfg, v);
    CHECK(rel_err(f_q_eval(ch, cfg, v, a.Gamma, a.Y), wsr(ch, cfg, v)) <= 1e-8);
  }
}

TEST_CASE("f_n examples") {
  const auto [cfg, ch] = testing::rayleigh_instance(2, 2, 4, 2, 1, 40);
  const BeamformerSet v = initial_beamformers(cfg, 41);
  const Aux a = optimal_aux(ch, cfg, v);
  std::vector<double> lam;
  for (std::size_t l = 0; l < cfg.L; ++l)
    lam.push_back(testing::lambda_max_oracle(gram_L(ch, cfg, a.Y, a.Gamma, l)));
  const double fq = f_q_eval(ch, cfg, v, a.Gamma, a.Y);
  CHECK(rel_err(f_n_eval(ch, cfg, v, a.Gamma, a.Y, v, lam), fq) <= 1e-8);

  std::vector<double> bigger = lam;
  for (auto& x : bigger) x *= 1.5;
  CHECK(f_n_eval(ch, cfg, v, a.Gamma, a.Y, v, bigger) <= fq * (1.0 + 1e-12));
  for (std::uint64_t t = 0; t < 10; ++t) {
    const BeamformerSet z = initial_beamformers(cfg, 500 + t);
    CHECK(f_n_eval(ch, cfg, v, a.Gamma, a.Y, z, bigger) <= fq);
    CHECK(f_n_eval(ch, cfg, v, a.Gamma, a.Y, z, lam) <= fq * (1.0 + 1e-12));
  }

  // Per-user stepsizes equal within a cell reproduce the per-cell form.
  std::vector<double> per_user;
  for (std::size_t u = 0; u < cfg.users(); ++u) per_user.push_back(bigger[cfg.cell_of(u)]);
  const BeamformerSet z = initial_beamformers(cfg, 77);
  CHECK(f_n_eval(ch, cfg, v, a.Gamma, a.Y, z, per_user) == f_n_eval(ch, cfg, v, a.Gamma, a.Y, z, bigger));

  const BeamformerSet zero(cfg.users(), CMatrix(4, 1));
  const std::vector<CMatrix> y0(cfg.users(), CMatrix(2, 1)), g0(cfg.users(), CMatrix(1, 1));
  CHECK(f_n_eval(ch, cfg, zero, g0, y0, zero, lam) == 0.0);

  std::vector<double> bad = lam;
  bad[1] = 0.0;
  CHECK_THROWS_KIND(f_n_eval(ch, cfg, v, a.Gamma, a.Y, v, bad), ErrorKind::NonPositiveStepsize);
  CHECK_THROWS_KIND(f_n_eval(ch, cfg, v, a.Gamma, a.Y, v, std::vector<double>{1.0, 1.0, 1.0}),
                    ErrorKind::ShapeMismatch);
}

TEST_CASE("power scale examples") {
  {
    const auto [cfg, ch] = testing::rayleigh_instance(2, 2, 3, 1, 1, 1);
    const BeamformerSet v = initial_beamformers(cfg, 2);
    BeamformerSet small = v;
    for (auto& m : small) m *= 0.5;
    CHECK(power_scale(cfg, small) == small);
  }
  {
    auto [cfg, ch] = testing::scalar_instance(1.0, 1.0);
    const BeamformerSet v{CMatrix::scalar(2.0)};
    CHECK(power_scale(cfg, v)[0][0].real() == doctest::Approx(1.0).epsilon(1e-15));
  }
  {
    auto [cfg, ch] = testing::constant_instance(1, 2, CMatrix::scalar(1.0), 2.0, 1.0);
    const BeamformerSet v{CMatrix::scalar(std::sqrt(3.0)), CMatrix::scalar(cplx(0.0, std::sqrt(3.0)))};
    const auto out = power_scale(cfg, v);
    CHECK(out[0][0].real() == doctest::Approx(std::sqrt(3.0) * std::sqrt(1.0 / 3.0)).epsilon(1e-15));
    CHECK(out[1][0].imag() == doctest::Approx(std::sqrt(3.0) * std::sqrt(1.0 / 3.0)).epsilon(1e-15));
    CHECK(cell_power(cfg, out, 0) == doctest::Approx(2.0).epsilon(1e-15));
  }
}

TEST_CASE("initial beamformers meet every budget exactly") {
  const auto [cfg, ch] = testing::scenario_instance(3, 3, 8, 2, 2, 1);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const BeamformerSet v = initial_beamformers(cfg, s);
    for (std::size_t l = 0; l < cfg.L; ++l) CHECK(rel_err(cell_power(cfg, v, l), cfg.power[l]) <= 1e-14);
    CHECK(is_feasible(cfg, v));
  }
}

TEST_CASE("property: transform-consistency chain on 100 seeded instances") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto [cfg, ch] = random_instance(1000 + s);
    const BeamformerSet v = initial_beamformers(cfg, s);
    const Aux a = optimal_aux(ch, cfg, v);
    const double fo = wsr(ch, cfg, v);
    const double fq = f_q_eval(ch, cfg, v, a.Gamma, a.Y);
    CHECK(rel_err(fq, fo) <= 1e-7);
    std::vector<double> lam;
    for (std::size_t l = 0; l < cfg.L; ++l)
      lam.push_back(linalg::largest_eigenvalue(gram_L(ch, cfg, a.Y, a.Gamma, l)).value);
    CHECK(rel_err(f_n_eval(ch, cfg, v, a.Gamma, a.Y, v, lam), fq) <= 1e-7);
  }
}

TEST_CASE("property: power scaling is idempotent bitwise") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto [cfg, ch] = random_instance(s);
    BeamformerSet v = initial_beamformers(cfg, s);
    for (std::size_t u = 0; u < v.size(); ++u) v[u] *= 0.3 + 0.37 * static_cast<double>((u + s) % 5);
    const auto once = power_scale(cfg, v);
    CHECK(power_scale(cfg, once) == once);
    CHECK(is_feasible(cfg, once));
  }
}

TEST_CASE("property: rates are invariant to a unitary rotation of one user's beamformer") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto [cfg, ch] = testing::rayleigh_instance(2, 2, 4, 2, 2, 300 + s);
    BeamformerSet v = initial_beamformers(cfg, s);
    const double before = wsr(ch, cfg, v);
    const double th = 0.3 + 0.1 * static_cast<double>(s), ph = 1.7 * static_cast<double>(s);
    const cplx e = std::polar(1.0, ph);
    const CMatrix q{{std::cos(th), -std::sin(th) * e}, {std::sin(th) * std::conj(e), std::cos(th)}};
    v[s % v.size()] = matmul(v[s % v.size()], q);
    CHECK(rel_err(wsr(ch, cfg, v), before) <= 1e-9);
  }
}

TEST_CASE("property: evaluators are pure") {
  const auto [cfg, ch] = testing::scenario_instance(3, 3, 8, 2, 1, 5);
  const BeamformerSet v = initial_beamformers(cfg, 6);
  const Aux a = optimal_aux(ch, cfg, v);
  CHECK(wsr(ch, cfg, v) == wsr(ch, cfg, v));
  CHECK(f_q_eval(ch, cfg, v, a.Gamma, a.Y) == f_q_eval(ch, cfg, v, a.Gamma, a.Y));
  const std::vector<double> lam{1.0, 2.0, 3.0};
  CHECK(f_n_eval(ch, cfg, v, a.Gamma, a.Y, v, lam) == f_n_eval(ch, cfg, v, a.Gamma, a.Y, v, lam));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>

#include "beamunfold/autodiff.hpp"
#include "beamunfold/deepfp.hpp"
#include "beamunfold/layer.hpp"
#include "beamunfold/solvers.hpp"
#include "fd.hpp"
#include "support.hpp"

using namespace beamunfold;
using testing::random_hpd;
using testing::random_matrix;

TEST_CASE("record examples") {
  ad::Tape t;
  const CMatrix a = random_matrix(1, 2, 2);
  const std::array<ad::Var, 2> in{t.leaf(a), t.constant(-a)};
  const ad::Var z = t.record(ad::Op::Add, in);
  CHECK(max_abs(z.value()) == 0.0);

  const CMatrix b = random_matrix(2, 2, 3);
  const ad::Var p = ad::matmul(t.constant(CMatrix::identity(2)), t.leaf(b));
  CHECK(p.value() == b);

  const ad::Var r = ad::real_part(t.leaf(CMatrix::scalar(cplx(3.0, 4.0))));
  CHECK(r.value()[0] == cplx(3.0, 0.0));
  CHECK(r.is_real());
}

TEST_CASE("record rejects inconsistent shapes") {
  ad::Tape t;
  const ad::Var a = t.leaf(CMatrix(2, 3));
  CHECK_THROWS_KIND(ad::matmul(a, a), ErrorKind::ShapeMismatch);
  CHECK_THROWS_KIND(a + t.leaf(CMatrix(3, 2)), ErrorKind::ShapeMismatch);
  CHECK_THROWS_KIND(ad::inverse_hpd(a), ErrorKind::ShapeMismatch);
}

TEST_CASE("backward examples") {
  {
    ad::Tape t;
    const ad::Var x = t.leaf(CMatrix::scalar(cplx(1.0, 1.0)));
    const auto g = t.backward(ad::frobenius_norm_sq(x));
    CHECK(g[x][0].real() == doctest::Approx(2.0));
    CHECK(g[x][0].imag() == doctest::Approx(2.0));
  }
  {
    ad::Tape t;
    const double dg[] = {2.0, 4.0};
    const ad::Var a = t.leaf(CMatrix::diagonal(dg));
    const auto g = t.backward(ad::logdet_hpd(a));
    const double inv[] = {0.5, 0.25};
    CHECK(max_abs_diff(g[a], CMatrix::diagonal(inv)) < 1e-15);
  }
}

TEST_CASE("backward requires a real 1x1 root") {
  ad::Tape t;
  const ad::Var a = t.leaf(random_matrix(3, 2, 2));
  CHECK_THROWS_KIND(t.backward(a), ErrorKind::NotScalar);
  const ad::Var c = t.leaf(CMatrix::scalar(cplx(1.0, 2.0)));
  CHECK_THROWS_KIND(t.backward(c), ErrorKind::NotScalar);
  CHECK_NOTHROW(t.backward(ad::real_part(c)));
}

TEST_CASE("unused leaves receive zero adjoints of the right shape") {
  ad::Tape t;
  const ad::Var used = t.leaf(random_matrix(4, 2, 2));
  const ad::Var unused = t.leaf(random_matrix(5, 3, 1));
  const auto g = t.backward(ad::frobenius_norm_sq(used));
  CHECK(g.size() == 2);
  CHECK(g[unused].rows() == 3);
  CHECK(g[unused].cols() == 1);
  CHECK(max_abs(g[unused]) == 0.0);
}

TEST_CASE("grad_check on x^2 at 1.5") {
  const ad::LeafSpec x{CMatrix::scalar(1.5), true};
  const auto rep = ad::grad_check(
      [](ad::Tape&, std::span<const ad::Var> p) { return ad::real_part(ad::matmul(p[0], p[0])); },
      std::span(&x, 1), 1e-5);
  CHECK(rep.max_rel_error <= 1e-9);
  CHECK(rep.components == 1);
}

TEST_CASE("grad_check on complex ReLU composed with norm-sq") {
  const ad::LeafSpec x{CMatrix{{cplx(0.7, -0.4)}, {cplx(-0.3, 1.2)}, {cplx(0.1, 0.5)}}, false};
  const auto rep = ad::grad_check(
      [](ad::Tape&, std::span<const ad::Var> p) {
        return ad::frobenius_norm_sq(ad::complex_relu(p[0]));
      },
      std::span(&x, 1), 1e-6);
  CHECK(rep.max_rel_error <= 1e-6);
  CHECK(rep.components == 6);
}

TEST_CASE("grad_check of inverse and log-det on random PD matrices") {
  for (std::size_t n : {2u, 4u}) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const CMatrix c = random_matrix(70 + s, n, n);
      const std::array<ad::LeafSpec, 1> a{ad::LeafSpec{random_hpd(80 + s, n, 1.0), false}};
      const auto inv = ad::grad_check(
          [&](ad::Tape& t, std::span<const ad::Var> p) {
            return ad::real_part(ad::trace(ad::matmul(t.constant(c), ad::inverse_hpd(ad::hermitian_part(p[0])))));
          },
          a, 1e-6);
      CHECK(inv.max_rel_error <= 1e-5);
      const auto ld = ad::grad_check(
          [](ad::Tape&, std::span<const ad::Var> p) { return ad::logdet_hpd(ad::hermitian_part(p[0])); }, a, 1e-6);
      CHECK(ld.max_rel_error <= 1e-5);
    }
  }
}

TEST_CASE("grad_check over every primitive on a composite expression") {
  const std::array<ad::LeafSpec, 3> p{ad::LeafSpec{random_matrix(11, 3, 2), false},
                                      ad::LeafSpec{random_hpd(12, 3, 1.0), false},
                                      ad::LeafSpec{CMatrix::scalar(0.8), true}};
  const auto rep = ad::grad_check(
      [](ad::Tape&, std::span<const ad::Var> x) {
        const ad::Var y = ad::matmul(ad::inverse_hpd(ad::hermitian_part(x[1])), x[0]);        // 3x2
        const ad::Var g = ad::add_identity(ad::gram(ad::adjoint(y)), 2.0);  // 2x2
        const std::array<ad::Var, 2> parts{y, x[0]};
        const ad::Var flat = ad::flatten_concat(parts);
        const ad::Var s = ad::softplus(ad::real_part(ad::trace(ad::matmul(ad::adjoint(flat), flat))));
        const ad::Var lam = ad::scale(ad::reciprocal(x[2]), s);
        const ad::Var step = ad::step_towards(x[0], y, lam);
        const std::array<ad::Var, 1> cell{step};
        const ad::Var scaled = ad::scale(step, ad::power_scale_factor(cell, 1.5));
        const std::array<ad::Var, 3> terms{ad::logdet_hpd(g), ad::norm_sq(ad::complex_relu(scaled)),
                                           ad::scale(ad::real_part(ad::trace(ad::hermitian_part(x[1]))), 0.1)};
        return ad::sum(terms) - ad::frobenius_norm_sq(y);
      },
      p, 1e-6);
  CHECK(rep.max_rel_error <= 1e-6);
}

TEST_CASE("property: backward is linear in the root") {
  const CMatrix a0 = random_hpd(20, 3, 1.0);
  const CMatrix x0 = random_matrix(21, 3, 2);
  auto grads = [&](double alpha, double beta) {
    ad::Tape t;
    const ad::Var a = t.leaf(a0);
    const ad::Var x = t.leaf(x0);
    const ad::Var f = ad::logdet_hpd(ad::add_identity(ad::gram(ad::adjoint(x)), 1.0));
    const ad::Var g = ad::real_part(ad::trace(ad::matmul(ad::adjoint(x), ad::matmul(ad::inverse_hpd(a), x))));
    const auto res = t.backward(ad::scale(f, alpha) + ad::scale(g, beta));
    return std::make_pair(res[a], res[x]);
  };
  const auto [fa, fx] = grads(1.0, 0.0);
  const auto [ga, gx] = grads(0.0, 1.0);
  const double alpha = 0.7, beta = -2.3;
  const auto [ha, hx] = grads(alpha, beta);
  CHECK(max_abs_diff(ha, fa * alpha + ga * beta) <= 1e-10 * std::max(1.0, max_abs(ha)));
  CHECK(max_abs_diff(hx, fx * alpha + gx * beta) <= 1e-10 * std::max(1.0, max_abs(hx)));
}

TEST_CASE("property: complex ReLU propagates adjoint components behind positive inputs only") {
  const CMatrix x0{{cplx(0.5, -0.5)}, {cplx(-1.0, 2.0)}, {cplx(0.0, 0.0)}, {cplx(3.0, 0.25)}};
  const CMatrix c{{cplx(1.0, 2.0)}, {cplx(3.0, 4.0)}, {cplx(5.0, 6.0)}, {cplx(7.0, 8.0)}};
  ad::Tape t;
  const ad::Var x = t.leaf(x0);
  const auto g = t.backward(ad::real_part(ad::trace(ad::matmul(t.constant(adjoint(c)), ad::complex_relu(x)))));
  for (std::size_t i = 0; i < x0.size(); ++i) {
    CHECK(g[x][i].real() == (x0[i].real() > 0.0 ? c[i].real() : 0.0));
    CHECK(g[x][i].imag() == (x0[i].imag() > 0.0 ? c[i].imag() : 0.0));
  }
}

TEST_CASE("property: gradients are bitwise deterministic") {
  const auto [cfg, ch] = testing::rayleigh_instance(1, 2, 3, 2, 1, 5);
  NetArch arch;
  arch.T = 2;
  arch.Nt = 3;
  const StepsizeNet net = StepsizeNet::initialize(arch, 9);
  const auto v0 = initial_beamformers(cfg, 3);
  const auto a = loss_and_gradient(net, ch, cfg, v0, nullptr, Stage::Unsupervised);
  const auto b = loss_and_gradient(net, ch, cfg, v0, nullptr, Stage::Unsupervised);
  CHECK(a.loss == b.loss);
  CHECK(a.grad == b.grad);
}

TEST_CASE("LOSS2 gradient of a one-layer unroll on a scalar instance matches finite differences") {
  // Two users sharing one scalar link model; with a single user the power
  // scaling removes every dependence on lambda.
  auto [cfg, ch] = testing::constant_instance(1, 2, CMatrix::scalar(1.0), 2.0, 0.5);
  ch.at(0, 0) = CMatrix::scalar(cplx(1.0, 0.2));
  ch.at(1, 0) = CMatrix::scalar(cplx(0.4, -0.5));
  NetArch arch;
  arch.T = 1;
  arch.Nt = 1;
  arch.hidden_width = 4;
  const StepsizeNet net = StepsizeNet::initialize(arch, 17);
  const BeamformerSet v0{CMatrix::scalar(cplx(0.3, 0.2)), CMatrix::scalar(cplx(-0.9, 0.6))};
  double gmax = 0.0;
  for (const cplx& g : loss_and_gradient(net, ch, cfg, v0, nullptr, Stage::Unsupervised).grad)
    gmax = std::max(gmax, std::abs(g));
  CHECK(gmax > 1e-6);
  CHECK(testing::net_fd_error(net, ch, cfg, v0, nullptr, Stage::Unsupervised, 1e-5) <= 1e-5);
}

TEST_CASE("LOSS1 gradient through a T=2 unroll on a 2-user instance matches finite differences") {
  const auto [cfg, ch] = testing::rayleigh_instance(1, 2, 3, 2, 1, 31);
  NetArch arch;
  arch.T = 2;
  arch.Nt = 3;
  arch.hidden_width = 6;
  const StepsizeNet net = StepsizeNet::initialize(arch, 4);
  const auto v0 = initial_beamformers(cfg, 8);
  SolveOptions o;
  o.max_iters = 20;
  const auto label = fastfp_solve(ch, cfg, v0, o).V;
  CHECK(testing::net_fd_error(net, ch, cfg, v0, &label, Stage::Supervised, 1e-6) <= 1e-4);
}

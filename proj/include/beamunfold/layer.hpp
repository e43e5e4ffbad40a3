#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "beamunfold/autodiff.hpp"
#include "beamunfold/channel.hpp"
#include "beamunfold/cmatrix.hpp"
#include "beamunfold/nn_kernels.hpp"

// One FastFP-style iteration written once over the matrix type M, which is
// either CMatrix (plain evaluation) or ad::Var (recorded on a tape). Both
// instantiations call the same kernels in the same order, so their forward
// values agree bit for bit.

namespace beamunfold {

/// Turns plain matrices into M.
struct PlainLift {
  const CMatrix& operator()(const CMatrix& m, bool = false) const noexcept { return m; }
};

struct TapeLift {
  ad::Tape* tape;
  ad::Var operator()(const CMatrix& m, bool real = false) const { return tape->constant(m, real); }
};

template <class M>
struct LiftedChannels {
  std::size_t L = 0;
  std::size_t K = 0;
  std::vector<M> H;   // same indexing as ChannelSet::H
  std::vector<M> Hh;  // conjugate transposes

  std::size_t users() const noexcept { return L * K; }
  const M& at(std::size_t user, std::size_t cell) const { return H[user * L + cell]; }
  const M& adj(std::size_t user, std::size_t cell) const { return Hh[user * L + cell]; }
};

template <class M, class Lift>
LiftedChannels<M> lift_channels(const ChannelSet& ch, const Lift& lift) {
  LiftedChannels<M> out;
  out.L = ch.L;
  out.K = ch.K;
  out.H.reserve(ch.H.size());
  out.Hh.reserve(ch.H.size());
  for (const auto& h : ch.H) {
    out.H.push_back(lift(h));
    out.Hh.push_back(lift(adjoint(h)));
  }
  return out;
}

template <class M>
M herm(const M& a) {
  return scale(a + adjoint(a), 0.5);
}

template <class M>
struct LayerState {
  std::size_t U = 0;
  std::vector<M> HV;  // u*U + j : H_{u, cell(j)} V_j
  std::vector<M> F, D, Gamma, Y, Lambda, C, Dir;

  const M& hv(std::size_t u, std::size_t j) const { return HV[u * U + j]; }
};

/// HV products, interference covariances F and SINR matrices Gamma.
template <class M, class Lift>
void compute_gamma(const NetworkConfig& cfg, const LiftedChannels<M>& ch, const std::vector<M>& V,
                   const Lift& lift, LayerState<M>& st) {
  const std::size_t U = ch.users();
  const std::size_t K = ch.K;
  st.U = U;
  st.HV.clear();
  st.HV.reserve(U * U);
  for (std::size_t u = 0; u < U; ++u)
    for (std::size_t j = 0; j < U; ++j) st.HV.push_back(matmul(ch.at(u, j / K), V[j]));

  st.F.clear();
  st.Gamma.clear();
  const CMatrix zero(cfg.Nr, cfg.Nr);
  for (std::size_t u = 0; u < U; ++u) {
    std::vector<M> parts;
    parts.reserve(U);
    for (std::size_t j = 0; j < U; ++j)
      if (j != u) parts.push_back(gram(st.hv(u, j)));
    if (parts.empty()) parts.push_back(lift(zero));
    M f = add_identity(sum(std::span<const M>(parts)), cfg.noise);
    const M& s = st.hv(u, u);
    st.Gamma.push_back(herm(matmul(adjoint(s), matmul(inverse_hpd(f), s))));
    st.F.push_back(std::move(f));
  }
}

/// D, Y, Lambda, the weighted receive covariances C and the ascent
/// directions Lambda - L V, where L V is applied implicitly through C.
template <class M>
void compute_directions(const NetworkConfig& cfg, const LiftedChannels<M>& ch,
                        const std::vector<M>&, LayerState<M>& st) {
  const std::size_t U = st.U;
  const std::size_t K = ch.K;
  st.D.clear();
  st.Y.clear();
  st.Lambda.clear();
  st.C.clear();
  st.Dir.clear();
  for (std::size_t u = 0; u < U; ++u) {
    const M& s = st.hv(u, u);
    M d = st.F[u] + gram(s);
    M y = matmul(inverse_hpd(d), s);
    const double w = cfg.weights[u];
    M ig = add_identity(st.Gamma[u], 1.0);
    st.Lambda.push_back(scale(matmul(ch.adj(u, u / K), matmul(y, ig)), w));
    st.C.push_back(scale(matmul(y, matmul(ig, adjoint(y))), w));
    st.D.push_back(std::move(d));
    st.Y.push_back(std::move(y));
  }
  for (std::size_t u = 0; u < U; ++u) {
    const std::size_t cell = u / K;
    std::vector<M> parts;
    parts.reserve(U);
    for (std::size_t q = 0; q < U; ++q)
      parts.push_back(matmul(ch.adj(q, cell), matmul(st.C[q], st.hv(q, u))));
    st.Dir.push_back(st.Lambda[u] - sum(std::span<const M>(parts)));
  }
}

template <class M, class Lift>
LayerState<M> layer_state(const NetworkConfig& cfg, const LiftedChannels<M>& ch,
                          const std::vector<M>& V, const Lift& lift) {
  LayerState<M> st;
  compute_gamma(cfg, ch, V, lift, st);
  compute_directions(cfg, ch, V, st);
  return st;
}

/// V + Dir / lambda per user (lambda <= 0 keeps V), then per-cell power scaling.
template <class M>
std::vector<M> apply_update(const NetworkConfig& cfg, const LayerState<M>& st,
                            const std::vector<M>& V, const std::vector<M>& lambda) {
  const std::size_t U = st.U;
  std::vector<M> step;
  step.reserve(U);
  for (std::size_t u = 0; u < U; ++u) {
    if (value_of(lambda[u])[0].real() > 0.0)
      step.push_back(step_towards(V[u], st.Dir[u], lambda[u]));
    else
      step.push_back(V[u]);
  }
  std::vector<M> out;
  out.reserve(U);
  for (std::size_t l = 0; l < cfg.L; ++l) {
    const std::span<const M> cell(step.data() + l * cfg.K, cfg.K);
    const auto s = power_scale_factor(cell, cfg.power[l]);
    for (const M& v : cell) out.push_back(scale(v, s));
  }
  return out;
}

/// Per-user rates ln|I + Gamma| from a state holding Gamma.
template <class M>
std::vector<M> rates_from_state(const LayerState<M>& st) {
  std::vector<M> out;
  out.reserve(st.Gamma.size());
  for (const M& g : st.Gamma) out.push_back(logdet_hpd(add_identity(g, 1.0)));
  return out;
}

/// Complex MLP for one layer: hidden layers with complex ReLU, one output
/// unit, lambda = softplus(Re out) + floor.
inline constexpr double kStepsizeFloor = 1e-6;

template <class M>
struct MlpWeights {
  std::vector<M> W;  // hidden layers then the output row
  std::vector<M> b;

  friend bool operator==(const MlpWeights&, const MlpWeights&) = default;
};

template <class M>
M mlp_stepsize(const MlpWeights<M>& net, const M& v, const M& dir) {
  const std::array<M, 2> in{v, dir};
  M x = flatten_concat(std::span<const M>(in));
  const std::size_t n = net.W.size();
  for (std::size_t i = 0; i + 1 < n; ++i) x = complex_relu(matmul(net.W[i], x) + net.b[i]);
  M out = matmul(net.W[n - 1], x) + net.b[n - 1];
  return add_identity(softplus(real_part(out)), kStepsizeFloor);
}

/// (1/KL) sum ||V_u - V*_u||^2.
template <class M>
M supervised_loss(const std::vector<M>& V, const std::vector<M>& target) {
  std::vector<M> parts;
  parts.reserve(V.size());
  for (std::size_t u = 0; u < V.size(); ++u) parts.push_back(norm_sq(V[u] - target[u]));
  return scale(sum(std::span<const M>(parts)), 1.0 / static_cast<double>(V.size()));
}

/// -(1/KL) sum w_u R_u.
template <class M>
M unsupervised_loss(const NetworkConfig& cfg, const std::vector<M>& rates) {
  std::vector<M> parts;
  parts.reserve(rates.size());
  for (std::size_t u = 0; u < rates.size(); ++u) parts.push_back(scale(rates[u], cfg.weights[u]));
  return scale(sum(std::span<const M>(parts)), -1.0 / static_cast<double>(rates.size()));
}

}  // namespace beamunfold

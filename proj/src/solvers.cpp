#include "beamunfold/solvers.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "beamunfold/error.hpp"
#include "beamunfold/linalg.hpp"
#include "beamunfold/random.hpp"

namespace beamunfold {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
}

double state_wsr(const NetworkConfig& cfg, const LayerState<CMatrix>& st) {
  double total = 0.0;
  const auto r = rates_from_state(st);
  for (std::size_t u = 0; u < r.size(); ++u) total += cfg.weights[u] * r[u][0].real();
  return total;
}

void require_start(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v0) {
  cfg.validate();
  require_shapes(ch, cfg, v0);
  if (!is_feasible(cfg, v0))
    throw Error(ErrorKind::InvalidArgument, "starting beamformers exceed the power budget");
}

bool all_zero(std::span<const CMatrix> ms) {
  for (const auto& m : ms)
    if (max_abs(m) != 0.0) return false;
  return true;
}

}  // namespace

std::string_view to_string(StepsizePolicy p) noexcept {
  switch (p) {
    case StepsizePolicy::Eigen: return "eigen";
    case StepsizePolicy::Power: return "power";
    case StepsizePolicy::Frobenius: return "frobenius";
  }
  return "?";
}

StepsizePolicy parse_stepsize_policy(std::string_view name) {
  if (name == "eigen") return StepsizePolicy::Eigen;
  if (name == "power") return StepsizePolicy::Power;
  if (name == "frobenius") return StepsizePolicy::Frobenius;
  throw Error(ErrorKind::InvalidArgument, "unknown stepsize policy '" + std::string(name) + "'");
}

std::string to_json(const SolveTrace& trace) {
  nlohmann::json j;
  j["algorithm"] = trace.algorithm;
  j["iterations"] = trace.iterations;
  j["converged"] = trace.converged;
  j["initial_wsr_nats"] = trace.initial_wsr;
  j["final_wsr_nats"] = trace.final_wsr();
  j["final_wsr_bits"] = trace.final_wsr() / std::numbers::ln2;
  auto& arr = j["trace"] = nlohmann::json::array();
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const auto& r = trace.records[i];
    nlohmann::json e;
    e["iter"] = i + 1;
    e["wsr_nats"] = r.wsr;
    e["surrogate"] = std::isfinite(r.surrogate) ? nlohmann::json(r.surrogate) : nlohmann::json();
    e["multiplier"] = r.multiplier;
    e["wall_ns"] = r.wall_ns;
    arr.push_back(std::move(e));
  }
  return j.dump();
}

CMatrix update_Y(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v,
                 std::size_t user) {
  const CMatrix d = total_cov_D(ch, cfg, v, user);
  return linalg::Cholesky(d).solve(matmul(ch.at(user, cfg.cell_of(user)), v[user]));
}

CMatrix update_Gamma(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v,
                     std::size_t user) {
  const CMatrix f = interference_cov_F(ch, cfg, v, user);
  const CMatrix s = matmul(ch.at(user, cfg.cell_of(user)), v[user]);
  return herm(matmul(adjoint(s), linalg::Cholesky(f).solve(s)));
}

namespace {

// L = U diag(lambda) U^H with Lambda_k rotated into the eigenbasis. Directions
// with a numerically zero eigenvalue and numerically zero weight are dropped,
// so eta = 0 gives the pseudo-inverse solution on rank-deficient L.
struct EtaSystem {
  linalg::HermitianEig eig;
  std::vector<CMatrix> rotated;  // U^H Lambda_k
  std::vector<double> weight;    // sum_k ||row i of rotated_k||^2
  std::vector<bool> keep;
  bool singular = false;         // a kept direction has zero eigenvalue

  EtaSystem(std::span<const CMatrix> lambda, const CMatrix& L) : eig(linalg::hermitian_eig(L)) {
    const std::size_t n = L.rows();
    const CMatrix uh = adjoint(eig.vectors);
    double mass = 0.0;
    weight.assign(n, 0.0);
    for (const auto& lam : lambda) {
      rotated.push_back(matmul(uh, lam));
      mass += linalg::frobenius_norm_sq(lam);
      const CMatrix& r = rotated.back();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < r.cols(); ++j) weight[i] += std::norm(r(i, j));
    }
    const double top = n == 0 ? 0.0 : std::max(0.0, eig.values.back());
    const double eps = std::numeric_limits<double>::epsilon();
    const double thr = 64.0 * static_cast<double>(n) * eps * top;
    const double wthr = 1e6 * eps * eps * mass;
    keep.assign(n, true);
    for (std::size_t i = 0; i < n; ++i) {
      eig.values[i] = std::max(0.0, eig.values[i]);
      if (eig.values[i] <= thr) {
        eig.values[i] = 0.0;
        if (weight[i] <= wthr) keep[i] = false;
        else singular = true;
      }
    }
  }

  double power(double eta) const {
    if (eta == 0.0 && singular) return std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (std::size_t i = 0; i < weight.size(); ++i) {
      if (!keep[i]) continue;
      const double den = eig.values[i] + eta;
      total += weight[i] / (den * den);
    }
    return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
  }

  CMatrix solve(std::size_t k, double eta) const {
    const std::size_t n = weight.size();
    CMatrix scaled = rotated[k];
    for (std::size_t i = 0; i < n; ++i) {
      const double f = keep[i] ? 1.0 / (eig.values[i] + eta) : 0.0;
      for (std::size_t j = 0; j < scaled.cols(); ++j) scaled(i, j) *= f;
    }
    return matmul(eig.vectors, scaled);
  }

  double bisect(double budget, double tol) const {
    if (power(0.0) <= budget) return 0.0;
    double mass = 0.0;
    for (std::size_t i = 0; i < weight.size(); ++i)
      if (keep[i]) mass += weight[i];
    double lo = 0.0;
    double hi = std::sqrt(mass / budget);
    double p_hi = power(hi);
    for (int doublings = 0; !(p_hi <= budget); ++doublings) {
      if (doublings >= 200)
        throw Error(ErrorKind::BracketFailure, "bisect_eta: no feasible upper bracket");
      lo = hi;
      hi *= 2.0;
      p_hi = power(hi);
    }
    const double target = budget * (1.0 - tol);
    const double eps = std::numeric_limits<double>::epsilon();
    for (int step = 0; step < 2000; ++step) {
      if (p_hi >= target && hi - lo <= 4.0 * eps * hi) break;
      const double mid = 0.5 * (lo + hi);
      if (!(mid > lo && mid < hi)) break;
      const double p = power(mid);
      if (p > budget) {
        lo = mid;
      } else {
        hi = mid;
        p_hi = p;
      }
    }
    return hi;
  }
};

}  // namespace

double eta_power(std::span<const CMatrix> lambda, const CMatrix& L, double eta) {
  linalg::require_hermitian(L, "eta_power");
  return EtaSystem(lambda, L).power(eta);
}

double bisect_eta(std::span<const CMatrix> lambda, const CMatrix& L, double power, double tol) {
  if (!(tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "bisect_eta: tol must be positive");
  if (!(power > 0.0)) throw Error(ErrorKind::InvalidArgument, "bisect_eta: power must be positive");
  linalg::require_hermitian(L, "bisect_eta");
  double mass = 0.0;
  for (const auto& lam : lambda) mass += linalg::frobenius_norm_sq(lam);
  if (mass == 0.0) return 0.0;
  return EtaSystem(lambda, L).bisect(power, tol);
}

std::uint64_t initial_point_seed(std::uint64_t sample_seed) noexcept {
  return derive_seed(sample_seed, 0x5630);
}

BeamformerSet initial_beamformers(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  BeamformerSet v;
  v.reserve(cfg.users());
  for (std::size_t u = 0; u < cfg.users(); ++u)
    v.push_back(complex_gaussian_matrix(rng, cfg.Nt, cfg.d, 1.0));
  for (std::size_t l = 0; l < cfg.L; ++l) {
    const double s = std::sqrt(cfg.power[l] / cell_power(cfg, v, l));
    for (std::size_t k = 0; k < cfg.K; ++k) v[cfg.user(l, k)] *= s;
  }
  return v;
}

std::vector<double> fastfp_stepsizes(const ChannelSet& ch, const NetworkConfig& cfg,
                                     const LayerState<CMatrix>& st, StepsizePolicy policy) {
  std::vector<double> out;
  out.reserve(cfg.L);
  for (std::size_t l = 0; l < cfg.L; ++l) {
    const CMatrix L = gram_L_from_covariances(ch, st.C, l);
    if (max_abs(L) == 0.0) {
      out.push_back(0.0);
      continue;
    }
    switch (policy) {
      case StepsizePolicy::Eigen:
        out.push_back(linalg::largest_eigenvalue_dense(L) * (1.0 + 10.0 * linalg::kEigenTol));
        break;
      case StepsizePolicy::Power:
        out.push_back(linalg::largest_eigenvalue(L).value * (1.0 + 10.0 * linalg::kEigenTol));
        break;
      case StepsizePolicy::Frobenius:
        out.push_back(linalg::frobenius_norm(L));
        break;
    }
  }
  return out;
}

bool has_converged(std::span<const double> h, double tol, std::size_t window) {
  if (window == 0 || h.size() < window + 1) return false;
  for (std::size_t i = h.size() - window; i < h.size(); ++i) {
    const double scale = std::max(std::abs(h[i]), std::abs(h[i - 1]));
    if (!(std::abs(h[i] - h[i - 1]) <= tol * scale)) return false;
  }
  return true;
}

SolveTrace fastfp_solve(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v0,
                        const SolveOptions& opts) {
  require_start(ch, cfg, v0);
  const PlainLift lift;
  const auto lc = lift_channels<CMatrix>(ch, lift);

  SolveTrace trace;
  trace.algorithm = "fastfp";
  BeamformerSet v = v0;
  LayerState<CMatrix> st;
  compute_gamma(cfg, lc, v, lift, st);
  trace.initial_wsr = state_wsr(cfg, st);
  std::vector<double> history{trace.initial_wsr};

  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    const auto t0 = Clock::now();
    compute_directions(cfg, lc, v, st);
    const auto lam = fastfp_stepsizes(ch, cfg, st, opts.policy);
    std::vector<CMatrix> lam_user;
    lam_user.reserve(cfg.users());
    for (std::size_t u = 0; u < cfg.users(); ++u)
      lam_user.push_back(CMatrix::scalar(lam[cfg.cell_of(u)]));
    BeamformerSet next = apply_update(cfg, st, v, lam_user);
    LayerState<CMatrix> nst;
    compute_gamma(cfg, lc, next, lift, nst);
    IterationRecord rec;
    rec.wsr = state_wsr(cfg, nst);
    rec.wall_ns = elapsed_ns(t0);
    rec.multiplier = lam;
    rec.surrogate = std::numeric_limits<double>::quiet_NaN();
    bool positive = true;
    for (double x : lam) positive = positive && x > 0.0;
    if (opts.record_surrogate && positive)
      rec.surrogate = f_n_eval(ch, cfg, next, st.Gamma, st.Y, v, lam);

    trace.records.push_back(std::move(rec));
    history.push_back(trace.records.back().wsr);
    v = std::move(next);
    st = std::move(nst);
    ++trace.iterations;
    if (has_converged(history, opts.tol, opts.window)) {
      trace.converged = true;
      break;
    }
  }
  trace.V = std::move(v);
  return trace;
}

SolveTrace fp_solve(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v0,
                    const SolveOptions& opts) {
  require_start(ch, cfg, v0);
  const PlainLift lift;
  const auto lc = lift_channels<CMatrix>(ch, lift);

  SolveTrace trace;
  trace.algorithm = "fp";
  BeamformerSet v = v0;
  LayerState<CMatrix> st;
  compute_gamma(cfg, lc, v, lift, st);
  trace.initial_wsr = state_wsr(cfg, st);
  std::vector<double> history{trace.initial_wsr};

  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    const auto t0 = Clock::now();
    compute_directions(cfg, lc, v, st);
    BeamformerSet next(cfg.users());
    IterationRecord rec;
    for (std::size_t l = 0; l < cfg.L; ++l) {
      const std::span<const CMatrix> lam(st.Lambda.data() + l * cfg.K, cfg.K);
      const CMatrix L = gram_L_from_covariances(ch, st.C, l);
      if (all_zero(lam)) {
        for (std::size_t k = 0; k < cfg.K; ++k) next[cfg.user(l, k)] = CMatrix(cfg.Nt, cfg.d);
        rec.multiplier.push_back(0.0);
        continue;
      }
      if (!(opts.bisect_tol > 0.0))
        throw Error(ErrorKind::InvalidArgument, "bisect_eta: tol must be positive");
      const EtaSystem sys(lam, L);
      const double eta = sys.bisect(cfg.power[l], opts.bisect_tol);
      for (std::size_t k = 0; k < cfg.K; ++k) next[cfg.user(l, k)] = sys.solve(k, eta);
      rec.multiplier.push_back(eta);
    }
    LayerState<CMatrix> nst;
    compute_gamma(cfg, lc, next, lift, nst);
    rec.wsr = state_wsr(cfg, nst);
    rec.wall_ns = elapsed_ns(t0);
    rec.surrogate = std::numeric_limits<double>::quiet_NaN();
    trace.records.push_back(std::move(rec));
    history.push_back(trace.records.back().wsr);
    v = std::move(next);
    st = std::move(nst);
    ++trace.iterations;
    if (has_converged(history, opts.tol, opts.window)) {
      trace.converged = true;
      break;
    }
  }
  trace.V = std::move(v);
  return trace;
}

SolveTrace wmmse_sc_solve(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v0,
                          const SolveOptions& opts) {
  if (cfg.L != 1)
    throw Error(ErrorKind::MulticellUnsupported, "wmmse-sc is defined for a single cell only");
  require_start(ch, cfg, v0);
  const PlainLift lift;
  const auto lc = lift_channels<CMatrix>(ch, lift);

  SolveTrace trace;
  trace.algorithm = "wmmse-sc";
  BeamformerSet v = v0;
  LayerState<CMatrix> st;
  compute_gamma(cfg, lc, v, lift, st);
  trace.initial_wsr = state_wsr(cfg, st);
  std::vector<double> history{trace.initial_wsr};
  const double p = cfg.power[0];

  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    const auto t0 = Clock::now();
    compute_directions(cfg, lc, v, st);
    IterationRecord rec;
    BeamformerSet next = v;
    if (!all_zero(st.Lambda)) {
      const CMatrix L = gram_L_from_covariances(ch, st.C, 0);
      double mass = 0.0;
      for (const auto& c : st.C) mass += beamunfold::trace(c).real();
      const double eta = cfg.noise * mass / p;
      const linalg::Cholesky chol(add_identity(L, eta));
      for (std::size_t k = 0; k < cfg.K; ++k) next[k] = chol.solve(st.Lambda[k]);
      const double total = cell_power(cfg, next, 0);
      if (total > 0.0) {
        const double s = std::sqrt(p / total);
        for (auto& m : next) m *= s;
      }
      rec.multiplier.push_back(eta);
    } else {
      rec.multiplier.push_back(0.0);
    }
    LayerState<CMatrix> nst;
    compute_gamma(cfg, lc, next, lift, nst);
    rec.wsr = state_wsr(cfg, nst);
    rec.wall_ns = elapsed_ns(t0);
    rec.surrogate = std::numeric_limits<double>::quiet_NaN();
    trace.records.push_back(std::move(rec));
    history.push_back(trace.records.back().wsr);
    v = std::move(next);
    st = std::move(nst);
    ++trace.iterations;
    if (has_converged(history, opts.tol, opts.window)) {
      trace.converged = true;
      break;
    }
  }
  trace.V = std::move(v);
  return trace;
}

}  // namespace beamunfold

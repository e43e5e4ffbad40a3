#include "beamunfold/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

#include "beamunfold/deepfp.hpp"
#include "beamunfold/error.hpp"
#include "beamunfold/layer.hpp"
#include "beamunfold/random.hpp"
#include "beamunfold/solvers.hpp"

namespace beamunfold {

namespace {

using Clock = std::chrono::steady_clock;

/// Keeps the optimizer from discarding a result.
volatile double g_sink = 0.0;

double time_fastfp_iteration(const ChannelSet& ch, const NetworkConfig& cfg,
                             const LiftedChannels<CMatrix>& lc, const BeamformerSet& v,
                             const LayerState<CMatrix>& gamma_state) {
  const PlainLift lift;
  LayerState<CMatrix> st = gamma_state;
  const auto t0 = Clock::now();
  compute_directions(cfg, lc, v, st);
  const auto lam = fastfp_stepsizes(ch, cfg, st, StepsizePolicy::Eigen);
  std::vector<CMatrix> lam_user;
  lam_user.reserve(cfg.users());
  for (std::size_t u = 0; u < cfg.users(); ++u) lam_user.push_back(CMatrix::scalar(lam[cfg.cell_of(u)]));
  const auto next = apply_update(cfg, st, v, lam_user);
  LayerState<CMatrix> nst;
  compute_gamma(cfg, lc, next, lift, nst);
  const auto t1 = Clock::now();
  g_sink = g_sink + nst.Gamma[0][0].real();
  return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
}

double time_deepfp_layer(const StepsizeNet& net, const ChannelSet& ch, const NetworkConfig& cfg,
                         const BeamformerSet& v) {
  const auto t0 = Clock::now();
  const auto r = unfold_forward(net, ch, cfg, v);
  const auto t1 = Clock::now();
  g_sink = g_sink + r.layer_wsr.back();
  return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
}

}  // namespace

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw Error(ErrorKind::InvalidArgument, "slope fit needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

BenchResult run_bench(BenchAlgo algo, std::span<const std::uint32_t> nts, const BenchOptions& opts) {
  if (opts.reps < 1) throw Error(ErrorKind::InvalidArgument, "bench needs at least one repetition");
  BenchResult res;
  res.algo = algo;
  std::vector<double> xs, ys;
  for (const std::uint32_t nt : nts) {
    NetworkConfig cfg = NetworkConfig::make(opts.L, opts.K, nt, opts.Nr, opts.d);
    const ChannelSet ch = generate_scenario(cfg, derive_seed(opts.seed, nt));
    const BeamformerSet v = initial_beamformers(cfg, derive_seed(opts.seed, 0x7630 + nt));
    BenchPoint p;
    p.nt = nt;
    if (algo == BenchAlgo::FastFP) {
      const PlainLift lift;
      const auto lc = lift_channels<CMatrix>(ch, lift);
      LayerState<CMatrix> st;
      compute_gamma(cfg, lc, v, lift, st);
      time_fastfp_iteration(ch, cfg, lc, v, st);
      for (std::size_t r = 0; r < opts.reps; ++r)
        p.samples_ns.push_back(time_fastfp_iteration(ch, cfg, lc, v, st));
    } else {
      NetArch a;
      a.T = 1;
      a.Nt = nt;
      a.d = opts.d;
      const StepsizeNet net = StepsizeNet::initialize(a, derive_seed(opts.seed, 0x6e6574));
      time_deepfp_layer(net, ch, cfg, v);
      for (std::size_t r = 0; r < opts.reps; ++r)
        p.samples_ns.push_back(time_deepfp_layer(net, ch, cfg, v));
    }
    std::vector<double> sorted = p.samples_ns;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    p.median_ns = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    xs.push_back(static_cast<double>(nt));
    ys.push_back(p.median_ns);
    res.points.push_back(std::move(p));
  }
  if (xs.size() >= 2) res.slope = loglog_slope(xs, ys);
  return res;
}

std::string to_json(const BenchResult& r, const BenchOptions& opts) {
  nlohmann::json j;
  j["algorithm"] = r.algo == BenchAlgo::FastFP ? "fastfp" : "deepfp";
  j["scenario"] = {{"L", opts.L}, {"K", opts.K}, {"Nr", opts.Nr}, {"d", opts.d}};
  j["reps"] = opts.reps;
  j["loglog_slope"] = r.slope;
  auto& pts = j["points"] = nlohmann::json::array();
  for (const auto& p : r.points)
    pts.push_back({{"nt", p.nt}, {"median_ns", p.median_ns}, {"samples_ns", p.samples_ns}});
  return j.dump(2);
}

}  // namespace beamunfold

#include "beamunfold/deepfp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "beamunfold/binary_io.hpp"
#include "beamunfold/error.hpp"
#include "beamunfold/linalg.hpp"
#include "beamunfold/parallel.hpp"
#include "beamunfold/random.hpp"
#include "beamunfold/solvers.hpp"

namespace beamunfold {

namespace {

struct LayerShape {
  std::size_t rows;
  std::size_t cols;
};

std::vector<LayerShape> weight_shapes(const NetArch& a) {
  std::vector<LayerShape> out;
  std::size_t in = a.input_width();
  for (std::uint32_t i = 0; i < a.hidden_layers; ++i) {
    out.push_back({a.hidden_width, in});
    in = a.hidden_width;
  }
  out.push_back({1, in});
  return out;
}

void validate_arch(const NetArch& a) {
  if (a.Nt == 0 || a.d == 0) throw Error(ErrorKind::InvalidArgument, "network: Nt and d must be positive");
  if (a.hidden_layers > 0 && a.hidden_width == 0)
    throw Error(ErrorKind::InvalidArgument, "network: hidden width must be positive");
  if (a.scaling != StepsizeScaling::Raw && a.scaling != StepsizeScaling::Trace)
    throw Error(ErrorKind::InvalidArgument, "network: unknown stepsize scaling");
}

void require_width(const NetArch& a, const NetworkConfig& cfg) {
  if (a.Nt != cfg.Nt || a.d != cfg.d)
    throw Error(ErrorKind::WidthMismatch,
                "network was built for Nt=" + std::to_string(a.Nt) + ", d=" + std::to_string(a.d) +
                    " but the data has Nt=" + std::to_string(cfg.Nt) + ", d=" + std::to_string(cfg.d));
}

template <class M>
struct Unrolled {
  std::vector<M> V;
  LayerState<M> last;  // holds Gamma of V
};

/// Runs T layers; predict(tau, state, V) returns the per-user stepsizes and
/// observe(tau, state, lambda, next_state) sees every layer.
template <class M, class Lift, class Predict, class Observe>
Unrolled<M> run_layers(const NetworkConfig& cfg, const LiftedChannels<M>& lc, std::vector<M> v,
                       std::size_t T, const Lift& lift, Predict&& predict, Observe&& observe) {
  LayerState<M> st;
  compute_gamma(cfg, lc, v, lift, st);
  for (std::size_t tau = 0; tau < T; ++tau) {
    compute_directions(cfg, lc, v, st);
    const std::vector<M> lam = predict(tau, st, v);
    v = apply_update(cfg, st, v, lam);
    LayerState<M> next;
    compute_gamma(cfg, lc, v, lift, next);
    observe(tau, st, lam, next);
    st = std::move(next);
  }
  return {std::move(v), std::move(st)};
}

template <class M, class Lift>
std::vector<M> lift_all(const std::vector<CMatrix>& xs, const Lift& lift) {
  std::vector<M> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(lift(x));
  return out;
}

/// H_{q,l} H_{q,l}^H for every (user q, cell l), same indexing as H.
std::vector<CMatrix> channel_grams(const ChannelSet& ch) {
  std::vector<CMatrix> out;
  out.reserve(ch.H.size());
  for (const auto& h : ch.H) out.push_back(gram(h));
  return out;
}

template <class M>
M cell_scale(const NetworkConfig& cfg, const std::vector<M>& grams, const LayerState<M>& st,
             std::size_t cell) {
  std::vector<M> parts;
  parts.reserve(st.U);
  for (std::size_t q = 0; q < st.U; ++q)
    parts.push_back(trace_of(matmul(st.C[q], grams[q * cfg.L + cell])));
  return real_part(sum(std::span<const M>(parts)));
}

/// Network stepsizes for one layer.
template <class M, class Lift>
std::vector<M> network_stepsizes(const NetArch& arch, const MlpWeights<M>& w,
                                 const NetworkConfig& cfg, const std::vector<M>& grams,
                                 const LayerState<M>& st, const std::vector<M>& v,
                                 const Lift& lift) {
  std::vector<M> out;
  out.reserve(st.U);
  if (arch.scaling == StepsizeScaling::Raw) {
    for (std::size_t u = 0; u < st.U; ++u) out.push_back(mlp_stepsize(w, v[u], st.Dir[u]));
    return out;
  }
  for (std::size_t l = 0; l < cfg.L; ++l) {
    const M s = cell_scale(cfg, grams, st, l);
    const double unit = 1.0 / std::sqrt(cfg.power[l]);
    const bool degenerate = !(value_of(s)[0].real() > 0.0);
    for (std::size_t k = 0; k < cfg.K; ++k) {
      const std::size_t u = cfg.user(l, k);
      if (degenerate) {
        out.push_back(lift(CMatrix::scalar(0.0), true));
        continue;
      }
      const M xv = scale(v[u], unit);
      const M xd = scale(scale(st.Dir[u], reciprocal(s)), unit);
      out.push_back(scale(mlp_stepsize(w, xv, xd), s));
    }
  }
  return out;
}

std::vector<double> eigen_stub_values(const ChannelSet& ch, const NetworkConfig& cfg,
                                      std::vector<CMatrix> c) {
  LayerState<CMatrix> tmp;
  tmp.U = cfg.users();
  tmp.C = std::move(c);
  return fastfp_stepsizes(ch, cfg, tmp, StepsizePolicy::Eigen);
}

std::vector<double> lambda_max_values(const ChannelSet& ch, const NetworkConfig& cfg,
                                      std::span<const CMatrix> c) {
  std::vector<double> out;
  for (std::size_t l = 0; l < cfg.L; ++l) {
    const CMatrix L = gram_L_from_covariances(ch, c, l);
    out.push_back(max_abs(L) == 0.0 ? 0.0 : linalg::largest_eigenvalue_dense(L));
  }
  return out;
}

template <class M>
double weighted_rate_sum(const NetworkConfig& cfg, const LayerState<M>& st) {
  const auto r = rates_from_state(st);
  double total = 0.0;
  for (std::size_t u = 0; u < r.size(); ++u) total += cfg.weights[u] * value_of(r[u])[0].real();
  return total;
}

template <class M>
std::vector<double> scalars(const std::vector<M>& xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(value_of(x)[0].real());
  return out;
}

template <class M>
std::vector<CMatrix> values(const std::vector<M>& xs) {
  std::vector<CMatrix> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(value_of(x));
  return out;
}

void require_start(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v0) {
  require_shapes(ch, cfg, v0);
}

}  // namespace

// ---- network ---------------------------------------------------------------

StepsizeNet StepsizeNet::zeros(const NetArch& arch) {
  validate_arch(arch);
  StepsizeNet net;
  net.arch = arch;
  const auto shapes = weight_shapes(arch);
  for (std::uint32_t t = 0; t < arch.T; ++t) {
    MlpWeights<CMatrix> w;
    for (const auto& s : shapes) {
      w.W.emplace_back(s.rows, s.cols);
      w.b.emplace_back(s.rows, 1);
    }
    net.layers.push_back(std::move(w));
  }
  return net;
}

StepsizeNet StepsizeNet::initialize(const NetArch& arch, std::uint64_t seed) {
  StepsizeNet net = zeros(arch);
  Rng rng(seed);
  for (auto& layer : net.layers)
    for (auto& w : layer.W) {
      // complex_gaussian splits the variance evenly over the two components
      const double variance = 2.0 / static_cast<double>(w.cols());
      for (auto& z : w.data()) z = complex_gaussian(rng, variance);
    }
  return net;
}

StepsizeNet adapt_input_width(const StepsizeNet& net, std::uint32_t Nt, std::uint32_t d) {
  NetArch arch = net.arch;
  arch.Nt = Nt;
  arch.d = d;
  StepsizeNet out = net;
  out.arch = arch;
  const std::size_t old_half = static_cast<std::size_t>(net.arch.Nt) * net.arch.d;
  const std::size_t new_half = static_cast<std::size_t>(Nt) * d;
  for (auto& layer : out.layers) {
    const CMatrix& w0 = layer.W.front();
    CMatrix w(w0.rows(), 2 * new_half);
    for (std::size_t r = 0; r < w0.rows(); ++r)
      for (std::size_t half = 0; half < 2; ++half)
        for (std::size_t i = 0; i < std::min(Nt, net.arch.Nt); ++i)
          for (std::size_t j = 0; j < std::min(d, net.arch.d); ++j)
            w(r, half * new_half + i * d + j) = w0(r, half * old_half + i * net.arch.d + j);
    layer.W.front() = std::move(w);
  }
  return out;
}

std::size_t StepsizeNet::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    for (const auto& w : layer.W) n += w.size();
    for (const auto& b : layer.b) n += b.size();
  }
  return n;
}

std::vector<cplx> StepsizeNet::flatten() const {
  std::vector<cplx> out;
  out.reserve(parameter_count());
  for (const auto& layer : layers)
    for (std::size_t i = 0; i < layer.W.size(); ++i) {
      for (const auto& z : layer.W[i].data()) out.push_back(z);
      for (const auto& z : layer.b[i].data()) out.push_back(z);
    }
  return out;
}

void StepsizeNet::assign(std::span<const cplx> params) {
  if (params.size() != parameter_count())
    throw Error(ErrorKind::ShapeMismatch, "parameter vector has the wrong length");
  std::size_t pos = 0;
  for (auto& layer : layers)
    for (std::size_t i = 0; i < layer.W.size(); ++i) {
      for (auto& z : layer.W[i].data()) z = params[pos++];
      for (auto& z : layer.b[i].data()) z = params[pos++];
    }
}

bool StepsizeNet::all_finite() const noexcept {
  for (const auto& layer : layers) {
    for (const auto& w : layer.W)
      if (!w.all_finite()) return false;
    for (const auto& b : layer.b)
      if (!b.all_finite()) return false;
  }
  return true;
}

double predict_stepsize(const MlpWeights<CMatrix>& layer, const CMatrix& v, const CMatrix& dir) {
  if (layer.W.empty() || layer.W.front().cols() != v.size() + dir.size())
    throw Error(ErrorKind::ShapeMismatch, "predict_stepsize: input width does not match the network");
  return mlp_stepsize(layer, v, dir)[0].real();
}

std::vector<double> stepsize_scales(const ChannelSet& ch, const NetworkConfig& cfg,
                                    const LayerState<CMatrix>& st) {
  const auto grams = channel_grams(ch);
  std::vector<double> out;
  for (std::size_t l = 0; l < cfg.L; ++l) out.push_back(cell_scale(cfg, grams, st, l)[0].real());
  return out;
}

// ---- unfolding ---------------------------------------------------------------

UnfoldResult unfold_forward(const StepsizeNet& net, const ChannelSet& ch, const NetworkConfig& cfg,
                            const BeamformerSet& v0, bool with_lambda_max) {
  require_start(ch, cfg, v0);
  require_width(net.arch, cfg);
  const PlainLift lift;
  const auto lc = lift_channels<CMatrix>(ch, lift);
  const auto grams = channel_grams(ch);
  UnfoldResult res;
  auto predict = [&](std::size_t tau, const LayerState<CMatrix>& st, const BeamformerSet& v) {
    return network_stepsizes(net.arch, net.layers[tau], cfg, grams, st, v, lift);
  };
  auto observe = [&](std::size_t, const LayerState<CMatrix>& st, const std::vector<CMatrix>& lam,
                     const LayerState<CMatrix>& next) {
    res.lambda.push_back(scalars(lam));
    if (with_lambda_max) res.lambda_max.push_back(lambda_max_values(ch, cfg, st.C));
    res.layer_wsr.push_back(weighted_rate_sum(cfg, next));
  };
  auto out = run_layers(cfg, lc, v0, net.arch.T, lift, predict, observe);
  res.V = std::move(out.V);
  return res;
}

UnfoldResult unfold_eigen_stub(std::size_t T, const ChannelSet& ch, const NetworkConfig& cfg,
                               const BeamformerSet& v0, bool recorded) {
  require_start(ch, cfg, v0);
  UnfoldResult res;
  if (!recorded) {
    const PlainLift lift;
    const auto lc = lift_channels<CMatrix>(ch, lift);
    auto predict = [&](std::size_t, const LayerState<CMatrix>& st, const BeamformerSet&) {
      const auto lam = eigen_stub_values(ch, cfg, st.C);
      std::vector<CMatrix> out;
      for (std::size_t u = 0; u < cfg.users(); ++u) out.push_back(CMatrix::scalar(lam[cfg.cell_of(u)]));
      return out;
    };
    auto observe = [&](std::size_t, const LayerState<CMatrix>&, const std::vector<CMatrix>& lam,
                       const LayerState<CMatrix>& next) {
      res.lambda.push_back(scalars(lam));
      res.layer_wsr.push_back(weighted_rate_sum(cfg, next));
    };
    auto out = run_layers(cfg, lc, v0, T, lift, predict, observe);
    res.V = std::move(out.V);
    return res;
  }
  ad::Tape tape;
  const TapeLift lift{&tape};
  const auto lc = lift_channels<ad::Var>(ch, lift);
  std::vector<ad::Var> v;
  for (const auto& m : v0) v.push_back(tape.leaf(m));
  auto predict = [&](std::size_t, const LayerState<ad::Var>& st, const std::vector<ad::Var>&) {
    const auto lam = eigen_stub_values(ch, cfg, values(st.C));
    std::vector<ad::Var> out;
    for (std::size_t u = 0; u < cfg.users(); ++u)
      out.push_back(lift(CMatrix::scalar(lam[cfg.cell_of(u)]), true));
    return out;
  };
  auto observe = [&](std::size_t, const LayerState<ad::Var>&, const std::vector<ad::Var>& lam,
                     const LayerState<ad::Var>& next) {
    res.lambda.push_back(scalars(lam));
    res.layer_wsr.push_back(weighted_rate_sum(cfg, next));
  };
  auto out = run_layers(cfg, lc, std::move(v), T, lift, predict, observe);
  res.V = values(out.V);
  return res;
}

double loss_supervised(const BeamformerSet& v, const BeamformerSet& target) {
  if (v.size() != target.size() || v.empty())
    throw Error(ErrorKind::ShapeMismatch, "loss_supervised: beamformer sets differ in size");
  for (std::size_t u = 0; u < v.size(); ++u) require_same_shape(v[u], target[u], "loss_supervised");
  return supervised_loss(v, target)[0].real();
}

double loss_unsupervised(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v) {
  const auto r = user_rates(ch, cfg, v);
  return -weighted_sum(cfg, r) / static_cast<double>(cfg.users());
}

SampleGradient loss_and_gradient(const StepsizeNet& net, const ChannelSet& ch,
                                 const NetworkConfig& cfg, const BeamformerSet& v0,
                                 const BeamformerSet* label, Stage stage) {
  require_start(ch, cfg, v0);
  require_width(net.arch, cfg);
  if (stage == Stage::Supervised && (!label || label->size() != v0.size()))
    throw Error(ErrorKind::InvalidArgument, "supervised loss needs one label per user");

  ad::Tape tape;
  tape.reserve(4096);
  std::vector<MlpWeights<ad::Var>> w(net.layers.size());
  for (std::size_t t = 0; t < net.layers.size(); ++t)
    for (std::size_t i = 0; i < net.layers[t].W.size(); ++i) {
      w[t].W.push_back(tape.leaf(net.layers[t].W[i]));
      w[t].b.push_back(tape.leaf(net.layers[t].b[i]));
    }
  const TapeLift lift{&tape};
  const auto lc = lift_channels<ad::Var>(ch, lift);
  const auto grams = lift_all<ad::Var>(channel_grams(ch), lift);
  auto predict = [&](std::size_t tau, const LayerState<ad::Var>& st, const std::vector<ad::Var>& v) {
    return network_stepsizes(net.arch, w[tau], cfg, grams, st, v, lift);
  };
  auto observe = [](std::size_t, const auto&, const auto&, const auto&) {};
  auto out = run_layers(cfg, lc, lift_all<ad::Var>(v0, lift), net.arch.T, lift, predict, observe);

  ad::Var loss;
  if (stage == Stage::Supervised)
    loss = supervised_loss(out.V, lift_all<ad::Var>(*label, lift));
  else
    loss = unsupervised_loss(cfg, rates_from_state(out.last));

  SampleGradient res;
  res.loss = loss.value()[0].real();
  const ad::Gradients g = tape.backward(loss);
  res.grad.reserve(net.parameter_count());
  for (std::size_t t = 0; t < w.size(); ++t)
    for (std::size_t i = 0; i < w[t].W.size(); ++i) {
      for (const auto& z : g[w[t].W[i]].data()) res.grad.push_back(z);
      for (const auto& z : g[w[t].b[i]].data()) res.grad.push_back(z);
    }
  return res;
}

// ---- training ----------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch size must be at least 1");
  if (!(initial_lr > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning rate must be positive");
  if (!(stage1_fraction >= 0.0 && stage1_fraction <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "stage-1 fraction must lie in [0, 1]");
  if (lr_halving_epochs < 1) throw Error(ErrorKind::InvalidArgument, "lr halving period must be positive");
}

std::size_t TrainConfig::stage1_epochs() const noexcept {
  return static_cast<std::size_t>(std::llround(stage1_fraction * static_cast<double>(epochs)));
}

std::string to_json_line(const EpochLog& e) {
  nlohmann::json j;
  j["epoch"] = e.epoch;
  j["stage"] = static_cast<std::uint32_t>(e.stage);
  j["loss"] = e.loss;
  j["val_wsr_nats"] = e.val_wsr_nats;
  j["val_wsr_bits"] = e.val_wsr_nats / std::numbers::ln2;
  j["lr"] = e.lr;
  return j.dump();
}

std::vector<BeamformerSet> starting_points(const Dataset& data) {
  std::vector<BeamformerSet> out;
  out.reserve(data.samples.size());
  for (const auto& s : data.samples)
    out.push_back(initial_beamformers(data.config, initial_point_seed(s.seed)));
  return out;
}

std::vector<BeamformerSet> make_labels(const Dataset& data, std::size_t iters, std::size_t threads) {
  const auto v0 = starting_points(data);
  std::vector<BeamformerSet> out(data.samples.size());
  SolveOptions opts;
  opts.max_iters = iters;
  opts.tol = 0.0;
  opts.record_surrogate = false;
  parallel_for(data.samples.size(), threads, [&](std::size_t i) {
    out[i] = fastfp_solve(data.samples[i], data.config, v0[i], opts).V;
  });
  return out;
}

double mean_validation_wsr(const StepsizeNet& net, const Dataset& data,
                           std::span<const BeamformerSet> v0, std::size_t threads) {
  if (data.samples.empty()) return 0.0;
  std::vector<double> w(data.samples.size());
  parallel_for(data.samples.size(), threads, [&](std::size_t i) {
    const auto r = unfold_forward(net, data.samples[i], data.config, v0[i]);
    w[i] = r.layer_wsr.empty() ? wsr(data.samples[i], data.config, v0[i]) : r.layer_wsr.back();
  });
  double total = 0.0;
  for (double x : w) total += x;
  return total / static_cast<double>(w.size());
}

TrainResult train(const StepsizeNet& init, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch, const TrainState* resume) {
  cfg.validate();
  if (train_set.samples.empty()) throw Error(ErrorKind::EmptyDataset, "training set is empty");
  require_width(init.arch, train_set.config);
  if (!val_set.samples.empty() && !(val_set.config == train_set.config))
    throw Error(ErrorKind::InvalidArgument, "validation set uses a different configuration");
  const Dataset& val = val_set.samples.empty() ? train_set : val_set;

  using Clock = std::chrono::steady_clock;
  const std::size_t n = train_set.samples.size();
  const auto v0 = starting_points(train_set);
  const auto val_v0 = starting_points(val);
  std::vector<BeamformerSet> labels;
  if (cfg.stage1_epochs() > (resume ? resume->epochs_done : 0))
    labels = make_labels(train_set, cfg.label_solver_iters, cfg.threads);

  TrainResult res;
  TrainState& st = res.state;
  if (resume) {
    if (!(resume->current.arch == init.arch))
      throw Error(ErrorKind::InvalidArgument, "resume state does not match the network");
    st = *resume;
  } else {
    st.current = init;
    st.best = init;
    st.m.assign(2 * init.parameter_count(), 0.0);
    st.v.assign(2 * init.parameter_count(), 0.0);
  }

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  const std::size_t stage1 = cfg.stage1_epochs();
  std::vector<cplx> params = st.current.flatten();

  for (std::size_t epoch = st.epochs_done; epoch < cfg.epochs; ++epoch) {
    if (cfg.stop_after_epoch && epoch >= *cfg.stop_after_epoch) {
      res.best = st.best;
      return res;
    }
    const auto t0 = Clock::now();
    const Stage stage = epoch < stage1 ? Stage::Supervised : Stage::Unsupervised;
    if (epoch == stage1 && epoch > 0) {
      std::fill(st.m.begin(), st.m.end(), 0.0);
      std::fill(st.v.begin(), st.v.end(), 0.0);
      st.adam_step = 0;
    }
    const double lr = cfg.initial_lr * std::pow(0.5, static_cast<double>(epoch / cfg.lr_halving_epochs));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(derive_seed(cfg.seed, 0x73687566), epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_total = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      std::vector<SampleGradient> grads(count);
      parallel_for(count, cfg.threads, [&](std::size_t b) {
        const std::size_t i = order[start + b];
        grads[b] = loss_and_gradient(st.current, train_set.samples[i], train_set.config, v0[i],
                                     stage == Stage::Supervised ? &labels[i] : nullptr, stage);
      });
      std::vector<cplx> g(params.size(), cplx(0.0, 0.0));
      for (const auto& sg : grads) {
        if (!std::isfinite(sg.loss))
          throw Error(ErrorKind::DivergedTraining,
                      "non-finite loss in epoch " + std::to_string(epoch + 1));
        loss_total += sg.loss;
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += sg.grad[j];
      }
      const double inv = 1.0 / static_cast<double>(count);
      ++st.adam_step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(st.adam_step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(st.adam_step));
      for (std::size_t j = 0; j < params.size(); ++j) {
        const double comp[2] = {g[j].real() * inv, g[j].imag() * inv};
        double step[2];
        for (int c = 0; c < 2; ++c) {
          double& m = st.m[2 * j + c];
          double& v = st.v[2 * j + c];
          m = kBeta1 * m + (1.0 - kBeta1) * comp[c];
          v = kBeta2 * v + (1.0 - kBeta2) * comp[c] * comp[c];
          step[c] = lr * (m / c1) / (std::sqrt(v / c2) + kEps);
        }
        params[j] -= cplx(step[0], step[1]);
      }
      st.current.assign(params);
      if (!st.current.all_finite())
        throw Error(ErrorKind::DivergedTraining,
                    "non-finite parameters in epoch " + std::to_string(epoch + 1));
    }

    EpochLog e;
    e.epoch = epoch + 1;
    e.stage = stage;
    e.loss = loss_total / static_cast<double>(n);
    e.val_wsr_nats = mean_validation_wsr(st.current, val, val_v0, cfg.threads);
    e.lr = lr;
    if (!std::isfinite(e.val_wsr_nats))
      throw Error(ErrorKind::DivergedTraining, "non-finite validation WSR in epoch " + std::to_string(e.epoch));
    if (!st.has_best || e.val_wsr_nats > st.best_val) {
      st.best = st.current;
      st.best_val = e.val_wsr_nats;
      st.has_best = true;
    }
    st.epochs_done = epoch + 1;
    e.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
    res.log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  res.best = st.has_best ? st.best : st.current;
  res.finished = true;
  return res;
}

// ---- checkpoints -----------------------------------------------------------------

namespace {

constexpr std::uint32_t kHasTrainState = 1u;

void write_params(io::Writer& w, const StepsizeNet& net) {
  for (const auto& z : net.flatten()) {
    w.f64(z.real());
    w.f64(z.imag());
  }
}

void read_params(io::Reader& r, StepsizeNet& net) {
  std::vector<cplx> p(net.parameter_count());
  for (auto& z : p) {
    const double re = r.f64();
    const double im = r.f64();
    z = {re, im};
  }
  net.assign(p);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const StepsizeNet& net, const TrainState* state) {
  io::Writer w;
  w.magic("BUNM");
  w.u16(kCheckpointVersion);
  w.u32(state ? kHasTrainState : 0u);
  w.u32(net.arch.T);
  w.u32(net.arch.Nt);
  w.u32(net.arch.d);
  w.u32(net.arch.hidden_layers);
  for (std::uint32_t i = 0; i < net.arch.hidden_layers; ++i) w.u32(net.arch.hidden_width);
  w.u32(static_cast<std::uint32_t>(net.arch.scaling));
  w.u64(net.parameter_count());
  write_params(w, net);
  if (state) {
    w.u64(state->epochs_done);
    w.u64(state->adam_step);
    w.u32(state->has_best ? 1u : 0u);
    w.f64(state->best_val);
    write_params(w, state->current);
    write_params(w, state->best);
    w.u64(state->m.size());
    for (double x : state->m) w.f64(x);
    for (double x : state->v) w.f64(x);
  }
  w.finish_to_file(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  io::Reader r = io::Reader::from_file(path);
  if (!r.expect_magic("BUNM")) throw Error(ErrorKind::FormatError, "not a model checkpoint");
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::FormatVersionMismatch,
                "checkpoint version " + std::to_string(version) + " is not supported");
  const std::uint32_t flags = r.u32();
  NetArch a;
  a.T = r.u32();
  a.Nt = r.u32();
  a.d = r.u32();
  a.hidden_layers = r.u32();
  for (std::uint32_t i = 0; i < a.hidden_layers; ++i) {
    const std::uint32_t width = r.u32();
    if (i > 0 && width != a.hidden_width)
      throw Error(ErrorKind::FormatError, "hidden layers of unequal width are not supported");
    a.hidden_width = width;
  }
  a.scaling = static_cast<StepsizeScaling>(r.u32());
  validate_arch(a);
  Checkpoint ck;
  ck.net = StepsizeNet::zeros(a);
  if (r.u64() != ck.net.parameter_count())
    throw Error(ErrorKind::FormatError, "parameter count does not match the architecture");
  read_params(r, ck.net);
  if (flags & kHasTrainState) {
    TrainState s;
    s.epochs_done = r.u64();
    s.adam_step = r.u64();
    s.has_best = r.u32() != 0;
    s.best_val = r.f64();
    s.current = StepsizeNet::zeros(a);
    s.best = StepsizeNet::zeros(a);
    read_params(r, s.current);
    read_params(r, s.best);
    const std::uint64_t len = r.u64();
    if (len != 2 * ck.net.parameter_count())
      throw Error(ErrorKind::FormatError, "optimizer state has the wrong length");
    s.m.resize(len);
    s.v.resize(len);
    for (auto& x : s.m) x = r.f64();
    for (auto& x : s.v) x = r.f64();
    ck.state = std::move(s);
  }
  if (r.remaining() != 0) throw Error(ErrorKind::FormatError, "trailing bytes in checkpoint");
  return ck;
}

}  // namespace beamunfold

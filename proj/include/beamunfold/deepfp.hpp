#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "beamunfold/channel.hpp"
#include "beamunfold/layer.hpp"
#include "beamunfold/objective.hpp"

namespace beamunfold {

/// How the MLP output becomes a stepsize.
enum class StepsizeScaling : std::uint32_t {
  Raw = 0,    // lambda = softplus(Re out) + 1e-6
  Trace = 1,  // lambda = tr(L_l) * (softplus(Re out) + 1e-6), inputs scaled to match
};

struct NetArch {
  std::uint32_t T = 8;
  std::uint32_t Nt = 8;
  std::uint32_t d = 1;
  std::uint32_t hidden_width = 16;
  std::uint32_t hidden_layers = 2;
  StepsizeScaling scaling = StepsizeScaling::Trace;

  std::size_t input_width() const noexcept { return 2u * Nt * d; }
  friend bool operator==(const NetArch&, const NetArch&) = default;
};

/// T unshared complex MLPs, one per unfolded layer.
struct StepsizeNet {
  NetArch arch;
  std::vector<MlpWeights<CMatrix>> layers;

  /// Entries with independent zero-mean components of variance 1/fan_in; zero biases.
  static StepsizeNet initialize(const NetArch& arch, std::uint64_t seed);
  static StepsizeNet zeros(const NetArch& arch);

  /// Complex parameter count.
  std::size_t parameter_count() const noexcept;
  /// Layer by layer: each weight matrix row-major followed by its bias.
  std::vector<cplx> flatten() const;
  void assign(std::span<const cplx> params);
  bool all_finite() const noexcept;

  friend bool operator==(const StepsizeNet&, const StepsizeNet&) = default;
};

/// Experimental: the same network re-targeted to another (Nt, d). The first
/// weight matrix keeps the columns of entries present in both shapes, for the
/// V half and the direction half separately; new columns are zero.
StepsizeNet adapt_input_width(const StepsizeNet& net, std::uint32_t Nt, std::uint32_t d);

/// softplus(Re MLP([vec v; vec dir])) + 1e-6.
double predict_stepsize(const MlpWeights<CMatrix>& layer, const CMatrix& v, const CMatrix& dir);

/// Scale per cell used by StepsizeScaling::Trace: Re sum_q tr(C_q H_{q,l} H_{q,l}^H) = tr(L_l).
std::vector<double> stepsize_scales(const ChannelSet& ch, const NetworkConfig& cfg,
                                    const LayerState<CMatrix>& st);

struct UnfoldResult {
  BeamformerSet V;
  std::vector<double> layer_wsr;                 // nats after each layer
  std::vector<std::vector<double>> lambda;       // [layer][user] stepsize used
  std::vector<std::vector<double>> lambda_max;   // [layer][cell], when requested
};

UnfoldResult unfold_forward(const StepsizeNet& net, const ChannelSet& ch, const NetworkConfig& cfg,
                            const BeamformerSet& v0, bool with_lambda_max = false);

/// Unfolded network with the predictor replaced by the FastFP eigenvalue
/// stepsize broadcast per cell. `recorded` runs the same graph on a tape.
UnfoldResult unfold_eigen_stub(std::size_t T, const ChannelSet& ch, const NetworkConfig& cfg,
                               const BeamformerSet& v0, bool recorded = false);

double loss_supervised(const BeamformerSet& v, const BeamformerSet& target);
double loss_unsupervised(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v);

enum class Stage : std::uint32_t { Supervised = 1, Unsupervised = 2 };

struct SampleGradient {
  double loss = 0.0;
  std::vector<cplx> grad;  // aligned with StepsizeNet::flatten()
};

/// One tape per call: forward through all layers, loss for the stage, backward.
SampleGradient loss_and_gradient(const StepsizeNet& net, const ChannelSet& ch,
                                 const NetworkConfig& cfg, const BeamformerSet& v0,
                                 const BeamformerSet* label, Stage stage);

// ---- training -------------------------------------------------------------

struct TrainConfig {
  std::size_t batch_size = 200;
  double initial_lr = 0.005;
  std::size_t lr_halving_epochs = 20;
  std::size_t epochs = 50;
  double stage1_fraction = 0.6;
  std::size_t label_solver_iters = 100;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  /// Stop (with resumable state) after this many epochs in total.
  std::optional<std::size_t> stop_after_epoch;

  void validate() const;
  std::size_t stage1_epochs() const noexcept;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  Stage stage = Stage::Supervised;
  double loss = 0.0;
  double val_wsr_nats = 0.0;
  double lr = 0.0;
  std::int64_t wall_ms = 0;
};

std::string to_json_line(const EpochLog& e);

/// Everything needed to continue an interrupted run.
struct TrainState {
  std::size_t epochs_done = 0;
  std::uint64_t adam_step = 0;
  std::vector<double> m;  // two entries per complex parameter
  std::vector<double> v;
  StepsizeNet current;
  StepsizeNet best;
  double best_val = 0.0;
  bool has_best = false;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

struct TrainResult {
  StepsizeNet best;
  std::vector<EpochLog> log;
  TrainState state;
  bool finished = false;  // false when stopped by stop_after_epoch
};

/// FastFP labels from the shared starting point of every sample.
std::vector<BeamformerSet> make_labels(const Dataset& data, std::size_t iters, std::size_t threads);
std::vector<BeamformerSet> starting_points(const Dataset& data);

double mean_validation_wsr(const StepsizeNet& net, const Dataset& data,
                           std::span<const BeamformerSet> v0, std::size_t threads);

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(const StepsizeNet& init, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {},
                  const TrainState* resume = nullptr);

// ---- checkpoints ------------------------------------------------------------

inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const StepsizeNet& net,
                     const TrainState* state = nullptr);

struct Checkpoint {
  StepsizeNet net;
  std::optional<TrainState> state;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace beamunfold

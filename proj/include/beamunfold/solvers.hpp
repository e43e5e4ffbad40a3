#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "beamunfold/channel.hpp"
#include "beamunfold/layer.hpp"
#include "beamunfold/objective.hpp"

namespace beamunfold {

enum class StepsizePolicy {
  Eigen,      // dense largest eigenvalue of L_l
  Power,      // power-iteration estimate of the same
  Frobenius,  // ||L_l||_F
};

std::string_view to_string(StepsizePolicy p) noexcept;
StepsizePolicy parse_stepsize_policy(std::string_view name);

struct SolveOptions {
  std::size_t max_iters = 100;
  double tol = 1e-6;
  std::size_t window = 3;
  StepsizePolicy policy = StepsizePolicy::Eigen;
  double bisect_tol = 1e-10;
  /// Evaluate the surrogate f_n per FastFP iteration (costs an extra pass).
  bool record_surrogate = true;
};

struct IterationRecord {
  double wsr = 0.0;        // nats, after the update
  double surrogate = 0.0;  // f_n for FastFP, NaN otherwise
  std::vector<double> multiplier;  // per cell: lambda (FastFP) or eta (FP, WMMSE-SC)
  std::int64_t wall_ns = 0;
};

struct SolveTrace {
  std::string algorithm;
  double initial_wsr = 0.0;
  std::vector<IterationRecord> records;
  BeamformerSet V;
  std::size_t iterations = 0;
  bool converged = false;

  double final_wsr() const noexcept { return records.empty() ? initial_wsr : records.back().wsr; }
};

/// JSON document: algorithm, iterations array, final metrics.
std::string to_json(const SolveTrace& trace);

CMatrix update_Y(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v,
                 std::size_t user);
CMatrix update_Gamma(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v,
                     std::size_t user);

/// Smallest eta >= 0 with sum_k ||(eta I + L)^{-1} Lambda_k||^2 <= power.
double bisect_eta(std::span<const CMatrix> lambda, const CMatrix& L, double power,
                  double tol = 1e-10);

/// Power sum_k ||(eta I + L)^{+} Lambda_k||^2 in the eigenbasis of L. Null
/// directions that Lambda does not touch are dropped; +inf when eta = 0 and
/// Lambda has weight on the null space of L.
double eta_power(std::span<const CMatrix> lambda, const CMatrix& L, double eta);

/// CN(0,1) entries, each cell scaled to exactly its budget.
BeamformerSet initial_beamformers(const NetworkConfig& cfg, std::uint64_t seed);
/// Seed of the shared starting point of a dataset sample.
std::uint64_t initial_point_seed(std::uint64_t sample_seed) noexcept;

/// Stepsizes per cell for the given policy, from the weighted covariances of
/// a layer state. A zero L_l yields 0 (the update of that cell is skipped).
std::vector<double> fastfp_stepsizes(const ChannelSet& ch, const NetworkConfig& cfg,
                                     const LayerState<CMatrix>& st, StepsizePolicy policy);

/// Relative WSR change below tol for `window` consecutive iterations.
bool has_converged(std::span<const double> wsr_history, double tol, std::size_t window);

SolveTrace fp_solve(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v0,
                    const SolveOptions& opts = {});
SolveTrace fastfp_solve(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v0,
                        const SolveOptions& opts = {});
/// Single-cell baseline: regularized FP update then scaling to the budget.
SolveTrace wmmse_sc_solve(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v0,
                          const SolveOptions& opts = {});

}  // namespace beamunfold

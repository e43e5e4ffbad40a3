#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "beamunfold/channel.hpp"
#include "beamunfold/cmatrix.hpp"

namespace beamunfold {

/// V_{lk} (Nt x d) for every user, in user order l*K + k.
using BeamformerSet = std::vector<CMatrix>;

/// Auxiliary variables of the transformed objectives. Gamma, Y, Z, Lambda are
/// per user; L per cell.
struct AuxiliaryState {
  std::vector<CMatrix> Gamma;
  std::vector<CMatrix> Y;
  std::vector<CMatrix> Z;
  std::vector<CMatrix> Lambda;
  std::vector<CMatrix> L;
};

/// Throws ShapeMismatch unless `v` has one Nt x d matrix per user and the
/// channel tensor matches the configuration.
void require_shapes(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v);

double cell_power(const NetworkConfig& cfg, const BeamformerSet& v, std::size_t cell);
/// Per-cell power within P_l * (1 + slack).
bool is_feasible(const NetworkConfig& cfg, const BeamformerSet& v, double slack = 1e-9);

CMatrix interference_cov_F(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v,
                           std::size_t user);
CMatrix total_cov_D(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v,
                    std::size_t user);

/// ln|I + V^H H^H F^{-1} H V| in nats.
double user_rate(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v,
                 std::size_t user);
std::vector<double> user_rates(const ChannelSet& ch, const NetworkConfig& cfg,
                               const BeamformerSet& v);
/// sum_u w_u R_u in nats (weights taken from cfg).
double wsr(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v);
/// Weighted sum of rates already computed, accumulated in user order.
double weighted_sum(const NetworkConfig& cfg, std::span<const double> rates);

/// w H_{u,cell(u)}^H Y (I + Gamma).
CMatrix lambda_matrix(const ChannelSet& ch, const NetworkConfig& cfg, const CMatrix& y,
                      const CMatrix& gamma, std::size_t user);

/// w Y (I + Gamma) Y^H, the Nr x Nr factor from which L is assembled.
CMatrix weighted_covariance(const NetworkConfig& cfg, const CMatrix& y, const CMatrix& gamma,
                            std::size_t user);
/// L_l = sum_u H_{u,l}^H C_u H_{u,l}, symmetrized.
CMatrix gram_L_from_covariances(const ChannelSet& ch, std::span<const CMatrix> c,
                                std::size_t cell);
CMatrix gram_L(const ChannelSet& ch, const NetworkConfig& cfg, std::span<const CMatrix> y,
               std::span<const CMatrix> gamma, std::size_t cell);

/// Quadratic-transform objective.
double f_q_eval(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v,
                std::span<const CMatrix> gamma, std::span<const CMatrix> y);

/// Nonhomogeneous bound of f_q. `lambda` holds one value per user, or one
/// per cell broadcast to its users; every value must be positive.
double f_n_eval(const ChannelSet& ch, const NetworkConfig& cfg, const BeamformerSet& v,
                std::span<const CMatrix> gamma, std::span<const CMatrix> y,
                std::span<const CMatrix> z, std::span<const double> lambda);

/// Per-cell projection: cells over budget are scaled onto the boundary.
BeamformerSet power_scale(const NetworkConfig& cfg, const BeamformerSet& v);

}  // namespace beamunfold

#pragma once

#include <algorithm>
#include <cmath>

#include "beamunfold/deepfp.hpp"

namespace testing {

/// Worst |g - fd| / max(|g|, |fd|, 1e-3 max|fd|) over every real parameter
/// component of the network, with central differences of the plain forward.
inline double net_fd_error(const beamunfold::StepsizeNet& net, const beamunfold::ChannelSet& ch,
                           const beamunfold::NetworkConfig& cfg,
                           const beamunfold::BeamformerSet& v0,
                           const beamunfold::BeamformerSet* label, beamunfold::Stage stage,
                           double step) {
  using namespace beamunfold;
  const auto ag = loss_and_gradient(net, ch, cfg, v0, label, stage);
  auto loss_at = [&](const std::vector<cplx>& p) {
    StepsizeNet n = net;
    n.assign(p);
    const auto v = unfold_forward(n, ch, cfg, v0).V;
    return stage == Stage::Supervised ? loss_supervised(v, *label) : loss_unsupervised(ch, cfg, v);
  };
  const std::vector<cplx> base = net.flatten();
  std::vector<double> fd, an;
  for (std::size_t i = 0; i < base.size(); ++i) {
    for (int part = 0; part < 2; ++part) {
      const cplx h = part == 0 ? cplx(step, 0.0) : cplx(0.0, step);
      std::vector<cplx> p = base;
      p[i] = base[i] + h;
      const double fp = loss_at(p);
      p[i] = base[i] - h;
      const double fm = loss_at(p);
      fd.push_back((fp - fm) / (2.0 * step));
      an.push_back(part == 0 ? ag.grad[i].real() : ag.grad[i].imag());
    }
  }
  double scale = 0.0;
  for (double x : fd) scale = std::max(scale, std::abs(x));
  const double floor = std::max(1e-12, 1e-3 * scale);
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i)
    worst = std::max(worst, std::abs(an[i] - fd[i]) / std::max({std::abs(an[i]), std::abs(fd[i]), floor}));
  return worst;
}

}  // namespace testing

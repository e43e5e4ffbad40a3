#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "beamunfold/channel.hpp"

namespace beamunfold {

enum class BenchAlgo { FastFP, DeepFP };

struct BenchPoint {
  std::uint32_t nt = 0;
  double median_ns = 0.0;
  std::vector<double> samples_ns;
};

struct BenchResult {
  BenchAlgo algo = BenchAlgo::FastFP;
  std::vector<BenchPoint> points;
  double slope = 0.0;  // least-squares slope of log(time) against log(Nt)
};

struct BenchOptions {
  std::uint32_t L = 1;
  std::uint32_t K = 2;
  std::uint32_t Nr = 1;
  std::uint32_t d = 1;
  std::size_t reps = 20;
  std::uint64_t seed = 1;
};

/// Wall-clock of one FastFP iteration (eigenvalue stepsize) or one DeepFP
/// layer (random weights) per Nt, starting from the same state each time.
/// One warm-up run per size is discarded; the median over `reps` is kept.
BenchResult run_bench(BenchAlgo algo, std::span<const std::uint32_t> nts, const BenchOptions& opts);

double loglog_slope(std::span<const double> x, std::span<const double> y);

std::string to_json(const BenchResult& r, const BenchOptions& opts);

}  // namespace beamunfold

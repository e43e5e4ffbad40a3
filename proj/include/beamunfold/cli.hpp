#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "beamunfold/channel.hpp"
#include "beamunfold/error.hpp"

namespace beamunfold::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,      // bad flags or config file
  kIo = 3,         // unreadable or unwritable files, corrupt containers
  kSolver = 4,     // numerical failure or unsupported solver setup
  kDiverged = 5,   // non-finite training
  kWidth = 6,      // model and data disagree on Nt or d
  kInternal = 70,
};

int exit_code_for(ErrorKind kind) noexcept;

/// Flat `key = value` text, `#` starts a comment. Keys: L, K, Nt, Nr, d,
/// weights (comma list or one value for all users), P / P_dbm (one value or
/// one per cell; milliwatts or dBm), sigma2 / sigma2_dbm, cell_distance_km,
/// shadowing_std_db. Unknown or repeated keys throw ConfigError.
NetworkConfig parse_config(std::string_view text);
NetworkConfig load_config(const std::filesystem::path& path);

struct Histogram {
  std::vector<double> edges;   // bins + 1
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [min, max]; the last bin is closed. Empty input
/// gives empty arrays.
Histogram histogram(std::span<const double> values, std::size_t bins);

struct Cdf {
  std::vector<double> x;  // sorted values
  std::vector<double> p;  // (i + 1) / n
};
Cdf empirical_cdf(std::span<const double> values);

/// Whole command line after the program name. Normal output goes to `out`,
/// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace beamunfold::cli

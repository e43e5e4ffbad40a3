#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "beamunfold/cmatrix.hpp"
#include "beamunfold/random.hpp"

namespace beamunfold {

double dbm_to_mw(double dbm) noexcept;

/// Static scenario description. Powers are linear milliwatts.
struct NetworkConfig {
  std::uint32_t L = 1;   // cells
  std::uint32_t K = 1;   // users per cell
  std::uint32_t Nt = 1;  // BS antennas
  std::uint32_t Nr = 1;  // user antennas
  std::uint32_t d = 1;   // streams per user
  std::vector<double> weights;  // L*K, user (l,k) at l*K + k
  std::vector<double> power;    // L
  double noise = 1.0;           // sigma^2
  double cell_distance_km = 0.8;
  double shadowing_std_db = 8.0;

  /// Uniform weights, equal per-cell budget; dBm figures converted once here.
  static NetworkConfig make(std::uint32_t L, std::uint32_t K, std::uint32_t Nt, std::uint32_t Nr,
                            std::uint32_t d, double power_dbm = 20.0, double noise_dbm = -90.0);

  std::size_t users() const noexcept { return static_cast<std::size_t>(L) * K; }
  std::size_t user(std::size_t l, std::size_t k) const noexcept { return l * K + k; }
  std::size_t cell_of(std::size_t u) const noexcept { return u / K; }

  /// Throws InvalidArgument when an invariant is broken.
  void validate() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

enum class Fading : std::uint32_t { Shadowed = 0, Rayleigh = 1 };

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// CSI H_{(l,k), i}: Nr x Nt channel from BS i to user (l,k).
struct ChannelSet {
  std::uint32_t L = 0;
  std::uint32_t K = 0;
  std::vector<CMatrix> H;  // ((l*K + k) * L + i)
  std::uint64_t seed = 0;
  std::vector<Point> user_positions;  // km, one per user

  const CMatrix& at(std::size_t user, std::size_t cell) const { return H[user * L + cell]; }
  CMatrix& at(std::size_t user, std::size_t cell) { return H[user * L + cell]; }

  friend bool operator==(const ChannelSet&, const ChannelSet&) = default;
};

double path_loss_db(double r_km, double xi_db);

inline constexpr double kMinUserDistanceKm = 0.01;

/// Hexagonal layout: site 0 at the origin, sites 1..6 on the first ring.
std::vector<Point> base_station_sites(std::uint32_t L, double cell_distance_km);

/// Minimum-image distance on the 7-cell torus (period sqrt(7) * D).
double wrapped_distance_km(Point user, Point bs, double cell_distance_km);

/// Uniform draw inside the hexagonal cell around `center`, at least
/// kMinUserDistanceKm away from the BS.
Point draw_user_position(Rng& rng, Point center, double cell_distance_km);

/// Channels for fixed user positions: i.i.d. CN(0,1) fading scaled by the
/// amplitude gain of the path loss (shadowing drawn per link when enabled).
ChannelSet draw_channels(const NetworkConfig& config, const std::vector<Point>& users,
                         std::uint64_t seed, bool shadowing = true);

ChannelSet generate_scenario(const NetworkConfig& config, std::uint64_t seed);
ChannelSet generate_rayleigh(const NetworkConfig& config, std::uint64_t seed);

/// Sample `count` scenarios; sample i uses derive_seed(seed, i).
std::vector<ChannelSet> generate_samples(const NetworkConfig& config, Fading fading,
                                         std::size_t count, std::uint64_t seed,
                                         std::size_t threads = 1);

struct Dataset {
  NetworkConfig config;
  Fading fading = Fading::Shadowed;
  std::vector<ChannelSet> samples;
};

inline constexpr std::uint16_t kDatasetVersion = 1;

void save_dataset(const std::filesystem::path& path, const NetworkConfig& config,
                  const std::vector<ChannelSet>& samples, Fading fading = Fading::Shadowed);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace beamunfold

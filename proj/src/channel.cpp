#include "beamunfold/channel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <thread>

#include "beamunfold/binary_io.hpp"
#include "beamunfold/error.hpp"
#include "beamunfold/random.hpp"

namespace beamunfold {

double dbm_to_mw(double dbm) noexcept { return std::pow(10.0, dbm / 10.0); }

NetworkConfig NetworkConfig::make(std::uint32_t L, std::uint32_t K, std::uint32_t Nt,
                                  std::uint32_t Nr, std::uint32_t d, double power_dbm,
                                  double noise_dbm) {
  NetworkConfig c;
  c.L = L;
  c.K = K;
  c.Nt = Nt;
  c.Nr = Nr;
  c.d = d;
  c.weights.assign(static_cast<std::size_t>(L) * K, 1.0);
  c.power.assign(L, dbm_to_mw(power_dbm));
  c.noise = dbm_to_mw(noise_dbm);
  c.validate();
  return c;
}

void NetworkConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidArgument, msg); };
  if (L < 1) fail("L must be >= 1");
  if (K < 1) fail("K must be >= 1");
  if (!(1 <= d && d <= Nr && Nr <= Nt)) fail("require 1 <= d <= Nr <= Nt");
  if (weights.size() != users()) fail("weights must have L*K entries");
  if (power.size() != L) fail("power must have L entries");
  for (double w : weights)
    if (!(w >= 0.0) || !std::isfinite(w)) fail("weights must be finite and >= 0");
  for (double p : power)
    if (!(p > 0.0) || !std::isfinite(p)) fail("power budgets must be > 0");
  if (!(noise > 0.0) || !std::isfinite(noise)) fail("noise power must be > 0");
  if (!(cell_distance_km > 0.0)) fail("cell_distance_km must be > 0");
  if (!(shadowing_std_db >= 0.0)) fail("shadowing_std_db must be >= 0");
}

double path_loss_db(double r_km, double xi_db) {
  if (!(r_km > 0.0)) {
    throw Error(ErrorKind::NonPositiveDistance, "path loss needs r > 0, got " + std::to_string(r_km));
  }
  return 128.1 + 37.6 * std::log10(r_km) + xi_db;
}

namespace {

constexpr double kSqrt3 = std::numbers::sqrt3;

Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }

// Torus generators for the 7-cell cluster: (2,1) in hexagonal lattice steps.
Point cluster_a1(double D) { return {2.5 * D, 0.5 * kSqrt3 * D}; }
Point cluster_a2(double D) { return {0.5 * D, 1.5 * kSqrt3 * D}; }

bool inside_hexagon(Point p, double D) {
  // Flat sides face the six neighbours at 0, 60, 120 degrees.
  const double half = 0.5 * D;
  const double c = 0.5, s = 0.5 * kSqrt3;
  return std::abs(p.x) <= half && std::abs(c * p.x + s * p.y) <= half &&
         std::abs(-c * p.x + s * p.y) <= half;
}

}  // namespace

std::vector<Point> base_station_sites(std::uint32_t L, double D) {
  if (L > 7) throw Error(ErrorKind::InvalidArgument, "hexagonal layout supports at most 7 cells");
  std::vector<Point> sites;
  sites.push_back({0.0, 0.0});
  for (std::uint32_t m = 0; m + 1 < L; ++m) {
    const double angle = std::numbers::pi / 3.0 * m;
    sites.push_back({D * std::cos(angle), D * std::sin(angle)});
  }
  return sites;
}

double wrapped_distance_km(Point user, Point bs, double D) {
  const Point a1 = cluster_a1(D), a2 = cluster_a2(D);
  const Point delta = user - bs;
  // Lattice coordinates of delta, then search the surrounding images.
  const double det = a1.x * a2.y - a2.x * a1.y;
  const double u = (delta.x * a2.y - a2.x * delta.y) / det;
  const double v = (a1.x * delta.y - delta.x * a1.y) / det;
  const double cu = std::round(u), cv = std::round(v);
  double best = std::numeric_limits<double>::infinity();
  for (int i = -2; i <= 2; ++i) {
    for (int j = -2; j <= 2; ++j) {
      const Point image = delta - ((cu + i) * a1 + (cv + j) * a2);
      best = std::min(best, std::hypot(image.x, image.y));
    }
  }
  return best;
}

Point draw_user_position(Rng& rng, Point center, double D) {
  const double radius = D / kSqrt3;
  std::uniform_real_distribution<double> ux(-radius, radius), uy(-0.5 * D, 0.5 * D);
  for (;;) {
    const Point p{ux(rng), uy(rng)};
    if (inside_hexagon(p, D) && std::hypot(p.x, p.y) >= kMinUserDistanceKm) return center + p;
  }
}

ChannelSet draw_channels(const NetworkConfig& config, const std::vector<Point>& users,
                         std::uint64_t seed, bool shadowing) {
  config.validate();
  if (users.size() != config.users()) {
    throw Error(ErrorKind::InvalidArgument, "need one position per user");
  }
  const auto sites = base_station_sites(config.L, config.cell_distance_km);
  Rng rng(seed);
  std::normal_distribution<double> xi(0.0, 1.0);
  ChannelSet out;
  out.L = config.L;
  out.K = config.K;
  out.seed = seed;
  out.user_positions = users;
  out.H.reserve(config.users() * config.L);
  for (std::size_t u = 0; u < config.users(); ++u) {
    for (std::size_t i = 0; i < config.L; ++i) {
      const double r = std::max(
          wrapped_distance_km(users[u], sites[i], config.cell_distance_km), kMinUserDistanceKm);
      const double shadow = shadowing ? config.shadowing_std_db * xi(rng) : 0.0;
      const double amplitude = std::pow(10.0, -path_loss_db(r, shadow) / 20.0);
      CMatrix h = complex_gaussian_matrix(rng, config.Nr, config.Nt);
      h *= amplitude;
      out.H.push_back(std::move(h));
    }
  }
  return out;
}

ChannelSet generate_scenario(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  const auto sites = base_station_sites(config.L, config.cell_distance_km);
  Rng rng(derive_seed(seed, 0x706f73ULL));
  std::vector<Point> users;
  users.reserve(config.users());
  for (std::size_t l = 0; l < config.L; ++l)
    for (std::size_t k = 0; k < config.K; ++k)
      users.push_back(draw_user_position(rng, sites[l], config.cell_distance_km));
  return draw_channels(config, users, derive_seed(seed, 0x6368ULL),
                       config.shadowing_std_db > 0.0);
}

ChannelSet generate_rayleigh(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, 0x6368ULL));
  ChannelSet out;
  out.L = config.L;
  out.K = config.K;
  out.seed = seed;
  out.user_positions.assign(config.users(), Point{});
  out.H.reserve(config.users() * config.L);
  for (std::size_t n = 0; n < config.users() * config.L; ++n)
    out.H.push_back(complex_gaussian_matrix(rng, config.Nr, config.Nt));
  return out;
}

std::vector<ChannelSet> generate_samples(const NetworkConfig& config, Fading fading,
                                         std::size_t count, std::uint64_t seed,
                                         std::size_t threads) {
  std::vector<ChannelSet> out(count);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < count; i += stride) {
      const std::uint64_t s = derive_seed(seed, i);
      out[i] = fading == Fading::Rayleigh ? generate_rayleigh(config, s)
                                          : generate_scenario(config, s);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  return out;
}

namespace {

constexpr std::string_view kDatasetMagic = "BUNF";

void write_config(io::Writer& w, const NetworkConfig& c, Fading fading) {
  w.u32(c.L);
  w.u32(c.K);
  w.u32(c.Nt);
  w.u32(c.Nr);
  w.u32(c.d);
  w.u32(static_cast<std::uint32_t>(fading));
  for (double x : c.weights) w.f64(x);
  for (double x : c.power) w.f64(x);
  w.f64(c.noise);
  w.f64(c.cell_distance_km);
  w.f64(c.shadowing_std_db);
}

NetworkConfig read_config(io::Reader& r, Fading& fading) {
  NetworkConfig c;
  c.L = r.u32();
  c.K = r.u32();
  c.Nt = r.u32();
  c.Nr = r.u32();
  c.d = r.u32();
  const std::uint32_t f = r.u32();
  if (f > 1) throw Error(ErrorKind::FormatError, "unknown fading model " + std::to_string(f));
  fading = static_cast<Fading>(f);
  if (static_cast<std::size_t>(c.L) * c.K > (1u << 24)) {
    throw Error(ErrorKind::FormatError, "implausible user count");
  }
  c.weights.resize(c.users());
  for (double& x : c.weights) x = r.f64();
  c.power.resize(c.L);
  for (double& x : c.power) x = r.f64();
  c.noise = r.f64();
  c.cell_distance_km = r.f64();
  c.shadowing_std_db = r.f64();
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::FormatError, std::string("stored config invalid: ") + e.what());
  }
  return c;
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const NetworkConfig& config,
                  const std::vector<ChannelSet>& samples, Fading fading) {
  config.validate();
  io::Writer w;
  w.magic(kDatasetMagic);
  w.u16(kDatasetVersion);
  write_config(w, config, fading);
  w.u32(static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    if (s.L != config.L || s.K != config.K || s.H.size() != config.users() * config.L ||
        s.user_positions.size() != config.users()) {
      throw Error(ErrorKind::ShapeMismatch, "sample does not match the dataset config");
    }
    w.u64(s.seed);
    for (const auto& p : s.user_positions) {
      w.f64(p.x);
      w.f64(p.y);
    }
    for (const auto& h : s.H) {
      if (h.rows() != config.Nr || h.cols() != config.Nt) {
        throw Error(ErrorKind::ShapeMismatch, "channel matrix shape does not match config");
      }
      w.complex_matrix(h);
    }
  }
  w.finish_to_file(path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  auto r = io::Reader::from_file(path);
  if (!r.expect_magic(kDatasetMagic)) {
    throw Error(ErrorKind::FormatError, path.string() + " is not a dataset file");
  }
  const std::uint16_t version = r.u16();
  if (version != kDatasetVersion) {
    throw Error(ErrorKind::FormatVersionMismatch,
                "dataset version " + std::to_string(version) + ", expected " +
                    std::to_string(kDatasetVersion));
  }
  Dataset ds;
  ds.config = read_config(r, ds.fading);
  const std::uint32_t count = r.u32();
  const std::size_t per_sample = 8 + ds.config.users() * 16 +
                                 ds.config.users() * ds.config.L * ds.config.Nr *
                                     ds.config.Nt * 16;
  if (static_cast<double>(count) * per_sample != static_cast<double>(r.remaining())) {
    throw Error(ErrorKind::FormatError, "sample count does not match payload size");
  }
  ds.samples.reserve(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    ChannelSet s;
    s.L = ds.config.L;
    s.K = ds.config.K;
    s.seed = r.u64();
    s.user_positions.resize(ds.config.users());
    for (auto& p : s.user_positions) {
      p.x = r.f64();
      p.y = r.f64();
    }
    s.H.reserve(ds.config.users() * ds.config.L);
    for (std::size_t m = 0; m < ds.config.users() * ds.config.L; ++m)
      s.H.push_back(r.complex_matrix(ds.config.Nr, ds.config.Nt));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace beamunfold

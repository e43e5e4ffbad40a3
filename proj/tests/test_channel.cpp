#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "beamunfold/binary_io.hpp"
#include "beamunfold/channel.hpp"
#include "support.hpp"

using namespace beamunfold;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("beamunfold_channel_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("path loss examples") {
  CHECK(path_loss_db(1.0, 0.0) == doctest::Approx(128.1).epsilon(1e-15));
  CHECK(path_loss_db(0.8, 0.0) == doctest::Approx(124.4562).epsilon(1e-6));
  CHECK(path_loss_db(1.0, 8.0) == doctest::Approx(136.1).epsilon(1e-15));
  CHECK_THROWS_KIND(path_loss_db(0.0, 0.0), ErrorKind::NonPositiveDistance);
  CHECK_THROWS_KIND(path_loss_db(-1.0, 0.0), ErrorKind::NonPositiveDistance);
}

TEST_CASE("dBm conversion") {
  CHECK(dbm_to_mw(20.0) == doctest::Approx(100.0));
  CHECK(dbm_to_mw(-90.0) == doctest::Approx(1e-9));
  CHECK(dbm_to_mw(0.0) == 1.0);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(NetworkConfig::make(3, 3, 8, 2, 1));
  CHECK_THROWS_KIND(NetworkConfig::make(0, 3, 8, 2, 1), ErrorKind::InvalidArgument);
  CHECK_THROWS_KIND(NetworkConfig::make(1, 1, 2, 3, 1), ErrorKind::InvalidArgument);
  CHECK_THROWS_KIND(NetworkConfig::make(1, 1, 4, 2, 3), ErrorKind::InvalidArgument);
  NetworkConfig c = NetworkConfig::make(2, 2, 4, 2, 1);
  c.weights[1] = -1.0;
  CHECK_THROWS_KIND(c.validate(), ErrorKind::InvalidArgument);
  c = NetworkConfig::make(2, 2, 4, 2, 1);
  c.power[0] = 0.0;
  CHECK_THROWS_KIND(c.validate(), ErrorKind::InvalidArgument);
  c = NetworkConfig::make(2, 2, 4, 2, 1);
  c.noise = 0.0;
  CHECK_THROWS_KIND(c.validate(), ErrorKind::InvalidArgument);
}

TEST_CASE("single cell scenario structure") {
  const NetworkConfig cfg = NetworkConfig::make(1, 4, 3, 2, 1);
  const ChannelSet ch = generate_scenario(cfg, 5);
  CHECK(ch.L == 1);
  CHECK(ch.K == 4);
  CHECK(ch.H.size() == 4);
  CHECK(ch.user_positions.size() == 4);
  for (const auto& h : ch.H) {
    CHECK(h.rows() == 2);
    CHECK(h.cols() == 3);
    CHECK(h.all_finite());
  }
}

TEST_CASE("generation is deterministic in (config, seed)") {
  const NetworkConfig cfg = NetworkConfig::make(3, 3, 8, 2, 1);
  CHECK(generate_scenario(cfg, 11) == generate_scenario(cfg, 11));
  CHECK_FALSE(generate_scenario(cfg, 11) == generate_scenario(cfg, 12));
  CHECK(generate_rayleigh(cfg, 4) == generate_rayleigh(cfg, 4));
  const auto a = generate_samples(cfg, Fading::Shadowed, 7, 3, 1);
  const auto b = generate_samples(cfg, Fading::Shadowed, 7, 3, 3);
  CHECK(a == b);
  CHECK(a[2] == generate_scenario(cfg, derive_seed(3, 2)));
}

TEST_CASE("entry variance of a pinned user matches the configured path loss") {
  NetworkConfig cfg = NetworkConfig::make(7, 1, 100, 1, 1);
  cfg.cell_distance_km = 0.8;
  const auto sites = base_station_sites(7, 0.8);
  std::vector<Point> users;
  for (std::size_t l = 0; l < 7; ++l) users.push_back({sites[l].x + 0.05, sites[l].y + 0.02});
  const double r = wrapped_distance_km(users[0], sites[0], 0.8);
  const double expect = std::pow(10.0, -path_loss_db(r, 0.0) / 10.0);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const ChannelSet ch = draw_channels(cfg, users, s, false);
    for (const auto& z : ch.at(0, 0).data()) acc += std::norm(z), ++n;
  }
  CHECK(n == 100000);
  CHECK(testing::rel_err(acc / static_cast<double>(n), expect) <= 0.03);
}

TEST_CASE("Rayleigh entries have zero mean and unit variance") {
  const NetworkConfig cfg = NetworkConfig::make(1, 1, 1000, 1000, 1);
  const ChannelSet ch = generate_rayleigh(cfg, 77);
  cplx mean = 0.0;
  double var = 0.0;
  for (const auto& z : ch.H[0].data()) mean += z, var += std::norm(z);
  const double n = static_cast<double>(ch.H[0].size());
  CHECK(n == 1e6);
  mean /= n;
  CHECK(std::abs(mean) <= 0.01);
  CHECK(std::abs(var / n - 1.0) <= 0.01);
}

TEST_CASE("dataset round-trip is bitwise lossless") {
  const NetworkConfig cfg = NetworkConfig::make(2, 2, 4, 2, 1);
  const auto samples = generate_samples(cfg, Fading::Shadowed, 3, 9);
  const fs::path p = temp_file("three.bin");
  save_dataset(p, cfg, samples);
  const Dataset d = load_dataset(p);
  CHECK(d.config == cfg);
  CHECK(d.fading == Fading::Shadowed);
  CHECK(d.samples == samples);
  const auto bytes = read_bytes(p);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "BUNF");
  save_dataset(temp_file("three_again.bin"), d.config, d.samples);
  CHECK(read_bytes(temp_file("three_again.bin")) == bytes);
}

TEST_CASE("empty dataset and fading flag") {
  const NetworkConfig cfg = NetworkConfig::make(1, 2, 2, 1, 1);
  const fs::path p = temp_file("empty.bin");
  save_dataset(p, cfg, {}, Fading::Rayleigh);
  const Dataset d = load_dataset(p);
  CHECK(d.samples.empty());
  CHECK(d.fading == Fading::Rayleigh);
  CHECK(d.config == cfg);
}

TEST_CASE("corrupted datasets are rejected") {
  const NetworkConfig cfg = NetworkConfig::make(1, 2, 2, 1, 1);
  const fs::path p = temp_file("corrupt.bin");
  save_dataset(p, cfg, generate_samples(cfg, Fading::Shadowed, 2, 1));
  auto bytes = read_bytes(p);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 9);
  write_bytes(p, truncated);
  CHECK_THROWS_KIND(load_dataset(p), ErrorKind::ChecksumMismatch);

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  write_bytes(p, flipped);
  CHECK_THROWS_KIND(load_dataset(p), ErrorKind::ChecksumMismatch);

  // Version bumped with a valid checksum.
  std::vector<std::uint8_t> payload(bytes.begin(), bytes.end() - 4);
  payload[4] = 99;
  const std::uint32_t crc = io::crc32(payload);
  for (int i = 0; i < 4; ++i) payload.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  write_bytes(p, payload);
  CHECK_THROWS_KIND(load_dataset(p), ErrorKind::FormatVersionMismatch);

  CHECK_THROWS_KIND(load_dataset(temp_file("missing.bin")), ErrorKind::IoError);
}

TEST_CASE("crc32 reference value") {
  const std::string s = "123456789";
  const std::vector<std::uint8_t> b(s.begin(), s.end());
  CHECK(io::crc32(b) == 0xCBF43926u);
}

TEST_CASE("property: wrap-around distances are invariant under lattice translation") {
  const double D = 0.8;
  const auto sites = base_station_sites(7, D);
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Point p = draw_user_position(rng, sites[trial % 7], D);
    for (std::size_t t = 1; t < 7; ++t) {
      const Point q{p.x + sites[t].x, p.y + sites[t].y};
      std::vector<double> a, b;
      for (const auto& s : sites) {
        a.push_back(wrapped_distance_km(p, s, D));
        b.push_back(wrapped_distance_km(q, s, D));
      }
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
    }
  }
}

TEST_CASE("property: wrapped distance never exceeds the direct distance") {
  const auto sites = base_station_sites(7, 0.8);
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const Point p = draw_user_position(rng, sites[trial % 7], 0.8);
    for (const auto& s : sites)
      CHECK(wrapped_distance_km(p, s, 0.8) <= std::hypot(p.x - s.x, p.y - s.y) + 1e-12);
  }
}

TEST_CASE("property: mean received gain decreases with distance without shadowing") {
  NetworkConfig cfg = NetworkConfig::make(1, 1, 64, 4, 1);
  double previous = std::numeric_limits<double>::infinity();
  for (double r : {0.02, 0.05, 0.1, 0.2, 0.4}) {
    const std::vector<Point> users{{r, 0.0}};
    double acc = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s)
      for (const auto& z : draw_channels(cfg, users, s, false).H[0].data()) acc += std::norm(z);
    CHECK(acc < previous);
    previous = acc;
  }
}

TEST_CASE("property: generated users respect the distance floor and channels are finite") {
  const NetworkConfig cfg = NetworkConfig::make(7, 3, 2, 1, 1);
  const auto sites = base_station_sites(7, cfg.cell_distance_km);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const ChannelSet ch = generate_scenario(cfg, s);
    for (std::size_t u = 0; u < cfg.users(); ++u) {
      const Point p = ch.user_positions[u];
      const Point c = sites[cfg.cell_of(u)];
      CHECK(std::hypot(p.x - c.x, p.y - c.y) >= kMinUserDistanceKm);
      for (const auto& site : sites)
        CHECK(wrapped_distance_km(p, site, cfg.cell_distance_km) >= kMinUserDistanceKm);
    }
    for (const auto& h : ch.H) CHECK(h.all_finite());
  }
}

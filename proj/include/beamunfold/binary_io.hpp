#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "beamunfold/cmatrix.hpp"

namespace beamunfold::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept;

/// Little-endian byte sink.
class Writer {
 public:
  void magic(std::string_view tag);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void complex_matrix(const CMatrix& m);  // entries only, (re, im) interleaved

  const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }
  /// Appends the CRC-32 of everything written so far and writes atomically
  /// (temp file + rename) so readers never observe a half-written file.
  void finish_to_file(const std::filesystem::path& path);

 private:
  std::vector<std::uint8_t> buf_;
};

/// Little-endian byte source over a CRC-verified payload.
class Reader {
 public:
  /// Loads the file, checks the trailing CRC-32 (ChecksumMismatch on failure).
  static Reader from_file(const std::filesystem::path& path);
  explicit Reader(std::vector<std::uint8_t> payload) : buf_(std::move(payload)) {}

  bool expect_magic(std::string_view tag);
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  CMatrix complex_matrix(std::size_t rows, std::size_t cols);

  std::size_t remaining() const noexcept { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace beamunfold::io

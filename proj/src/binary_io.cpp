#include "beamunfold/binary_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "beamunfold/error.hpp"

namespace beamunfold::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large payloads.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void Writer::magic(std::string_view tag) { buf_.insert(buf_.end(), tag.begin(), tag.end()); }

void Writer::u16(std::uint16_t v) {
  for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void Writer::complex_matrix(const CMatrix& m) {
  for (const auto& z : m.data()) {
    f64(z.real());
    f64(z.imag());
  }
}

void Writer::finish_to_file(const std::filesystem::path& path) {
  const std::uint32_t crc = crc32(buf_);
  u32(crc);
  std::filesystem::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(buf_.data()),
              static_cast<std::streamsize>(buf_.size()));
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::IoError, "rename to " + path.string() + ": " + ec.message());
}

Reader Reader::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (data.size() < 4) throw Error(ErrorKind::ChecksumMismatch, path.string() + ": truncated");
  const std::size_t n = data.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(data[n + i]) << (8 * i);
  data.resize(n);
  if (crc32(data) != stored) {
    throw Error(ErrorKind::ChecksumMismatch, path.string() + ": CRC-32 mismatch");
  }
  return Reader(std::move(data));
}

void Reader::need(std::size_t n) const {
  if (buf_.size() - pos_ < n) throw Error(ErrorKind::FormatError, "unexpected end of payload");
}

bool Reader::expect_magic(std::string_view tag) {
  need(tag.size());
  const bool ok = std::memcmp(buf_.data() + pos_, tag.data(), tag.size()) == 0;
  pos_ += tag.size();
  return ok;
}

std::uint16_t Reader::u16() {
  need(2);
  std::uint16_t v = static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

CMatrix Reader::complex_matrix(std::size_t rows, std::size_t cols) {
  need(rows * cols * 16);
  std::vector<cplx> entries(rows * cols);
  for (auto& z : entries) {
    const double re = f64();
    const double im = f64();
    z = {re, im};
  }
  return CMatrix(rows, cols, std::move(entries));
}

}  // namespace beamunfold::io

#pragma once

#include <cstdint>
#include <bit>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "ginet/error.hpp"

namespace ginet {

// Little-endian fixed-width primitives for the on-disk containers. The
// build targets little-endian hosts; values are written in native order.
static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error("cannot write " + path);
  }

  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void f64s(std::span<const double> v) { bytes(v.data(), v.size() * sizeof(double)); }

  void close() {
    out_.flush();
    if (!out_) throw Error("write failed");
  }

 private:
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw ParseError("cannot open " + path);
  }

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw ParseError(path_ + ": truncated file");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = u64();
    if (n > (1ull << 32)) throw ParseError(path_ + ": corrupt string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::vector<double> f64s(std::size_t n) {
    std::vector<double> v(n);
    bytes(v.data(), n * sizeof(double));
    return v;
  }
  void expect_magic(const char (&magic)[9]) {
    char buf[8];
    bytes(buf, 8);
    if (std::memcmp(buf, magic, 8) != 0) throw ParseError(path_ + ": not a " + std::string(magic, 8) + " file");
  }
  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace ginet

#pragma once

#include "doa/error.hpp"
#include "doa/types.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include <json.hpp>

namespace doa::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    require(out_.good(), ErrorKind::Io, "cannot open " + path.string() + " for writing");
  }

  void bytes(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void i64(std::int64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void c128(Complex v) {
    f64(v.real());
    f64(v.imag());
  }
  void complex_array(const Complex* data, Index n) {
    for (Index i = 0; i < n; ++i) c128(data[i]);
  }

  void finish() {
    out_.flush();
    require(out_.good(), ErrorKind::Io, "write failed");
    out_.close();
  }

 private:
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path.string()) {
    require(in_.good(), ErrorKind::Io, "cannot open " + path_);
  }

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    require(in_.gcount() == static_cast<std::streamsize>(n), ErrorKind::Io, "truncated file " + path_);
  }
  std::uint32_t u32() { return read<std::uint32_t>(); }
  std::uint64_t u64() { return read<std::uint64_t>(); }
  std::int64_t i64() { return read<std::int64_t>(); }
  double f64() { return read<double>(); }
  Complex c128() {
    const double re = f64();
    return {re, f64()};
  }
  void complex_array(Complex* data, Index n) {
    for (Index i = 0; i < n; ++i) data[i] = c128();
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  template <class T>
  T read() {
    T v{};
    bytes(&v, sizeof v);
    return v;
  }

  std::ifstream in_;
  std::string path_;
};

using Magic = std::array<char, 8>;

inline void expect_magic(BinaryReader& in, const Magic& magic, std::string_view what) {
  Magic got{};
  in.bytes(got.data(), got.size());
  require(got == magic, ErrorKind::Io, "not a " + std::string(what) + " file (bad magic)");
}

/// Writes through a temporary sibling and renames it into place, so readers
/// never observe a half-written file.
template <class Fn>
void atomic_write(const std::filesystem::path& path, Fn&& write_body) {
  const auto parent = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  require(std::filesystem::is_directory(parent), ErrorKind::Io, "output directory does not exist: " + parent.string());
  auto tmp = path;
  tmp += ".tmp";
  {
    BinaryWriter out(tmp);
    write_body(out);
    out.finish();
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorKind::Io, "rename failed for " + path.string() + ": " + ec.message());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  const auto parent = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  require(std::filesystem::is_directory(parent), ErrorKind::Io, "output directory does not exist: " + parent.string());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    require(out.good(), ErrorKind::Io, "cannot open " + tmp.string());
    out << doc.dump(2) << '\n';
    require(out.good(), ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorKind::Io, "rename failed for " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Config, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

/// FNV-1a 64 of a string, rendered as 16 hex digits.
inline std::string content_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
    h >>= 4;
  }
  return out;
}

inline std::string content_hash(const nlohmann::json& doc) { return content_hash(std::string_view(doc.dump())); }

}  // namespace doa::io

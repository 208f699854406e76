#pragma once

#include "argus/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>

namespace argus::detail {

/// Bounds-checked reads of fixed-width integers and IEEE doubles at absolute
/// offsets. Overruns raise `overrun_code`.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, Errc overrun_code, std::string what)
      : bytes_(bytes), overrun_(overrun_code), what_(std::move(what)) {}

  std::size_t size() const noexcept { return bytes_.size(); }
  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }

  void require(std::size_t offset, std::size_t n) const {
    if (offset > bytes_.size() || n > bytes_.size() - offset)
      fail(overrun_, what_ + ": truncated at byte " + std::to_string(offset), static_cast<std::int64_t>(offset));
  }

  template <typename T>
  T read(std::size_t offset, bool little_endian) const {
    require(offset, sizeof(T));
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + offset, sizeof(T));
    if (little_endian != (std::endian::native == std::endian::little))
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }

  std::uint8_t u8(std::size_t o) const { return read<std::uint8_t>(o, true); }
  std::uint16_t u16(std::size_t o, bool le) const { return read<std::uint16_t>(o, le); }
  std::uint32_t u32(std::size_t o, bool le) const { return read<std::uint32_t>(o, le); }
  std::int32_t i32(std::size_t o, bool le) const { return read<std::int32_t>(o, le); }
  double f64(std::size_t o, bool le) const { return read<double>(o, le); }

  std::string text(std::size_t offset, std::size_t n) const {
    require(offset, n);
    return std::string(reinterpret_cast<const char*>(bytes_.data() + offset), n);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  Errc overrun_;
  std::string what_;
};

/// Appends fixed-width values in a chosen byte order.
class ByteWriter {
 public:
  explicit ByteWriter(bool little_endian = true) : le_(little_endian) {}

  template <typename T>
  void put(T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if (le_ != (std::endian::native == std::endian::little))
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    out_.insert(out_.end(), buf, buf + sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void set_little_endian(bool le) noexcept { le_ = le; }
  std::vector<std::uint8_t>& data() noexcept { return out_; }
  std::vector<std::uint8_t> take() noexcept { return std::move(out_); }

 private:
  bool le_;
  std::vector<std::uint8_t> out_;
};

}  // namespace argus::detail

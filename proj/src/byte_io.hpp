#pragma once

// Little-endian primitive encoding shared by the XQKV and XQQC formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "xquant/errors.hpp"

namespace xquant::detail {

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& sink) : sink_(sink) {}

  void bytes(std::span<const std::uint8_t> data) {
    sink_.write(reinterpret_cast<const char*>(data.data()),
                static_cast<std::streamsize>(data.size()));
    if (!sink_) {
      throw IoError("write failed at byte offset " + std::to_string(position_));
    }
    position_ += data.size();
  }

  void u8(std::uint8_t v) { bytes(std::span<const std::uint8_t>(&v, 1)); }

  void u32(std::uint32_t v) {
    const std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                               static_cast<std::uint8_t>(v >> 16),
                               static_cast<std::uint8_t>(v >> 24)};
    bytes(b);
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  void f32s(std::span<const float> values) {
    scratch_.resize(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto v = std::bit_cast<std::uint32_t>(values[i]);
      scratch_[4 * i + 0] = static_cast<std::uint8_t>(v);
      scratch_[4 * i + 1] = static_cast<std::uint8_t>(v >> 8);
      scratch_[4 * i + 2] = static_cast<std::uint8_t>(v >> 16);
      scratch_[4 * i + 3] = static_cast<std::uint8_t>(v >> 24);
    }
    bytes(scratch_);
  }

  std::uint64_t position() const noexcept { return position_; }

 private:
  std::ostream& sink_;
  std::uint64_t position_ = 0;
  std::vector<std::uint8_t> scratch_;
};

class ByteReader {
 public:
  // `expected_total` is only used to phrase truncation errors; it may be
  // updated once the header has been parsed.
  explicit ByteReader(std::istream& source) : source_(source) {}

  void set_expected_total(std::uint64_t total) { expected_total_ = total; }

  void bytes(std::span<std::uint8_t> out) {
    source_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
    const auto got = static_cast<std::uint64_t>(source_.gcount());
    position_ += got;
    if (got != out.size()) {
      std::string msg = "truncated input: expected ";
      if (expected_total_ != 0) {
        msg += std::to_string(expected_total_) + " bytes, got " + std::to_string(position_);
      } else {
        msg += std::to_string(position_ - got + out.size()) + " bytes, got " +
               std::to_string(position_);
      }
      throw LengthError(msg);
    }
  }

  std::uint8_t u8() {
    std::uint8_t v = 0;
    bytes(std::span<std::uint8_t>(&v, 1));
    return v;
  }

  std::uint32_t u32() {
    std::uint8_t b[4];
    bytes(b);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  float f32() { return std::bit_cast<float>(u32()); }

  void f32s(std::span<float> out) {
    scratch_.resize(out.size() * 4);
    bytes(scratch_);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const std::uint32_t v = static_cast<std::uint32_t>(scratch_[4 * i]) |
                              (static_cast<std::uint32_t>(scratch_[4 * i + 1]) << 8) |
                              (static_cast<std::uint32_t>(scratch_[4 * i + 2]) << 16) |
                              (static_cast<std::uint32_t>(scratch_[4 * i + 3]) << 24);
      out[i] = std::bit_cast<float>(v);
    }
  }

  // True if the source has no bytes left.
  bool at_end() {
    return source_.peek() == std::char_traits<char>::eof();
  }

  std::uint64_t position() const noexcept { return position_; }

 private:
  std::istream& source_;
  std::uint64_t position_ = 0;
  std::uint64_t expected_total_ = 0;
  std::vector<std::uint8_t> scratch_;
};

}  // namespace xquant::detail

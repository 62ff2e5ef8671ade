#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xquant/matrix.hpp"

namespace xquant {

using Code = std::uint8_t;

// Largest code representable with `bit_width` bits (2^B - 1). Only B in {1, 2}
// is supported.
int max_code(int bit_width);
void check_bit_width(int bit_width);

// Rounds to nearest with ties going down: 0.5 -> 0, 1.5 -> 1, -0.5 -> -1.
double round_half_down(double x) noexcept;

struct QuantParams {
  float zero_point = 0.0f;
  float scale = 0.0f;
  int bit_width = 2;

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

// Zero-point and scale after the inward calibration shift. Dequantization is
// code * scale + zero_point.
struct CalibratedParams {
  float zero_point = 0.0f;
  float scale = 0.0f;
  int bit_width = 2;

  // Reconstruction interval [zero_point, zero_point + scale * (2^B - 1)].
  float upper() const noexcept { return zero_point + scale * static_cast<float>(max_code(bit_width)); }

  friend bool operator==(const CalibratedParams&, const CalibratedParams&) = default;
};

// Codes packed little-endian: code i occupies bits [i*B, (i+1)*B) of the
// stream, final byte zero-padded.
class CodeBlock {
 public:
  CodeBlock() = default;
  CodeBlock(std::vector<std::uint8_t> bytes, std::size_t count, int bit_width);

  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }
  std::size_t count() const noexcept { return count_; }
  int bit_width() const noexcept { return bit_width_; }

  static std::size_t byte_length(std::size_t count, int bit_width) noexcept {
    return (count * static_cast<std::size_t>(bit_width) + 7) / 8;
  }

  friend bool operator==(const CodeBlock&, const CodeBlock&) = default;

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t count_ = 0;
  int bit_width_ = 2;
};

CodeBlock pack_codes(std::span<const Code> codes, int bit_width);
std::vector<Code> unpack_codes(const CodeBlock& block);

// z = min, s = (max - min) / (2^B - 1).
QuantParams compute_params(std::span<const float> group, int bit_width);

// round((x - z) / s) with ties down, clamped to [0, 2^B - 1]; all zeros when s == 0.
std::vector<Code> quantize_group(std::span<const float> group, const QuantParams& params);

// zhat = z + eta * s * (2^B - 1), shat = (1 - 2 eta) * s, for eta in [0, 1/2).
CalibratedParams calibrate(const QuantParams& params, float eta);

std::vector<float> dequantize_group(std::span<const Code> codes, const CalibratedParams& params);

// Relaxed 1-bit mapping on the normalized domain: eta for e <= 1/2, 1 - eta otherwise.
double fake_quantize_map(double e, double eta);

enum class GroupingMode : std::uint8_t {
  // g consecutive tokens within one channel.
  per_channel,
  // g consecutive channels within one token.
  per_token,
};

const char* to_string(GroupingMode mode) noexcept;

// Group layout over a rows x cols matrix. Groups are enumerated token-block
// major so that appending rows appends groups:
//   per_channel: index = (row / g) * cols + col
//   per_token:   index = row * (cols / g) + col / g
struct GroupLayout {
  std::size_t rows = 0;
  std::size_t cols = 0;
  GroupingMode mode = GroupingMode::per_channel;
  std::size_t group_size = 32;

  // Throws ArgumentError if the grouped dimension is not a multiple of g.
  static GroupLayout make(std::size_t rows, std::size_t cols, GroupingMode mode,
                          std::size_t group_size);

  std::size_t group_count() const noexcept { return rows * cols / group_size; }
  void gather(const Matrix& m, std::size_t group, std::span<float> out) const;
  void scatter(std::span<const float> values, std::size_t group, Matrix& m) const;
};

struct QuantizedTensor {
  GroupLayout layout;
  int bit_width = 2;
  std::vector<CalibratedParams> params;
  std::vector<CodeBlock> codes;
};

QuantizedTensor quantize_matrix(const Matrix& matrix, GroupingMode mode, std::size_t group_size,
                                int bit_width, float eta);

// Same parameter computation as quantize_matrix, without producing codes.
std::vector<CalibratedParams> pseudo_quantize(const Matrix& matrix, GroupingMode mode,
                                              std::size_t group_size, int bit_width, float eta);

// Dequantizes `codes` group by group with `params`; the two sequences must be
// index-aligned with `layout`.
Matrix dequantize_groups(const GroupLayout& layout, std::span<const CalibratedParams> params,
                         std::span<const CodeBlock> codes);

Matrix dequantize_matrix(const QuantizedTensor& tensor);

}  // namespace xquant

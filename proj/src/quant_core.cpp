#include "xquant/quant_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xquant/errors.hpp"

namespace xquant {

void check_bit_width(int bit_width) {
  if (bit_width != 1 && bit_width != 2) {
    throw ArgumentError("bit width must be 1 or 2, got " + std::to_string(bit_width));
  }
}

int max_code(int bit_width) { return (1 << bit_width) - 1; }

double round_half_down(double x) noexcept { return std::ceil(x - 0.5); }

CodeBlock::CodeBlock(std::vector<std::uint8_t> bytes, std::size_t count, int bit_width)
    : bytes_(std::move(bytes)), count_(count), bit_width_(bit_width) {
  check_bit_width(bit_width);
  if (bytes_.size() != byte_length(count, bit_width)) {
    throw ArgumentError("code block holds " + std::to_string(bytes_.size()) + " bytes, " +
                        std::to_string(count) + " codes at " + std::to_string(bit_width) +
                        " bits need " + std::to_string(byte_length(count, bit_width)));
  }
}

CodeBlock pack_codes(std::span<const Code> codes, int bit_width) {
  check_bit_width(bit_width);
  const int limit = max_code(bit_width);
  std::vector<std::uint8_t> bytes(CodeBlock::byte_length(codes.size(), bit_width), 0);
  const auto b = static_cast<std::size_t>(bit_width);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] > limit) {
      throw ArgumentError("code " + std::to_string(codes[i]) + " at index " + std::to_string(i) +
                          " exceeds " + std::to_string(limit) + " for " +
                          std::to_string(bit_width) + "-bit packing");
    }
    const std::size_t bit = i * b;
    bytes[bit / 8] |= static_cast<std::uint8_t>(codes[i] << (bit % 8));
  }
  return CodeBlock(std::move(bytes), codes.size(), bit_width);
}

std::vector<Code> unpack_codes(const CodeBlock& block) {
  const auto b = static_cast<std::size_t>(block.bit_width());
  const auto mask = static_cast<std::uint8_t>(max_code(block.bit_width()));
  const auto bytes = block.bytes();
  std::vector<Code> codes(block.count());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::size_t bit = i * b;
    codes[i] = static_cast<Code>((bytes[bit / 8] >> (bit % 8)) & mask);
  }
  return codes;
}

QuantParams compute_params(std::span<const float> group, int bit_width) {
  check_bit_width(bit_width);
  if (group.empty()) {
    throw ArgumentError("cannot compute quantization parameters of an empty group");
  }
  const auto [lo, hi] = std::minmax_element(group.begin(), group.end());
  if (!std::isfinite(*lo) || !std::isfinite(*hi)) {
    throw ArgumentError("group contains non-finite values");
  }
  return {*lo, (*hi - *lo) / static_cast<float>(max_code(bit_width)), bit_width};
}

std::vector<Code> quantize_group(std::span<const float> group, const QuantParams& params) {
  check_bit_width(params.bit_width);
  std::vector<Code> codes(group.size(), 0);
  if (params.scale == 0.0f) {
    return codes;
  }
  const double z = params.zero_point;
  const double s = params.scale;
  const double limit = max_code(params.bit_width);
  for (std::size_t i = 0; i < group.size(); ++i) {
    const double level = round_half_down((static_cast<double>(group[i]) - z) / s);
    codes[i] = static_cast<Code>(std::clamp(level, 0.0, limit));
  }
  return codes;
}

CalibratedParams calibrate(const QuantParams& params, float eta) {
  check_bit_width(params.bit_width);
  if (!(eta >= 0.0f && eta < 0.5f)) {
    throw ArgumentError("calibration eta must lie in [0, 0.5), got " + std::to_string(eta));
  }
  if (eta == 0.0f) {
    return {params.zero_point, params.scale, params.bit_width};
  }
  const double e = eta;
  const double s = params.scale;
  return {static_cast<float>(params.zero_point + e * s * max_code(params.bit_width)),
          static_cast<float>((1.0 - 2.0 * e) * s), params.bit_width};
}

std::vector<float> dequantize_group(std::span<const Code> codes, const CalibratedParams& params) {
  std::vector<float> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    out[i] = static_cast<float>(codes[i]) * params.scale + params.zero_point;
  }
  return out;
}

double fake_quantize_map(double e, double eta) {
  if (!(e >= 0.0 && e <= 1.0)) {
    throw ArgumentError("normalized value must lie in [0, 1], got " + std::to_string(e));
  }
  if (!(eta >= 0.0 && eta <= 0.5)) {
    throw ArgumentError("eta must lie in [0, 0.5], got " + std::to_string(eta));
  }
  return e <= 0.5 ? eta : 1.0 - eta;
}

const char* to_string(GroupingMode mode) noexcept {
  return mode == GroupingMode::per_channel ? "per-channel" : "per-token";
}

GroupLayout GroupLayout::make(std::size_t rows, std::size_t cols, GroupingMode mode,
                              std::size_t group_size) {
  if (group_size == 0) {
    throw ArgumentError("group size must be at least 1");
  }
  if (mode == GroupingMode::per_channel && rows % group_size != 0) {
    throw ArgumentError("per-channel grouping needs the token count (" + std::to_string(rows) +
                        ") to be a multiple of the group size (" + std::to_string(group_size) +
                        "); keep the remainder in the residual buffer");
  }
  if (mode == GroupingMode::per_token && cols % group_size != 0) {
    throw ArgumentError("per-token grouping needs the channel count (" + std::to_string(cols) +
                        ") to be a multiple of the group size (" + std::to_string(group_size) +
                        ")");
  }
  return {rows, cols, mode, group_size};
}

void GroupLayout::gather(const Matrix& m, std::size_t group, std::span<float> out) const {
  if (mode == GroupingMode::per_channel) {
    const std::size_t row0 = (group / cols) * group_size;
    const std::size_t col = group % cols;
    for (std::size_t i = 0; i < group_size; ++i) out[i] = m(row0 + i, col);
  } else {
    const std::size_t per_row = cols / group_size;
    const std::size_t row = group / per_row;
    const std::size_t col0 = (group % per_row) * group_size;
    for (std::size_t i = 0; i < group_size; ++i) out[i] = m(row, col0 + i);
  }
}

void GroupLayout::scatter(std::span<const float> values, std::size_t group, Matrix& m) const {
  if (mode == GroupingMode::per_channel) {
    const std::size_t row0 = (group / cols) * group_size;
    const std::size_t col = group % cols;
    for (std::size_t i = 0; i < group_size; ++i) m(row0 + i, col) = values[i];
  } else {
    const std::size_t per_row = cols / group_size;
    const std::size_t row = group / per_row;
    const std::size_t col0 = (group % per_row) * group_size;
    for (std::size_t i = 0; i < group_size; ++i) m(row, col0 + i) = values[i];
  }
}

namespace {

template <typename PerGroup>
void for_each_group(const Matrix& matrix, const GroupLayout& layout, int bit_width,
                    PerGroup&& per_group) {
  check_bit_width(bit_width);
  std::vector<float> buffer(layout.group_size);
  for (std::size_t g = 0; g < layout.group_count(); ++g) {
    layout.gather(matrix, g, buffer);
    per_group(std::span<const float>(buffer), compute_params(buffer, bit_width));
  }
}

}  // namespace

QuantizedTensor quantize_matrix(const Matrix& matrix, GroupingMode mode, std::size_t group_size,
                                int bit_width, float eta) {
  QuantizedTensor out;
  out.layout = GroupLayout::make(matrix.rows(), matrix.cols(), mode, group_size);
  out.bit_width = bit_width;
  out.params.reserve(out.layout.group_count());
  out.codes.reserve(out.layout.group_count());
  for_each_group(matrix, out.layout, bit_width,
                 [&](std::span<const float> group, const QuantParams& params) {
                   out.codes.push_back(pack_codes(quantize_group(group, params), bit_width));
                   out.params.push_back(calibrate(params, eta));
                 });
  return out;
}

std::vector<CalibratedParams> pseudo_quantize(const Matrix& matrix, GroupingMode mode,
                                              std::size_t group_size, int bit_width, float eta) {
  const auto layout = GroupLayout::make(matrix.rows(), matrix.cols(), mode, group_size);
  std::vector<CalibratedParams> params;
  params.reserve(layout.group_count());
  for_each_group(matrix, layout, bit_width, [&](std::span<const float>, const QuantParams& p) {
    params.push_back(calibrate(p, eta));
  });
  return params;
}

Matrix dequantize_groups(const GroupLayout& layout, std::span<const CalibratedParams> params,
                         std::span<const CodeBlock> codes) {
  const std::size_t groups = layout.group_count();
  if (params.size() != groups || codes.size() != groups) {
    throw StructuralError("expected " + std::to_string(groups) + " groups, got " +
                          std::to_string(params.size()) + " parameter pairs and " +
                          std::to_string(codes.size()) + " code blocks");
  }
  Matrix out(layout.rows, layout.cols);
  for (std::size_t g = 0; g < groups; ++g) {
    if (codes[g].count() != layout.group_size) {
      throw StructuralError("code block " + std::to_string(g) + " holds " +
                            std::to_string(codes[g].count()) + " codes, expected " +
                            std::to_string(layout.group_size));
    }
    if (codes[g].bit_width() != params[g].bit_width) {
      throw StructuralError("code block " + std::to_string(g) + " is " +
                            std::to_string(codes[g].bit_width()) + "-bit but its parameters are " +
                            std::to_string(params[g].bit_width) + "-bit");
    }
    layout.scatter(dequantize_group(unpack_codes(codes[g]), params[g]), g, out);
  }
  return out;
}

Matrix dequantize_matrix(const QuantizedTensor& tensor) {
  return dequantize_groups(tensor.layout, tensor.params, tensor.codes);
}

}  // namespace xquant

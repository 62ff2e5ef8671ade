#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "xquant/quant_core.hpp"
#include "xquant/tensor_io.hpp"

namespace xquant {

// Layer thresholds and calibration settings of the compression pipeline.
//
// Layers below kq (vq) quantize keys (values) to 2 bits, the rest to 1 bit.
// From km (vm) on, odd layers store only their own parameters and borrow the
// codes of the preceding even layer. Keys are grouped per channel, values per
// token.
struct XQuantConfig {
  std::uint32_t kq = 30;
  std::uint32_t vq = 2;
  std::uint32_t km = 32;
  std::uint32_t vm = 16;
  float eta1 = 1.0f / 6.0f;
  float eta2 = 0.045f;
  std::uint32_t group_size = 32;
  std::uint32_t residual_length = 128;

  // Throws ConfigError when a threshold exceeds the layer count or a
  // calibration value lies outside [0, 1/2).
  void validate(std::size_t num_layers) const;

  // eta1 for 1-bit groups, eta2 for 2-bit groups.
  float eta_for_bits(int bit_width) const;

  friend bool operator==(const XQuantConfig&, const XQuantConfig&) = default;
};

enum class CacheSide : std::uint8_t { key = 0, value = 1 };

inline GroupingMode grouping_for(CacheSide side) noexcept {
  return side == CacheSide::key ? GroupingMode::per_channel : GroupingMode::per_token;
}

// 2 if layer < q_threshold else 1.
int bits_for_layer(std::size_t layer, std::uint32_t q_threshold) noexcept;

// True iff layer < m_threshold or layer is even.
bool stores_codes(std::size_t layer, std::uint32_t m_threshold) noexcept;

// Bit width of the codes a layer's parameters apply to. A params-only layer is
// quantized at the width of the layer whose codes it borrows.
int entry_bit_width(std::size_t layer, std::uint32_t q_threshold, std::uint32_t m_threshold) noexcept;

enum class EntryRole : std::uint8_t { full = 0, params_only = 1 };

struct CacheEntry {
  EntryRole role = EntryRole::full;
  int bit_width = 2;
  std::vector<CalibratedParams> params;
  // Empty for params-only entries.
  std::vector<CodeBlock> codes;

  friend bool operator==(const CacheEntry&, const CacheEntry&) = default;
};

struct LayerCache {
  CacheEntry key;
  CacheEntry value;
  // Most recent tokens kept in full precision, oldest first.
  Matrix key_residual;
  Matrix value_residual;

  CacheEntry& entry(CacheSide side) noexcept { return side == CacheSide::key ? key : value; }
  const CacheEntry& entry(CacheSide side) const noexcept {
    return side == CacheSide::key ? key : value;
  }
  Matrix& residual(CacheSide side) noexcept {
    return side == CacheSide::key ? key_residual : value_residual;
  }
  const Matrix& residual(CacheSide side) const noexcept {
    return side == CacheSide::key ? key_residual : value_residual;
  }

  friend bool operator==(const LayerCache&, const LayerCache&) = default;
};

struct QuantizedKVCache {
  XQuantConfig config;
  std::size_t num_channels = 0;
  std::size_t packed_tokens = 0;
  std::vector<LayerCache> layers;

  std::size_t num_layers() const noexcept { return layers.size(); }
  std::size_t residual_tokens() const noexcept {
    return layers.empty() ? 0 : layers.front().key_residual.rows();
  }
  GroupLayout layout(CacheSide side) const;

  friend bool operator==(const QuantizedKVCache&, const QuantizedKVCache&) = default;
};

// Tokens of a T-token sequence that go into the packed region: the largest
// multiple of g leaving at least R tokens in full precision.
std::size_t packed_token_count(std::size_t tokens, const XQuantConfig& cfg) noexcept;

QuantizedKVCache quantize_cache(const TensorDump& dump, const XQuantConfig& cfg);

// Throws StructuralError unless every params-only entry follows a full entry
// with the same group count and bit width, roles match the config, and every
// entry's group structure matches the packed region.
void validate_structure(const QuantizedKVCache& cache);

TensorDump dequantize_cache(const QuantizedKVCache& cache);

// A cache with no tokens, ready for append_tokens.
QuantizedKVCache make_empty_cache(std::size_t num_layers, std::size_t num_channels,
                                  const XQuantConfig& cfg);

// New tokens for every layer (each LayerTensor holds n x C rows). Tokens enter
// the residual buffer; while a layer holds at least R + g residual tokens, the
// oldest g are quantized and appended to the packed region.
QuantizedKVCache append_tokens(QuantizedKVCache cache, std::span<const LayerTensor> new_tokens);

// XQQC v1: "XQQC" | version | L, T_packed, T_residual, C | kq, vq, km, vm |
// eta1, eta2 (f32) | g, R | per layer, key then value: role u8, group count
// u32, (zhat, shat) f32 pairs, code bytes for full entries | residual floats,
// per layer key then value. Little-endian throughout.
inline constexpr std::uint32_t kCacheVersion = 1;

std::uint64_t write_cache(const QuantizedKVCache& cache, std::ostream& sink);
QuantizedKVCache read_cache(std::istream& source);

void save_cache(const QuantizedKVCache& cache, const std::filesystem::path& path);
QuantizedKVCache load_cache(const std::filesystem::path& path);

// Sum over all packed codes of their bit width. Excludes parameters, residual
// tokens and byte padding.
std::uint64_t packed_code_bits(const QuantizedKVCache& cache, CacheSide side);

}  // namespace xquant

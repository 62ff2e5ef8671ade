#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "xquant/matrix.hpp"

namespace xquant {

struct LayerTensor {
  Matrix key;
  Matrix value;

  friend bool operator==(const LayerTensor&, const LayerTensor&) = default;
};

// Per-layer key and value matrices of one sequence, all shaped tokens x channels.
struct TensorDump {
  std::size_t num_tokens = 0;
  std::size_t num_channels = 0;
  std::vector<LayerTensor> layers;

  std::size_t num_layers() const noexcept { return layers.size(); }

  // Throws ValidationError on empty dimensions, shape mismatches or
  // non-finite values (naming the layer, side, row and column).
  void validate() const;

  friend bool operator==(const TensorDump&, const TensorDump&) = default;
};

// XQKV v1 layout: "XQKV" | version u32 | L u32 | T u32 | C u32 | dtype u8 | 3 pad
// bytes, then per layer K then V as row-major f32. Little-endian throughout.
inline constexpr std::size_t kDumpHeaderBytes = 24;
inline constexpr std::uint32_t kDumpVersion = 1;

std::uint64_t dump_file_size(std::size_t layers, std::size_t tokens, std::size_t channels);

// Returns the number of bytes written.
std::uint64_t write_dump(const TensorDump& dump, std::ostream& sink);
TensorDump read_dump(std::istream& source);

void save_dump(const TensorDump& dump, const std::filesystem::path& path);
TensorDump load_dump(const std::filesystem::path& path);

struct SyntheticSpec {
  std::size_t num_layers = 4;
  std::size_t num_tokens = 256;
  std::size_t num_channels = 128;
  float per_channel_scale_spread = 0.5f;
  float outlier_channel_fraction = 0.05f;
  float outlier_magnitude = 8.0f;
  // Correlation between consecutive layers: 1 gives identical layers, 0 independent ones.
  float interlayer_correlation = 0.9f;
  std::uint64_t seed = 0;

  void validate() const;
};

// Layer l+1 is rho * layer l + (1 - rho) * fresh noise (before channel
// scaling); the per-channel scale and outlier set are shared by all layers so
// that rho = 1 yields bitwise-identical layers.
TensorDump gen_synthetic(const SyntheticSpec& spec);

}  // namespace xquant

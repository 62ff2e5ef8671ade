#include "xquant/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <utility>

#include "byte_io.hpp"
#include "xquant/errors.hpp"

namespace xquant {
namespace {

constexpr CacheSide kSides[] = {CacheSide::key, CacheSide::value};

std::uint32_t q_threshold(const XQuantConfig& cfg, CacheSide side) {
  return side == CacheSide::key ? cfg.kq : cfg.vq;
}

std::uint32_t m_threshold(const XQuantConfig& cfg, CacheSide side) {
  return side == CacheSide::key ? cfg.km : cfg.vm;
}

const char* side_name(CacheSide side) { return side == CacheSide::key ? "key" : "value"; }

// Quantizes one block of tokens for a layer according to its store/share role.
CacheEntry quantize_block(const Matrix& block, std::size_t layer, CacheSide side,
                          const XQuantConfig& cfg) {
  CacheEntry entry;
  const std::uint32_t m = m_threshold(cfg, side);
  entry.bit_width = entry_bit_width(layer, q_threshold(cfg, side), m);
  const float eta = cfg.eta_for_bits(entry.bit_width);
  if (stores_codes(layer, m)) {
    auto tensor = quantize_matrix(block, grouping_for(side), cfg.group_size, entry.bit_width, eta);
    entry.role = EntryRole::full;
    entry.params = std::move(tensor.params);
    entry.codes = std::move(tensor.codes);
  } else {
    entry.role = EntryRole::params_only;
    entry.params = pseudo_quantize(block, grouping_for(side), cfg.group_size, entry.bit_width, eta);
  }
  return entry;
}

void append_entry(CacheEntry& into, CacheEntry&& block) {
  into.params.insert(into.params.end(), block.params.begin(), block.params.end());
  into.codes.insert(into.codes.end(), std::make_move_iterator(block.codes.begin()),
                    std::make_move_iterator(block.codes.end()));
}

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw ArgumentError(std::string(what) + " does not fit the XQQC header");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void XQuantConfig::validate(std::size_t num_layers) const {
  const auto check_threshold = [&](std::uint32_t v, const char* name) {
    if (v > num_layers) {
      throw ConfigError(std::string(name) + " = " + std::to_string(v) + " exceeds the layer count " +
                        std::to_string(num_layers));
    }
  };
  check_threshold(kq, "kq");
  check_threshold(vq, "vq");
  check_threshold(km, "km");
  check_threshold(vm, "vm");
  for (const auto& [eta, name] : {std::pair{eta1, "eta1"}, std::pair{eta2, "eta2"}}) {
    if (!(eta >= 0.0f && eta < 0.5f)) {
      throw ConfigError(std::string(name) + " must lie in [0, 0.5), got " + std::to_string(eta));
    }
  }
  if (group_size == 0) {
    throw ConfigError("group size must be at least 1");
  }
}

float XQuantConfig::eta_for_bits(int bit_width) const {
  check_bit_width(bit_width);
  return bit_width == 1 ? eta1 : eta2;
}

int bits_for_layer(std::size_t layer, std::uint32_t q_threshold) noexcept {
  return layer < q_threshold ? 2 : 1;
}

bool stores_codes(std::size_t layer, std::uint32_t m_threshold) noexcept {
  return layer < m_threshold || layer % 2 == 0;
}

int entry_bit_width(std::size_t layer, std::uint32_t q_threshold,
                    std::uint32_t m_threshold) noexcept {
  return stores_codes(layer, m_threshold) ? bits_for_layer(layer, q_threshold)
                                          : bits_for_layer(layer - 1, q_threshold);
}

GroupLayout QuantizedKVCache::layout(CacheSide side) const {
  return GroupLayout::make(packed_tokens, num_channels, grouping_for(side), config.group_size);
}

std::size_t packed_token_count(std::size_t tokens, const XQuantConfig& cfg) noexcept {
  if (tokens <= cfg.residual_length || cfg.group_size == 0) {
    return 0;
  }
  return (tokens - cfg.residual_length) / cfg.group_size * cfg.group_size;
}

QuantizedKVCache quantize_cache(const TensorDump& dump, const XQuantConfig& cfg) {
  dump.validate();
  cfg.validate(dump.num_layers());

  QuantizedKVCache cache;
  cache.config = cfg;
  cache.num_channels = dump.num_channels;
  cache.packed_tokens = packed_token_count(dump.num_tokens, cfg);
  for (CacheSide side : kSides) {
    cache.layout(side);  // rejects channel counts the value grouping cannot split
  }
  const std::size_t residual = dump.num_tokens - cache.packed_tokens;

  cache.layers.resize(dump.num_layers());
  for (std::size_t l = 0; l < dump.num_layers(); ++l) {
    LayerCache& out = cache.layers[l];
    for (CacheSide side : kSides) {
      const Matrix& source = side == CacheSide::key ? dump.layers[l].key : dump.layers[l].value;
      out.entry(side) = quantize_block(source.slice_rows(0, cache.packed_tokens), l, side, cfg);
      out.residual(side) = source.slice_rows(cache.packed_tokens, residual);
    }
  }
  return cache;
}

void validate_structure(const QuantizedKVCache& cache) {
  const auto& cfg = cache.config;
  try {
    cfg.validate(cache.num_layers());
  } catch (const ConfigError& e) {
    throw StructuralError(std::string("cache carries an invalid config: ") + e.what());
  }
  for (CacheSide side : kSides) {
    GroupLayout layout;
    try {
      layout = cache.layout(side);
    } catch (const ArgumentError& e) {
      throw StructuralError(e.what());
    }
    const std::size_t groups = layout.group_count();
    for (std::size_t l = 0; l < cache.num_layers(); ++l) {
      const CacheEntry& entry = cache.layers[l].entry(side);
      const std::string where = "layer " + std::to_string(l) + " " + side_name(side);
      const bool stores = stores_codes(l, m_threshold(cfg, side));
      const int bits = entry_bit_width(l, q_threshold(cfg, side), m_threshold(cfg, side));
      if ((entry.role == EntryRole::full) != stores) {
        throw StructuralError(where + ": role does not match the config");
      }
      if (entry.bit_width != bits) {
        throw StructuralError(where + ": bit width " + std::to_string(entry.bit_width) +
                              ", config implies " + std::to_string(bits));
      }
      if (entry.params.size() != groups) {
        throw StructuralError(where + ": " + std::to_string(entry.params.size()) +
                              " parameter pairs, expected " + std::to_string(groups));
      }
      if (stores) {
        if (entry.codes.size() != groups) {
          throw StructuralError(where + ": " + std::to_string(entry.codes.size()) +
                                " code blocks, expected " + std::to_string(groups));
        }
      } else {
        if (!entry.codes.empty()) {
          throw StructuralError(where + ": params-only entry carries codes");
        }
        // Only odd layers share, so l >= 1 here.
        const CacheEntry& dominant = cache.layers[l - 1].entry(side);
        if (dominant.role != EntryRole::full || dominant.codes.size() != groups ||
            dominant.bit_width != entry.bit_width) {
          throw StructuralError(where + ": predecessor layer does not hold matching codes");
        }
      }
      const Matrix& residual = cache.layers[l].residual(side);
      if (residual.rows() != cache.residual_tokens() ||
          (residual.rows() != 0 && residual.cols() != cache.num_channels)) {
        throw StructuralError(where + ": residual buffer shape mismatch");
      }
    }
  }
}

TensorDump dequantize_cache(const QuantizedKVCache& cache) {
  validate_structure(cache);
  TensorDump dump;
  dump.num_tokens = cache.packed_tokens + cache.residual_tokens();
  dump.num_channels = cache.num_channels;
  dump.layers.resize(cache.num_layers());
  for (CacheSide side : kSides) {
    const GroupLayout layout = cache.layout(side);
    for (std::size_t l = 0; l < cache.num_layers(); ++l) {
      const CacheEntry& entry = cache.layers[l].entry(side);
      const CacheEntry& code_source =
          entry.role == EntryRole::full ? entry : cache.layers[l - 1].entry(side);
      Matrix restored = dequantize_groups(layout, entry.params, code_source.codes);
      restored.append_rows(cache.layers[l].residual(side));
      (side == CacheSide::key ? dump.layers[l].key : dump.layers[l].value) = std::move(restored);
    }
  }
  return dump;
}

QuantizedKVCache make_empty_cache(std::size_t num_layers, std::size_t num_channels,
                                  const XQuantConfig& cfg) {
  if (num_layers == 0 || num_channels == 0) {
    throw ArgumentError("cache needs at least one layer and one channel");
  }
  cfg.validate(num_layers);
  QuantizedKVCache cache;
  cache.config = cfg;
  cache.num_channels = num_channels;
  cache.layers.resize(num_layers);
  for (CacheSide side : kSides) {
    cache.layout(side);
    const std::uint32_t m = m_threshold(cfg, side);
    for (std::size_t l = 0; l < num_layers; ++l) {
      CacheEntry& entry = cache.layers[l].entry(side);
      entry.role = stores_codes(l, m) ? EntryRole::full : EntryRole::params_only;
      entry.bit_width = entry_bit_width(l, q_threshold(cfg, side), m);
      cache.layers[l].residual(side) = Matrix(0, num_channels);
    }
  }
  return cache;
}

QuantizedKVCache append_tokens(QuantizedKVCache cache, std::span<const LayerTensor> new_tokens) {
  if (new_tokens.size() != cache.num_layers()) {
    throw ArgumentError("got new tokens for " + std::to_string(new_tokens.size()) +
                        " layers, cache has " + std::to_string(cache.num_layers()));
  }
  const std::size_t count = new_tokens.front().key.rows();
  for (std::size_t l = 0; l < new_tokens.size(); ++l) {
    for (const Matrix* m : {&new_tokens[l].key, &new_tokens[l].value}) {
      if (m->rows() != count || (count != 0 && m->cols() != cache.num_channels)) {
        throw ArgumentError("layer " + std::to_string(l) + " new tokens have shape " +
                            std::to_string(m->rows()) + "x" + std::to_string(m->cols()) +
                            ", expected " + std::to_string(count) + "x" +
                            std::to_string(cache.num_channels));
      }
    }
  }

  const XQuantConfig& cfg = cache.config;
  for (std::size_t l = 0; l < cache.num_layers(); ++l) {
    cache.layers[l].key_residual.append_rows(new_tokens[l].key);
    cache.layers[l].value_residual.append_rows(new_tokens[l].value);
  }
  const std::size_t g = cfg.group_size;
  while (cache.residual_tokens() >= std::size_t{cfg.residual_length} + g) {
    for (std::size_t l = 0; l < cache.num_layers(); ++l) {
      for (CacheSide side : kSides) {
        Matrix& residual = cache.layers[l].residual(side);
        append_entry(cache.layers[l].entry(side),
                     quantize_block(residual.slice_rows(0, g), l, side, cfg));
        residual.drop_front_rows(g);
      }
    }
    cache.packed_tokens += g;
  }
  return cache;
}

std::uint64_t packed_code_bits(const QuantizedKVCache& cache, CacheSide side) {
  std::uint64_t bits = 0;
  for (const auto& layer : cache.layers) {
    for (const auto& block : layer.entry(side).codes) {
      bits += std::uint64_t{block.count()} * static_cast<std::uint64_t>(block.bit_width());
    }
  }
  return bits;
}

// ---------------------------------------------------------------------------
// XQQC file format

namespace {
constexpr char kCacheMagic[4] = {'X', 'Q', 'Q', 'C'};
}

std::uint64_t write_cache(const QuantizedKVCache& cache, std::ostream& sink) {
  validate_structure(cache);
  const auto& cfg = cache.config;
  detail::ByteWriter out(sink);
  out.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kCacheMagic), 4));
  out.u32(kCacheVersion);
  out.u32(to_u32(cache.num_layers(), "layer count"));
  out.u32(to_u32(cache.packed_tokens, "packed token count"));
  out.u32(to_u32(cache.residual_tokens(), "residual token count"));
  out.u32(to_u32(cache.num_channels, "channel count"));
  out.u32(cfg.kq);
  out.u32(cfg.vq);
  out.u32(cfg.km);
  out.u32(cfg.vm);
  out.f32(cfg.eta1);
  out.f32(cfg.eta2);
  out.u32(cfg.group_size);
  out.u32(cfg.residual_length);
  for (const auto& layer : cache.layers) {
    for (CacheSide side : kSides) {
      const CacheEntry& entry = layer.entry(side);
      out.u8(static_cast<std::uint8_t>(entry.role));
      out.u32(to_u32(entry.params.size(), "group count"));
      for (const auto& p : entry.params) {
        out.f32(p.zero_point);
        out.f32(p.scale);
      }
      for (const auto& block : entry.codes) {
        out.bytes(block.bytes());
      }
    }
  }
  for (const auto& layer : cache.layers) {
    out.f32s(layer.key_residual.data());
    out.f32s(layer.value_residual.data());
  }
  sink.flush();
  if (!sink) {
    throw IoError("flush failed at byte offset " + std::to_string(out.position()));
  }
  return out.position();
}

QuantizedKVCache read_cache(std::istream& source) {
  detail::ByteReader in(source);
  std::uint8_t magic[4];
  in.bytes(magic);
  if (!std::equal(std::begin(magic), std::end(magic),
                  reinterpret_cast<const std::uint8_t*>(kCacheMagic))) {
    throw FormatError("bad magic: not an XQQC cache");
  }
  const std::uint32_t version = in.u32();
  if (version != kCacheVersion) {
    throw FormatError("unsupported XQQC version " + std::to_string(version));
  }
  QuantizedKVCache cache;
  const std::uint32_t num_layers = in.u32();
  cache.packed_tokens = in.u32();
  const std::uint32_t residual_tokens = in.u32();
  cache.num_channels = in.u32();
  auto& cfg = cache.config;
  cfg.kq = in.u32();
  cfg.vq = in.u32();
  cfg.km = in.u32();
  cfg.vm = in.u32();
  cfg.eta1 = in.f32();
  cfg.eta2 = in.f32();
  cfg.group_size = in.u32();
  cfg.residual_length = in.u32();
  if (num_layers == 0 || cache.num_channels == 0) {
    throw FormatError("XQQC header has zero layers or channels");
  }
  try {
    cfg.validate(num_layers);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("XQQC config block: ") + e.what());
  }
  GroupLayout layouts[2];
  try {
    layouts[0] = cache.layout(CacheSide::key);
    layouts[1] = cache.layout(CacheSide::value);
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("XQQC header: ") + e.what());
  }

  cache.layers.resize(num_layers);
  for (std::uint32_t l = 0; l < num_layers; ++l) {
    for (CacheSide side : kSides) {
      CacheEntry& entry = cache.layers[l].entry(side);
      const std::string where = "layer " + std::to_string(l) + " " + side_name(side);
      const std::uint8_t role = in.u8();
      if (role > 1) {
        throw FormatError(where + ": unknown role byte " + std::to_string(role));
      }
      entry.role = static_cast<EntryRole>(role);
      const std::uint32_t m = m_threshold(cfg, side);
      if ((entry.role == EntryRole::full) != stores_codes(l, m)) {
        throw FormatError(where + ": role byte contradicts the config block");
      }
      entry.bit_width = entry_bit_width(l, q_threshold(cfg, side), m);
      const std::uint32_t groups = in.u32();
      const GroupLayout& layout = layouts[static_cast<int>(side)];
      if (groups != layout.group_count()) {
        throw FormatError(where + ": group count " + std::to_string(groups) + ", header implies " +
                          std::to_string(layout.group_count()));
      }
      entry.params.resize(groups);
      for (auto& p : entry.params) {
        p.zero_point = in.f32();
        p.scale = in.f32();
        p.bit_width = entry.bit_width;
      }
      if (entry.role == EntryRole::full) {
        const std::size_t block_bytes = CodeBlock::byte_length(layout.group_size, entry.bit_width);
        entry.codes.reserve(groups);
        std::vector<std::uint8_t> bytes(block_bytes);
        for (std::uint32_t g = 0; g < groups; ++g) {
          in.bytes(bytes);
          entry.codes.emplace_back(bytes, layout.group_size, entry.bit_width);
        }
      }
    }
  }
  for (std::uint32_t l = 0; l < num_layers; ++l) {
    for (CacheSide side : kSides) {
      Matrix residual(residual_tokens, cache.num_channels);
      in.f32s(residual.data());
      for (float v : residual.data()) {
        if (!std::isfinite(v)) {
          throw ValidationError("non-finite residual value in layer " + std::to_string(l) + " " +
                                side_name(side));
        }
      }
      cache.layers[l].residual(side) = std::move(residual);
    }
  }
  if (!in.at_end()) {
    throw FormatError("trailing bytes after XQQC payload at offset " +
                      std::to_string(in.position()));
  }
  validate_structure(cache);
  return cache;
}

void save_cache(const QuantizedKVCache& cache, const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  write_cache(cache, file);
}

QuantizedKVCache load_cache(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw IoError("cannot open " + path.string() + " for reading");
  }
  return read_cache(file);
}

}  // namespace xquant

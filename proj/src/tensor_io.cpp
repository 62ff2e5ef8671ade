#include "xquant/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "byte_io.hpp"
#include "xquant/errors.hpp"

namespace xquant {
namespace {

constexpr char kMagic[4] = {'X', 'Q', 'K', 'V'};
constexpr std::uint8_t kDtypeF32 = 0;
// Refuse headers that would need more than 16 GiB per matrix.
constexpr std::uint64_t kMaxElementsPerMatrix = std::uint64_t{1} << 32;

void check_finite(const Matrix& m, std::size_t layer, const char* side) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(r, c))) {
        std::ostringstream msg;
        msg << "non-finite value in layer " << layer << " " << side << " at row " << r
            << ", col " << c;
        throw ValidationError(msg.str());
      }
    }
  }
}

}  // namespace

void TensorDump::validate() const {
  if (layers.empty() || num_tokens == 0 || num_channels == 0) {
    throw ValidationError("dump must have at least one layer, token and channel (got L=" +
                          std::to_string(layers.size()) + ", T=" + std::to_string(num_tokens) +
                          ", C=" + std::to_string(num_channels) + ")");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (const auto* m : {&layers[l].key, &layers[l].value}) {
      if (m->rows() != num_tokens || m->cols() != num_channels) {
        throw ValidationError("layer " + std::to_string(l) + " has shape " +
                              std::to_string(m->rows()) + "x" + std::to_string(m->cols()) +
                              ", expected " + std::to_string(num_tokens) + "x" +
                              std::to_string(num_channels));
      }
    }
    check_finite(layers[l].key, l, "key");
    check_finite(layers[l].value, l, "value");
  }
}

std::uint64_t dump_file_size(std::size_t layers, std::size_t tokens, std::size_t channels) {
  return kDumpHeaderBytes + std::uint64_t{8} * layers * tokens * channels;
}

std::uint64_t write_dump(const TensorDump& dump, std::ostream& sink) {
  dump.validate();
  const auto narrow = [](std::size_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max()) {
      throw ArgumentError(std::string(what) + " does not fit the XQKV header");
    }
    return static_cast<std::uint32_t>(v);
  };
  detail::ByteWriter out(sink);
  out.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  out.u32(kDumpVersion);
  out.u32(narrow(dump.num_layers(), "layer count"));
  out.u32(narrow(dump.num_tokens, "token count"));
  out.u32(narrow(dump.num_channels, "channel count"));
  out.u8(kDtypeF32);
  const std::uint8_t pad[3] = {0, 0, 0};
  out.bytes(pad);
  for (const auto& layer : dump.layers) {
    out.f32s(layer.key.data());
    out.f32s(layer.value.data());
  }
  sink.flush();
  if (!sink) {
    throw IoError("flush failed at byte offset " + std::to_string(out.position()));
  }
  return out.position();
}

TensorDump read_dump(std::istream& source) {
  detail::ByteReader in(source);
  std::uint8_t magic[4];
  in.bytes(magic);
  if (!std::equal(std::begin(magic), std::end(magic), reinterpret_cast<const std::uint8_t*>(kMagic))) {
    throw FormatError("bad magic: not an XQKV dump");
  }
  const std::uint32_t version = in.u32();
  if (version != kDumpVersion) {
    throw FormatError("unsupported XQKV version " + std::to_string(version));
  }
  const std::uint32_t num_layers = in.u32();
  const std::uint32_t num_tokens = in.u32();
  const std::uint32_t num_channels = in.u32();
  const std::uint8_t dtype = in.u8();
  if (dtype != kDtypeF32) {
    throw FormatError("unsupported XQKV dtype " + std::to_string(dtype) + " (only f32 = 0)");
  }
  std::uint8_t pad[3];
  in.bytes(pad);
  if (num_layers == 0 || num_tokens == 0 || num_channels == 0) {
    throw ValidationError("XQKV header has an empty dimension (L=" + std::to_string(num_layers) +
                          ", T=" + std::to_string(num_tokens) +
                          ", C=" + std::to_string(num_channels) + ")");
  }
  const std::uint64_t elements = std::uint64_t{num_tokens} * num_channels;
  if (elements > kMaxElementsPerMatrix) {
    throw FormatError("XQKV header declares an implausibly large layer (" +
                      std::to_string(elements) + " elements)");
  }
  in.set_expected_total(dump_file_size(num_layers, num_tokens, num_channels));

  TensorDump dump;
  dump.num_tokens = num_tokens;
  dump.num_channels = num_channels;
  dump.layers.reserve(num_layers);
  for (std::uint32_t l = 0; l < num_layers; ++l) {
    LayerTensor layer{Matrix(num_tokens, num_channels), Matrix(num_tokens, num_channels)};
    in.f32s(layer.key.data());
    in.f32s(layer.value.data());
    dump.layers.push_back(std::move(layer));
  }
  dump.validate();
  return dump;
}

void save_dump(const TensorDump& dump, const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  write_dump(dump, file);
}

TensorDump load_dump(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw IoError("cannot open " + path.string() + " for reading");
  }
  return read_dump(file);
}

void SyntheticSpec::validate() const {
  if (num_layers == 0 || num_tokens == 0 || num_channels == 0) {
    throw ArgumentError("synthetic dump needs at least one layer, token and channel");
  }
  if (!(per_channel_scale_spread >= 0.0f) || !std::isfinite(per_channel_scale_spread)) {
    throw ArgumentError("per-channel scale spread must be a finite value >= 0");
  }
  if (!(outlier_channel_fraction >= 0.0f && outlier_channel_fraction <= 1.0f)) {
    throw ArgumentError("outlier channel fraction must lie in [0, 1]");
  }
  if (!(outlier_magnitude > 0.0f) || !std::isfinite(outlier_magnitude)) {
    throw ArgumentError("outlier magnitude must be a finite value > 0");
  }
  if (!(interlayer_correlation >= 0.0f && interlayer_correlation <= 1.0f)) {
    throw ArgumentError("inter-layer correlation must lie in [0, 1]");
  }
}

TensorDump gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);

  const std::size_t channels = spec.num_channels;
  const auto make_channel_scale = [&] {
    std::vector<float> scale(channels);
    for (auto& s : scale) {
      s = std::exp(spec.per_channel_scale_spread * normal(rng));
    }
    std::vector<std::size_t> order(channels);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto outliers = static_cast<std::size_t>(
        std::llround(static_cast<double>(spec.outlier_channel_fraction) * channels));
    for (std::size_t i = 0; i < outliers; ++i) {
      scale[order[i]] *= spec.outlier_magnitude;
    }
    return scale;
  };
  const std::vector<float> key_scale = make_channel_scale();
  const std::vector<float> value_scale = make_channel_scale();

  const float rho = spec.interlayer_correlation;
  const std::size_t elements = spec.num_tokens * channels;
  std::vector<float> key_latent(elements);
  std::vector<float> value_latent(elements);
  for (auto& v : key_latent) v = normal(rng);
  for (auto& v : value_latent) v = normal(rng);

  const auto scaled = [&](const std::vector<float>& latent, const std::vector<float>& scale) {
    Matrix m(spec.num_tokens, channels);
    auto out = m.data();
    for (std::size_t i = 0; i < elements; ++i) {
      out[i] = latent[i] * scale[i % channels];
    }
    return m;
  };

  TensorDump dump;
  dump.num_tokens = spec.num_tokens;
  dump.num_channels = channels;
  dump.layers.reserve(spec.num_layers);
  for (std::size_t l = 0; l < spec.num_layers; ++l) {
    if (l > 0) {
      for (auto* latent : {&key_latent, &value_latent}) {
        for (auto& v : *latent) {
          v = rho * v + (1.0f - rho) * normal(rng);
        }
      }
    }
    dump.layers.push_back({scaled(key_latent, key_scale), scaled(value_latent, value_scale)});
  }
  return dump;
}

}  // namespace xquant

#include "xquant/metrics.hpp"

#include <algorithm>
#include <string>

#include "xquant/errors.hpp"

namespace xquant {

BitwidthReport equivalent_bitwidth(const XQuantConfig& cfg, std::size_t num_layers) {
  if (num_layers == 0) {
    throw ArgumentError("equivalent bit width needs at least one layer");
  }
  cfg.validate(num_layers);
  const auto side_bits = [num_layers](std::uint32_t q, std::uint32_t m) {
    std::size_t bits = 0;
    for (std::size_t l = 0; l < num_layers; ++l) {
      if (stores_codes(l, m)) bits += static_cast<std::size_t>(bits_for_layer(l, q));
    }
    return static_cast<double>(bits) / static_cast<double>(num_layers);
  };
  BitwidthReport report;
  report.key = side_bits(cfg.kq, cfg.km);
  report.value = side_bits(cfg.vq, cfg.vm);
  report.average = (report.key + report.value) / 2.0;
  return report;
}

double expected_mse_uniform(double eta) {
  if (!(eta >= 0.0 && eta <= 0.5)) {
    throw ArgumentError("eta must lie in [0, 0.5], got " + std::to_string(eta));
  }
  return eta * eta - 0.5 * eta + 1.0 / 12.0;
}

double mse(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ArgumentError("mse needs equal-size inputs (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  }
  if (a.empty()) {
    return 0.0;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

double mse(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ArgumentError("mse shape mismatch: " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
  }
  return mse(a.data(), b.data());
}

MseReport mse(const TensorDump& a, const TensorDump& b) {
  if (a.num_layers() != b.num_layers() || a.num_tokens != b.num_tokens ||
      a.num_channels != b.num_channels) {
    throw ArgumentError("mse needs dumps of identical shape");
  }
  MseReport report;
  report.per_layer.resize(a.num_layers());
  double total = 0.0;
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    report.per_layer[l] = {mse(a.layers[l].key, b.layers[l].key),
                           mse(a.layers[l].value, b.layers[l].value)};
    // Key and value matrices hold the same number of elements.
    total += report.per_layer[l][0] + report.per_layer[l][1];
  }
  report.element_count = 2 * a.num_layers() * a.num_tokens * a.num_channels;
  report.overall = a.num_layers() == 0 ? 0.0 : total / static_cast<double>(2 * a.num_layers());
  return report;
}

SimulationReport simulate(const TensorDump& dump, const XQuantConfig& cfg) {
  const QuantizedKVCache cache = quantize_cache(dump, cfg);
  SimulationReport report;
  report.mse = mse(dump, dequantize_cache(cache));
  for (const auto& layer : cache.layers) {
    report.mse.group_count += layer.key.params.size() + layer.value.params.size();
  }
  report.bitwidth = equivalent_bitwidth(cfg, dump.num_layers());
  report.packed_tokens = cache.packed_tokens;
  report.residual_tokens = cache.residual_tokens();
  return report;
}

std::vector<SweepRow> sweep_eta(const TensorDump& dump, const XQuantConfig& cfg,
                                std::span<const float> eta1_grid,
                                std::span<const float> eta2_grid) {
  for (const auto grid : {eta1_grid, eta2_grid}) {
    for (float eta : grid) {
      if (!(eta >= 0.0f && eta < 0.5f)) {
        throw ArgumentError("sweep grid value " + std::to_string(eta) + " outside [0, 0.5)");
      }
    }
  }
  std::vector<SweepRow> rows;
  rows.reserve(eta1_grid.size() * eta2_grid.size());
  for (float eta1 : eta1_grid) {
    for (float eta2 : eta2_grid) {
      XQuantConfig point = cfg;
      point.eta1 = eta1;
      point.eta2 = eta2;
      rows.push_back({eta1, eta2, simulate(dump, point).mse.overall});
    }
  }
  return rows;
}

std::vector<LayerPairSimilarity> layer_similarity_report(const TensorDump& dump, int bit_width,
                                                         GroupingMode mode,
                                                         std::size_t group_size) {
  dump.validate();
  check_bit_width(bit_width);
  if (group_size == 0) {
    throw ArgumentError("group size must be at least 1");
  }
  const std::size_t rows = mode == GroupingMode::per_channel
                               ? dump.num_tokens / group_size * group_size
                               : dump.num_tokens;
  if (rows == 0) {
    throw ArgumentError("fewer tokens (" + std::to_string(dump.num_tokens) +
                        ") than one per-channel group (" + std::to_string(group_size) + ")");
  }

  const auto layer_codes = [&](const Matrix& m) {
    const QuantizedTensor tensor =
        quantize_matrix(m.slice_rows(0, rows), mode, group_size, bit_width, 0.0f);
    std::vector<Code> codes;
    codes.reserve(rows * m.cols());
    for (const auto& block : tensor.codes) {
      const auto unpacked = unpack_codes(block);
      codes.insert(codes.end(), unpacked.begin(), unpacked.end());
    }
    return codes;
  };

  std::vector<LayerPairSimilarity> report;
  for (CacheSide side : {CacheSide::key, CacheSide::value}) {
    std::vector<std::vector<Code>> codes;
    codes.reserve(dump.num_layers());
    for (const auto& layer : dump.layers) {
      codes.push_back(layer_codes(side == CacheSide::key ? layer.key : layer.value));
    }
    for (std::size_t l = 0; l + 1 < codes.size(); ++l) {
      LayerPairSimilarity pair;
      pair.layer = l;
      pair.side = side;
      pair.histogram = delta_histogram(codes[l], codes[l + 1], bit_width);
      if (bit_width == 2) {
        pair.one_bit_agreement = delta_histogram(collapse_to_one_bit(codes[l]),
                                                 collapse_to_one_bit(codes[l + 1]), 1)
                                     .share(0);
      } else {
        pair.one_bit_agreement = pair.histogram.share(0);
      }
      report.push_back(std::move(pair));
    }
  }
  return report;
}

}  // namespace xquant

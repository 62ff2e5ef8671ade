#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "xquant/crosslayer.hpp"
#include "xquant/pipeline.hpp"
#include "xquant/tensor_io.hpp"

namespace xquant {

// Stored code bits per cache element averaged over layers. Parameters and the
// residual window are not counted.
struct BitwidthReport {
  double key = 0.0;
  double value = 0.0;
  double average = 0.0;
};

// Per side: sum over layers of stores_codes(l, m) * bits_for_layer(l, q), divided by L.
BitwidthReport equivalent_bitwidth(const XQuantConfig& cfg, std::size_t num_layers);

// Expected squared error of the relaxed 1-bit mapping on U(0, 1):
// eta^2 - eta / 2 + 1 / 12, for eta in [0, 1/2].
double expected_mse_uniform(double eta);

double mse(std::span<const float> a, std::span<const float> b);
double mse(const Matrix& a, const Matrix& b);

struct MseReport {
  // [layer][side], side 0 = key, 1 = value.
  std::vector<std::array<double, 2>> per_layer;
  double overall = 0.0;
  std::size_t group_count = 0;
  std::size_t element_count = 0;
};

MseReport mse(const TensorDump& a, const TensorDump& b);

struct SimulationReport {
  MseReport mse;
  BitwidthReport bitwidth;
  std::size_t packed_tokens = 0;
  std::size_t residual_tokens = 0;
};

// quantize_cache followed by dequantize_cache, measured against the input.
SimulationReport simulate(const TensorDump& dump, const XQuantConfig& cfg);

struct SweepRow {
  float eta1 = 0.0f;
  float eta2 = 0.0f;
  double mse = 0.0;
};

// One row per (eta1, eta2) pair, eta1 in the outer loop.
std::vector<SweepRow> sweep_eta(const TensorDump& dump, const XQuantConfig& cfg,
                                std::span<const float> eta1_grid, std::span<const float> eta2_grid);

struct LayerPairSimilarity {
  std::size_t layer = 0;  // pair (layer, layer + 1)
  CacheSide side = CacheSide::key;
  DeltaHistogram histogram;
  // Share of positions whose codes agree after mapping 2-bit codes to 1 bit
  // ({0,1} -> 0, {2,3} -> 1). Equals histogram.share(0) for 1-bit input.
  double one_bit_agreement = 0.0;
};

// Quantizes every layer independently (no calibration) with the given grouping
// and compares the codes of adjacent layers. Per-channel grouping uses the
// largest multiple-of-g token prefix. Pairs are ordered key before value,
// then by layer.
std::vector<LayerPairSimilarity> layer_similarity_report(const TensorDump& dump, int bit_width,
                                                         GroupingMode mode, std::size_t group_size);

// Tab-separated reports. Each starts with a '#'-prefixed header line naming
// the columns.
void write_tsv(std::ostream& out, const BitwidthReport& report);
void write_tsv(std::ostream& out, const SimulationReport& report);
void write_tsv(std::ostream& out, std::span<const SweepRow> rows);
void write_tsv(std::ostream& out, std::span<const LayerPairSimilarity> pairs);

void write_json(std::ostream& out, const BitwidthReport& report);
void write_json(std::ostream& out, const SimulationReport& report);
void write_json(std::ostream& out, std::span<const SweepRow> rows);
void write_json(std::ostream& out, std::span<const LayerPairSimilarity> pairs);

}  // namespace xquant

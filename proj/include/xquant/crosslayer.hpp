#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xquant/quant_core.hpp"

namespace xquant {

// Per-layer weights of a merge group; nonnegative, summing to 1 (within 1e-9),
// at least two layers.
class MergeWeights {
 public:
  explicit MergeWeights(std::vector<double> gamma);

  static MergeWeights one_hot(std::size_t group_layers, std::size_t dominant);
  // G = 2 weights (gamma0, 1 - gamma0).
  static MergeWeights pair(double gamma0);

  std::span<const double> gamma() const noexcept { return gamma_; }
  std::size_t size() const noexcept { return gamma_.size(); }

 private:
  std::vector<double> gamma_;
};

// Merged code per position: e_ref + round(sum_l gamma_l * (e_l - e_ref)) where
// e_ref is the last layer of the group; exact ties resolve toward e_ref. Away
// from ties this equals round(sum_l gamma_l * e_l). For G = 2 this is
// e_1 + round(gamma_0 * (e_0 - e_1)), ties toward e_1 for either sign of the
// difference.
std::vector<Code> merge_codes(std::span<const std::vector<Code>> code_arrays,
                              const MergeWeights& weights, int bit_width);

// The dominant layer's codes, unchanged (gamma_k = 1).
std::vector<Code> dominant_share(std::span<const Code> dominant_codes);

enum class GammaInterval : std::uint8_t {
  below_one_sixth,            // [0, 1/6)
  one_sixth_to_quarter,       // (1/6, 1/4)
  quarter_to_half,            // (1/4, 1/2)
  half_to_three_quarters,     // (1/2, 3/4)
  three_quarters_to_five_sixths,  // (3/4, 5/6)
  above_five_sixths,          // (5/6, 1]
};

struct GammaClass {
  GammaInterval interval;
  // Set for the two outer intervals, where every 2-bit merge reproduces one
  // layer's codes: 0 for (5/6, 1], 1 for [0, 1/6).
  std::optional<std::size_t> shared_layer;

  bool accelerated() const noexcept { return shared_layer.has_value(); }
};

const char* interval_label(GammaInterval interval) noexcept;

// Throws ArgumentError outside [0, 1] and AmbiguityError on the boundary points
// {1/6, 1/4, 1/2, 3/4, 5/6}.
GammaClass classify_gamma(double gamma0);

// "(5/6,1] accelerated: share layer 0" style description.
std::string describe(const GammaClass& cls);

struct DeltaHistogram {
  std::vector<std::uint64_t> counts;  // indexed by |e_a - e_b|
  std::uint64_t total = 0;

  double share(std::size_t delta) const noexcept {
    return total == 0 || delta >= counts.size()
               ? 0.0
               : static_cast<double>(counts[delta]) / static_cast<double>(total);
  }
};

DeltaHistogram delta_histogram(std::span<const Code> codes_a, std::span<const Code> codes_b,
                               int bit_width);

// 2-bit codes mapped to 1 bit: {0, 1} -> 0, {2, 3} -> 1.
std::vector<Code> collapse_to_one_bit(std::span<const Code> two_bit_codes);

}  // namespace xquant
